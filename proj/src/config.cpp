#include "clothtrack/config.hpp"

#include <fstream>
#include <sstream>

namespace ct {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw InputError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw InputError(origin + ":" + std::to_string(lineno) + ": empty key");
    std::string full = section.empty() ? key : section + "." + key;
    cfg.values_[full] = value;
  }
  return cfg;
}

void Config::apply_override(const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw InputError("override must be section.key=value: " + assignment);
  values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::string Config::get_string(const std::string& key, const std::string& def) const {
  auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

std::string Config::require_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw InputError("missing required config key: " + key);
  return it->second;
}

double Config::get_double(const std::string& key, double def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw InputError("config key " + key + ": not a number: " + it->second);
  }
}

int Config::get_int(const std::string& key, int def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  try {
    size_t pos = 0;
    int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw InputError("config key " + key + ": not an integer: " + it->second);
  }
}

bool Config::get_bool(const std::string& key, bool def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw InputError("config key " + key + ": not a boolean: " + v);
}

Vec3 Config::get_vec3(const std::string& key, const Vec3& def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  std::istringstream ss(it->second);
  Vec3 v;
  if (!(ss >> v.x() >> v.y() >> v.z()))
    throw InputError("config key " + key + ": expected three numbers: " + it->second);
  return v;
}

void Config::validate_keys(const std::set<std::string>& known) const {
  std::string bad;
  for (const auto& [k, v] : values_) {
    if (!known.count(k)) bad += (bad.empty() ? "" : ", ") + k;
  }
  if (!bad.empty()) throw InputError("unknown config keys: " + bad);
}

std::string Config::dump() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      // avatar assets
      "avatar.procedural", "avatar.body_mesh", "avatar.skeleton", "avatar.weights",
      "avatar.limits", "avatar.garment_count",
      "avatar.garment0.mesh", "avatar.garment0.material", "avatar.garment0.pins",
      "avatar.garment1.mesh", "avatar.garment1.material", "avatar.garment1.pins",
      "avatar.shirt_edge_target",
      // camera
      "camera.fx", "camera.fy", "camera.cx", "camera.cy", "camera.width", "camera.height",
      "camera.distance", "camera.height_offset",
      // motion
      "motion.type", "motion.amplitude", "motion.file",
      // sequence
      "sequence.frames", "sequence.noise_sigma_z", "sequence.noise_dropout",
      "sequence.noise_seed", "sequence.drape_seconds",
      // simulation (ground truth and tracking sides)
      "sim.dt", "sim.substeps", "sim.damping", "sim.vertex_mass",
      "sim.gravity_dir", "sim.gravity_mag", "sim.material",
      "sim_track.material",
      // fitting
      "fit.gamma", "fit.eta", "fit.sigma_px", "fit.max_dist", "fit.iterations", "fit.overdamp",
      "fit.ramp_px", "fit.visibility_tol",
      // tracking
      "track.lambda_data", "track.lambda_pri", "track.inter_schedule",
      "track.icp_iterations", "track.sigma_shift", "track.max_corr_dist",
      "track.max_normal_angle", "track.min_pairs",
      "track.lambda_point", "track.lambda_rest", "track.lambda_null",
      "track.null_threshold", "track.inter_margin", "track.max_step",
      "track.huber_delta", "track.rebind_every_frame",
      // collision
      "collision.body_eps", "collision.cloth_eps", "collision.cloth_cloth",
      "collision.edge_edge", "collision.hash_cell",
      "floor.point", "floor.normal", "floor.enabled",
  };
  return keys;
}

}  // namespace ct
