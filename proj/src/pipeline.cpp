#include "clothtrack/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "clothtrack/procedural.hpp"

#ifdef __linux__
#include <sys/utsname.h>
#endif

namespace fs = std::filesystem;

namespace ct {

namespace {

std::string frame_name(int i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d%s", i, ext);
  return buf;
}

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDataError("cannot hash missing file: " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[8192];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i)
      h = (h ^ static_cast<unsigned char>(buf[i])) * 1099511628211ull;
  }
  return h;
}

std::string machine_descriptor() {
  std::ostringstream s;
#ifdef __linux__
  utsname u{};
  if (uname(&u) == 0)
    s << u.sysname << " " << u.machine << " " << u.release;
  else
    s << "unknown";
#else
  s << "unknown";
#endif
  s << ", " << std::thread::hardware_concurrency() << " hw threads";
  return s.str();
}

std::vector<double> parse_double_list(const std::string& text) {
  std::string cleaned = text;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream ss(cleaned);
  std::vector<double> out;
  double v;
  while (ss >> v) out.push_back(v);
  return out;
}

/// LBS through an arbitrary weight table (used for garment pin anchors and
/// the skinning-only baseline, which are not part of the SkinnedBody).
std::vector<Vec3> skin_through(const Skeleton& skel, const std::vector<Rigid>& rest_globals,
                               const Pose& pose, const std::vector<Vec3>& templ,
                               const std::vector<std::vector<SkinWeight>>& weights) {
  std::vector<Rigid> globals = forward_kinematics(skel, pose);
  std::vector<Rigid> G(globals.size());
  for (size_t j = 0; j < globals.size(); ++j) G[j] = globals[j].compose(rest_globals[j].inverse());
  std::vector<Vec3> out(templ.size());
  for (size_t v = 0; v < templ.size(); ++v) {
    Vec3 x = Vec3::Zero();
    for (const auto& sw : weights[v]) x += sw.weight * G[sw.joint].apply(templ[v]);
    out[v] = x;
  }
  return out;
}

bool same_pose(const Pose& a, const Pose& b) {
  if (a.root_translation != b.root_translation) return false;
  if (a.joint_rotations.size() != b.joint_rotations.size()) return false;
  for (size_t j = 0; j < a.joint_rotations.size(); ++j)
    if (a.joint_rotations[j] != b.joint_rotations[j]) return false;
  return true;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write: " + path);
  out << content;
}

}  // namespace

void MultiLayerAvatar::validate(double body_eps) const {
  if (body.mesh.vertex_count() == 0) throw InputError("avatar has no body mesh");
  BodyCollider collider(body.mesh, body.mesh.vertices);
  for (const Garment& g : garments) {
    for (int v = 0; v < g.mesh.vertex_count(); ++v) {
      double sd = collider.closest_point(g.mesh.vertices[v]).signed_distance;
      if (sd <= -body_eps)
        throw InputError("garment '" + g.name + "' penetrates the rest-pose body at vertex " +
                         std::to_string(v) + " (depth " + std::to_string(-sd) + " m)");
    }
    for (int pin : g.pinned)
      if (pin < 0 || pin >= g.mesh.vertex_count())
        throw InputError("garment '" + g.name + "': pinned vertex out of range");
  }
}

Pose Motion::sample(double frame) const {
  if (keyframes.empty()) throw InputError("motion has no keyframes");
  if (frame <= keyframes.front().first) return keyframes.front().second;
  if (frame >= keyframes.back().first) return keyframes.back().second;
  size_t hi = 1;
  while (keyframes[hi].first < frame) ++hi;
  const auto& [ta, pa] = keyframes[hi - 1];
  const auto& [tb, pb] = keyframes[hi];
  double s = (frame - ta) / (tb - ta);
  Pose out = pa;
  out.root_translation = (1.0 - s) * pa.root_translation + s * pb.root_translation;
  for (size_t j = 0; j < out.joint_rotations.size(); ++j)
    out.joint_rotations[j] = (1.0 - s) * pa.joint_rotations[j] + s * pb.joint_rotations[j];
  return out;
}

void save_pose(const std::string& path, const Skeleton& skel, const Pose& pose) {
  std::ostringstream out;
  out.precision(17);
  const Vec3& t = pose.root_translation;
  out << "root " << t.x() << " " << t.y() << " " << t.z() << "\n";
  for (int j = 0; j < skel.joint_count(); ++j) {
    const Vec3& r = pose.joint_rotations[j];
    out << skel.joints[j].name << " " << r.x() << " " << r.y() << " " << r.z() << "\n";
  }
  write_file(path, out.str());
}

Pose load_pose(const std::string& path, const Skeleton& skel) {
  std::ifstream in(path);
  if (!in) throw MissingDataError("cannot open pose file: " + path);
  Pose pose = Pose::rest(skel);
  std::string name;
  if (!(in >> name >> pose.root_translation.x() >> pose.root_translation.y() >>
        pose.root_translation.z()) ||
      name != "root")
    throw InputError(path + ": expected 'root tx ty tz' on the first line");
  for (int j = 0; j < skel.joint_count(); ++j) {
    Vec3 r;
    if (!(in >> name >> r.x() >> r.y() >> r.z()))
      throw InputError(path + ": truncated pose, expected " +
                       std::to_string(skel.joint_count()) + " joints");
    if (name != skel.joints[j].name)
      throw InputError(path + ": joint '" + name + "' does not match skeleton order ('" +
                       skel.joints[j].name + "')");
    pose.joint_rotations[j] = r;
  }
  return pose;
}

double projective_fit_error(const std::vector<Vec3>& positions,
                            const std::vector<uint8_t>& visible, const DepthFrame& frame,
                            double* p95, double* max_err) {
  std::vector<double> dists;
  const Intrinsics& intr = frame.intr;
  for (size_t v = 0; v < positions.size(); ++v) {
    if (!visible.empty() && !visible[v]) continue;
    const Vec3& p = positions[v];
    if (p.z() <= 1e-6) continue;
    Vec2 uv = intr.project(p);
    int u = static_cast<int>(std::lround(uv.x())), vv = static_cast<int>(std::lround(uv.y()));
    if (u < 0 || vv < 0 || u >= intr.width || vv >= intr.height) continue;
    int id = frame.idx(u, vv);
    if (frame.depth[id] <= 0.0f) continue;
    dists.push_back((frame.points[id] - p).norm());
  }
  if (p95) *p95 = 0.0;
  if (max_err) *max_err = 0.0;
  if (dists.empty()) return 0.0;
  double mean = 0.0, mx = 0.0;
  for (double d : dists) {
    mean += d;
    mx = std::max(mx, d);
  }
  mean /= dists.size();
  if (max_err) *max_err = mx;
  if (p95) {
    size_t k = static_cast<size_t>(0.95 * (dists.size() - 1));
    std::nth_element(dists.begin(), dists.begin() + k, dists.end());
    *p95 = dists[k];
  }
  return mean;
}

Scene load_scene(const std::string& path, const std::vector<std::string>& overrides) {
  Config cfg = Config::parse_file(path);
  for (const std::string& o : overrides) cfg.apply_override(o);
  cfg.validate_keys(known_config_keys());

  Scene s;
  s.config = cfg;

  Intrinsics& intr = s.intrinsics;
  intr.fx = cfg.get_double("camera.fx", intr.fx);
  intr.fy = cfg.get_double("camera.fy", intr.fy);
  intr.cx = cfg.get_double("camera.cx", intr.cx);
  intr.cy = cfg.get_double("camera.cy", intr.cy);
  intr.width = cfg.get_int("camera.width", intr.width);
  intr.height = cfg.get_int("camera.height", intr.height);

  const std::string material_gt_name = cfg.get_string("sim.material", "soft");
  s.material_gt = material_preset(material_gt_name);
  s.material_track = material_preset(cfg.get_string("sim_track.material", material_gt_name));

  const std::string procedural = cfg.get_string("avatar.procedural", "basic_humanoid");
  double camera_distance = cfg.get_double("camera.distance", 2.2);
  double camera_height_offset = cfg.get_double("camera.height_offset", 0.27);
  double floor_cam_y = camera_height_offset + 0.55;
  if (!cfg.get_string("avatar.body_mesh", "").empty()) {
    // file assets are authored directly in camera space (+z forward, +y down)
    SkinnedBody& body = s.avatar.body;
    body.mesh = load_mesh(cfg.require_string("avatar.body_mesh"));
    body.skeleton = load_skeleton(cfg.require_string("avatar.skeleton"));
    body.weights = load_skin_weights(cfg.require_string("avatar.weights"),
                                     body.mesh.vertex_count(), body.skeleton.joint_count());
    body.finalize();
    if (cfg.has("avatar.limits"))
      s.avatar.limits = load_joint_limits(cfg.require_string("avatar.limits"), body.skeleton);
    else
      s.avatar.limits.bounds.assign(body.skeleton.joint_count(),
                                    {-M_PI, M_PI, -M_PI, M_PI, -M_PI, M_PI});
    int n_garments = cfg.get_int("avatar.garment_count", 0);
    for (int g = 0; g < n_garments; ++g) {
      std::string prefix = "avatar.garment" + std::to_string(g) + ".";
      Garment garment;
      garment.name = "garment" + std::to_string(g);
      garment.mesh = load_mesh(cfg.require_string(prefix + "mesh"));
      garment.material = material_preset(cfg.get_string(prefix + "material", material_gt_name));
      for (double v : parse_double_list(cfg.get_string(prefix + "pins", "")))
        garment.pinned.push_back(static_cast<int>(v));
      s.avatar.garments.push_back(std::move(garment));
    }
  } else {
    if (procedural != "basic_humanoid")
      throw InputError("unknown procedural avatar: " + procedural);
    HumanoidParams hp;
    hp.material = material_gt_name;
    hp.shirt_edge_target = cfg.get_double("avatar.shirt_edge_target", hp.shirt_edge_target);
    s.avatar = make_basic_humanoid(hp);

    // Procedural assets are built y-up around the pelvis; place them in the
    // camera frame (+z forward, +y down in image coordinates).
    Rigid cam;
    cam.R << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    cam.t = Vec3(0, camera_height_offset, camera_distance);
    SkinnedBody& body = s.avatar.body;
    body.skeleton.joints[0].rest_local = cam.compose(body.skeleton.joints[0].rest_local);
    for (Vec3& v : body.mesh.vertices) v = cam.apply(v);
    for (Garment& g : s.avatar.garments)
      for (Vec3& v : g.mesh.vertices) v = cam.apply(v);
    body.finalize();
  }

  s.n_frames = cfg.get_int("sequence.frames", 60);
  s.noise_sigma_z = cfg.get_double("sequence.noise_sigma_z", 0.0);
  s.noise_dropout = cfg.get_double("sequence.noise_dropout", 0.0);
  s.noise_seed = static_cast<uint64_t>(cfg.get_int("sequence.noise_seed", 1));
  s.drape_seconds = cfg.get_double("sequence.drape_seconds", 2.0);

  SimConfig& sim = s.sim_gt;
  sim.dt = cfg.get_double("sim.dt", sim.dt);
  sim.substeps_per_frame = cfg.get_int("sim.substeps", sim.substeps_per_frame);
  sim.damping = cfg.get_double("sim.damping", sim.damping);
  sim.vertex_mass = cfg.get_double("sim.vertex_mass", sim.vertex_mass);
  // gravity points along +y in the camera frame (the image y axis points down)
  sim.gravity_dir = cfg.get_vec3("sim.gravity_dir", Vec3(0, 1, 0)).normalized();
  sim.gravity_mag = cfg.get_double("sim.gravity_mag", sim.gravity_mag);
  s.sim_track = sim;

  FitParams& fit = s.fit;
  fit.gamma = cfg.get_double("fit.gamma", fit.gamma);
  fit.eta = cfg.get_double("fit.eta", fit.eta);
  fit.sigma_px = cfg.get_double("fit.sigma_px", fit.sigma_px);
  fit.max_dist = cfg.get_double("fit.max_dist", fit.max_dist);
  fit.iterations = cfg.get_int("fit.iterations", fit.iterations);
  fit.overdamp = cfg.get_double("fit.overdamp", fit.overdamp);
  s.blend_ramp_px = cfg.get_double("fit.ramp_px", s.blend_ramp_px);
  s.visibility_tol = cfg.get_double("fit.visibility_tol", s.visibility_tol);

  TrackConfig& track = s.track;
  track.lambda_data = cfg.get_double("track.lambda_data", track.lambda_data);
  track.lambda_pri = cfg.get_double("track.lambda_pri", track.lambda_pri);
  if (cfg.has("track.inter_schedule")) {
    track.inter_schedule = parse_double_list(cfg.require_string("track.inter_schedule"));
    if (track.inter_schedule.empty())
      throw InputError("track.inter_schedule: expected a list of numbers");
  }
  track.icp_iterations = cfg.get_int("track.icp_iterations", track.icp_iterations);
  track.sigma_shift = cfg.get_double("track.sigma_shift", track.sigma_shift);
  track.max_corr_dist = cfg.get_double("track.max_corr_dist", track.max_corr_dist);
  track.max_normal_angle = cfg.get_double("track.max_normal_angle", track.max_normal_angle);
  track.min_pairs = cfg.get_int("track.min_pairs", track.min_pairs);
  track.lambda_point = cfg.get_double("track.lambda_point", track.lambda_point);
  track.lambda_rest = cfg.get_double("track.lambda_rest", track.lambda_rest);
  track.lambda_null = cfg.get_double("track.lambda_null", track.lambda_null);
  track.null_threshold = cfg.get_double("track.null_threshold", track.null_threshold);
  track.inter_margin = cfg.get_double("track.inter_margin", track.inter_margin);
  track.max_step = cfg.get_double("track.max_step", track.max_step);
  track.huber_delta = cfg.get_double("track.huber_delta", track.huber_delta);
  s.rebind_every_frame = cfg.get_bool("track.rebind_every_frame", s.rebind_every_frame);

  CollisionConfig& col = s.collision;
  col.body_eps = cfg.get_double("collision.body_eps", col.body_eps);
  col.cloth_eps = cfg.get_double("collision.cloth_eps", col.cloth_eps);
  col.enable_cloth_cloth = cfg.get_bool("collision.cloth_cloth", col.enable_cloth_cloth);
  col.enable_edge_edge = cfg.get_bool("collision.edge_edge", col.enable_edge_edge);
  col.hash_cell = cfg.get_double("collision.hash_cell", col.hash_cell);
  col.enable_floor = cfg.get_bool("floor.enabled", col.enable_floor);
  col.floor.point = cfg.get_vec3("floor.point", Vec3(0, floor_cam_y, camera_distance));
  col.floor.normal = cfg.get_vec3("floor.normal", Vec3(0, -1, 0)).normalized();

  const std::string motion_type = cfg.get_string("motion.type", "arm_raise");
  int last = std::max(1, s.n_frames - 1);
  if (motion_type == "arm_raise") {
    s.motion = make_arm_raise_motion(s.avatar.body.skeleton, last,
                                     cfg.get_double("motion.amplitude", 1.2));
  } else if (motion_type == "turn") {
    s.motion = make_turn_motion(s.avatar.body.skeleton, last,
                                cfg.get_double("motion.amplitude", M_PI));
  } else if (motion_type == "static") {
    s.motion.keyframes = {{0.0, Pose::rest(s.avatar.body.skeleton)}};
  } else {
    throw InputError("unknown motion.type: " + motion_type + " (arm_raise|turn|static)");
  }
  return s;
}

Engine::Engine(Scene scene) : scene_(std::move(scene)) {
  const MultiLayerAvatar& avatar = scene_.avatar;
  avatar.validate(scene_.collision.body_eps);
  pose_ = Pose::rest(avatar.body.skeleton);

  std::vector<const TriMesh*> garment_meshes;
  std::vector<const std::vector<Vec3>*> garment_rest;
  for (const Garment& g : avatar.garments) {
    springs_.push_back(build_springs(g.mesh, g.mesh.vertices));
    ClothState state = ClothState::at_rest(g.mesh.vertices, scene_.sim_gt.vertex_mass);
    for (int pin : g.pinned) state.pinned[pin] = 1;
    cloth_states_.push_back(std::move(state));

    // pin anchors and the skinning baseline borrow nearest-body-vertex weights
    std::vector<std::vector<SkinWeight>> skin(g.mesh.vertex_count());
    for (int v = 0; v < g.mesh.vertex_count(); ++v) {
      int nearest = 0;
      double best = std::numeric_limits<double>::max();
      for (int b = 0; b < avatar.body.mesh.vertex_count(); ++b) {
        double d = (avatar.body.mesh.vertices[b] - g.mesh.vertices[v]).squaredNorm();
        if (d < best) {
          best = d;
          nearest = b;
        }
      }
      skin[v] = avatar.body.weights[nearest];
    }
    // pin anchors must not inherit blended limb weights: a collar ring dragged
    // by an arm tears the garment apart. Anchor the whole pin set rigidly to
    // the joint that dominates it (majority vote over nearest body vertices).
    if (!g.pinned.empty()) {
      std::map<int, int> votes;
      for (int pin : g.pinned) {
        int best_joint = 0;
        double best_weight = -1.0;
        for (const auto& sw : skin[pin])
          if (sw.weight > best_weight) {
            best_weight = sw.weight;
            best_joint = sw.joint;
          }
        ++votes[best_joint];
      }
      int anchor = std::max_element(votes.begin(), votes.end(), [](const auto& a, const auto& b) {
                     return a.second < b.second;
                   })->first;
      for (int pin : g.pinned) skin[pin] = {{anchor, 1.0}};
    }
    garment_skin_.push_back(std::move(skin));
    garment_meshes.push_back(&g.mesh);
    garment_rest.push_back(&g.mesh.vertices);
  }
  body_prev_ = skin_vertices(avatar.body, pose_);
  body_collider_ = std::make_unique<BodyCollider>(avatar.body.mesh, body_prev_);
  tracker_surface_ = std::make_unique<TrackerSurface>(
      make_tracker_surface(avatar.body, garment_meshes, garment_rest));
}

std::vector<Vec3> Engine::skinning_baseline(int garment, const Pose& pose) const {
  const SkinnedBody& body = scene_.avatar.body;
  return skin_through(body.skeleton, body.rest_globals, pose,
                      scene_.avatar.garments[garment].mesh.vertices, garment_skin_[garment]);
}

DepthFrame Engine::render_ground_truth(
    const Pose& pose, const std::vector<std::vector<Vec3>>& cloth_positions) const {
  std::vector<Vec3> body_pos = skin_vertices(scene_.avatar.body, pose);
  std::vector<MeshInstance> meshes = {{&scene_.avatar.body.mesh, &body_pos}};
  for (size_t g = 0; g < cloth_positions.size(); ++g)
    meshes.push_back({&scene_.avatar.garments[g].mesh, &cloth_positions[g]});
  DepthFrame frame = rasterize_depth(meshes, scene_.intrinsics);
  depth_to_points(frame);
  return frame;
}

void Engine::simulate_garments(const Pose& pose_start, const Pose& pose_end, const SimConfig& cfg,
                               const MaterialParams* material_override) {
  const SkinnedBody& body = scene_.avatar.body;
  const bool body_moves = !same_pose(pose_start, pose_end);
  std::vector<Vec3> body_start = skin_vertices(body, pose_start);
  std::vector<Vec3> body_end = body_moves ? skin_vertices(body, pose_end) : body_start;
  if (!body_moves) body_collider_->update_positions(body_end);

  std::vector<Vec3> body_lerp(body_start.size());
  for (size_t g = 0; g < cloth_states_.size(); ++g) {
    const Garment& garment = scene_.avatar.garments[g];
    ClothState& state = cloth_states_[g];
    std::vector<Vec3> pins_start, pins_end;
    if (!garment.pinned.empty()) {
      std::vector<Vec3> a = skin_through(body.skeleton, body.rest_globals, pose_start,
                                         garment.mesh.vertices, garment_skin_[g]);
      std::vector<Vec3> b = body_moves
                                ? skin_through(body.skeleton, body.rest_globals, pose_end,
                                               garment.mesh.vertices, garment_skin_[g])
                                : a;
      for (int pin : garment.pinned) {
        pins_start.push_back(a[pin]);
        pins_end.push_back(b[pin]);
      }
    }

    CollisionContext ctx(scene_.collision, &garment.mesh);
    ctx.set_body(body_collider_.get());
    std::vector<Vec3> prev = state.positions;
    auto collide = [&](ClothState& s, double fraction) {
      for (size_t k = 0; k < pins_start.size(); ++k) {
        int pin = garment.pinned[k];
        Vec3 target = (1.0 - fraction) * pins_start[k] + fraction * pins_end[k];
        s.velocities[pin] = (target - s.positions[pin]) / cfg.dt;
        s.positions[pin] = target;
      }
      if (body_moves) {
        for (size_t i = 0; i < body_lerp.size(); ++i)
          body_lerp[i] = (1.0 - fraction) * body_start[i] + fraction * body_end[i];
        body_collider_->update_positions(body_lerp);
      }
      ctx.resolve_cloth_cloth(s, prev, cfg.dt);
      ctx.resolve_body_cloth(s);
      ctx.resolve_floor(s);
      prev = s.positions;
    };
    simulate_frame(state, springs_[g], material_override ? *material_override : garment.material,
                   cfg, collide);
  }
}

void Engine::drape() {
  double frame_time = scene_.sim_gt.dt * scene_.sim_gt.substeps_per_frame;
  int frames = std::max(1, static_cast<int>(std::ceil(scene_.drape_seconds / frame_time)));
  for (int f = 0; f < frames; ++f)
    simulate_garments(pose_, pose_, scene_.sim_gt, &scene_.material_gt);
  // the draped configuration is the frame-0 state; it carries no momentum
  for (ClothState& s : cloth_states_)
    std::fill(s.velocities.begin(), s.velocities.end(), Vec3::Zero());
  rebind_tracker_surface();
}

// Binds the tracking template to the current cloth shape so the data term
// measures deviation from the garment as it actually hangs, not from its
// undraped design shape.
void Engine::rebind_tracker_surface() {
  std::vector<const TriMesh*> garment_meshes;
  std::vector<const std::vector<Vec3>*> garment_world;
  for (size_t g = 0; g < cloth_states_.size(); ++g) {
    garment_meshes.push_back(&scene_.avatar.garments[g].mesh);
    garment_world.push_back(&cloth_states_[g].positions);
  }
  tracker_surface_ = std::make_unique<TrackerSurface>(
      make_tracker_surface(scene_.avatar.body, pose_, garment_meshes, garment_world));
}

FrameResult Engine::run_frame(const DepthFrame& frame) {
  FrameResult res;
  double t0 = now_ms();

  TrackResult tracked = track_body(*tracker_surface_, pose_, frame, scene_.avatar.limits,
                                   scene_.track);
  Pose new_pose = tracked.pose;
  res.low_confidence = tracked.low_confidence;
  res.interpenetration_count =
      tracked.inter_counts.empty() ? 0 : tracked.inter_counts.back();
  res.stage_order.push_back(0);
  double t1 = now_ms();

  simulate_garments(pose_, new_pose, scene_.sim_track, &scene_.material_track);
  res.stage_order.push_back(1);
  double t2 = now_ms();

  // self-rendered depth of the predicted scene decides visibility and psi
  std::vector<std::vector<Vec3>> positions;
  for (const ClothState& s : cloth_states_) positions.push_back(s.positions);
  DepthFrame predicted = render_ground_truth(new_pose, positions);
  std::vector<BlendWeightField> blends;
  bool any_visible = false;
  for (size_t g = 0; g < cloth_states_.size(); ++g) {
    std::vector<uint8_t> visible =
        vertex_visibility(cloth_states_[g].positions, predicted, scene_.visibility_tol);
    blends.push_back(make_blend_mask(scene_.avatar.garments[g].mesh, cloth_states_[g].positions,
                                     scene_.intrinsics, scene_.blend_ramp_px, visible));
    for (uint8_t v : visible) any_visible |= (v != 0);
  }
  res.stage_order.push_back(2);
  double t3 = now_ms();

  if (scene_.fit.iterations > 0 && any_visible) {
    body_collider_->update_positions(skin_vertices(scene_.avatar.body, new_pose));
    for (size_t g = 0; g < cloth_states_.size(); ++g) {
      CollisionContext ctx(scene_.collision, &scene_.avatar.garments[g].mesh);
      ctx.set_body(body_collider_.get());
      iterative_depth_fit(cloth_states_[g], springs_[g], scene_.material_track, scene_.sim_track,
                          frame, blends[g], ctx, scene_.fit);
    }
    res.stage_order.push_back(3);
  }
  double t4 = now_ms();

  double max_all = 0.0, mean_sum = 0.0;
  int mean_n = 0;
  for (size_t g = 0; g < cloth_states_.size(); ++g) {
    double mx = 0.0;
    double mean = projective_fit_error(cloth_states_[g].positions, blends[g].visible, frame,
                                       nullptr, &mx);
    max_all = std::max(max_all, mx);
    mean_sum += mean;
    ++mean_n;
  }
  res.fit_error_mean = mean_n ? mean_sum / mean_n : 0.0;
  res.fit_error_max = max_all;

  pose_ = new_pose;
  body_prev_ = skin_vertices(scene_.avatar.body, new_pose);
  if (scene_.rebind_every_frame) rebind_tracker_surface();
  res.pose = pose_;
  res.cloth_states = cloth_states_;
  res.timings.body_tracking_ms = t1 - t0;
  res.timings.cloth_simulation_ms = t2 - t1;
  res.timings.depth_fitting_ms = t4 - t3;
  res.timings.rest_ms = t3 - t2;
  timings_log_.push_back(res.timings);
  return res;
}

namespace {

std::string gt_cloth_dir(int garment) {
  return garment == 0 ? "gt_cloth" : "gt_cloth" + std::to_string(garment);
}

std::string out_cloth_dir(int garment) {
  return garment == 0 ? "cloth" : "cloth" + std::to_string(garment);
}

}  // namespace

void Engine::generate_sequence(const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "depth");
  fs::create_directories(fs::path(out_dir) / "gt_pose");
  for (size_t g = 0; g < cloth_states_.size(); ++g)
    fs::create_directories(fs::path(out_dir) / gt_cloth_dir(static_cast<int>(g)));

  drape();
  for (int i = 0; i < scene_.n_frames; ++i) {
    Pose p = scene_.motion.sample(i);
    if (!same_pose(pose_, p)) simulate_garments(pose_, p, scene_.sim_gt, &scene_.material_gt);
    pose_ = p;

    std::vector<std::vector<Vec3>> positions;
    for (const ClothState& s : cloth_states_) positions.push_back(s.positions);
    DepthFrame frame = render_ground_truth(p, positions);
    if (scene_.noise_sigma_z > 0.0 || scene_.noise_dropout > 0.0)
      add_depth_noise(frame, scene_.noise_sigma_z, scene_.noise_dropout, scene_.noise_seed + i);

    save_depth_raw((fs::path(out_dir) / "depth" / frame_name(i, ".raw")).string(), frame);
    save_pose((fs::path(out_dir) / "gt_pose" / frame_name(i, ".txt")).string(),
              scene_.avatar.body.skeleton, p);
    for (size_t g = 0; g < cloth_states_.size(); ++g)
      save_mesh((fs::path(out_dir) / gt_cloth_dir(static_cast<int>(g)) / frame_name(i, ".obj"))
                    .string(),
                scene_.avatar.garments[g].mesh, cloth_states_[g].positions);
  }
  write_file((fs::path(out_dir) / "manifest.txt").string(),
             "# generated sequence manifest\nframes = " + std::to_string(scene_.n_frames) +
                 "\n" + scene_.config.dump());
}

void Engine::track_sequence(const std::string& seq_dir, const std::string& out_dir) {
  int n = 0;
  while (fs::exists(fs::path(seq_dir) / "depth" / frame_name(n, ".raw"))) ++n;
  if (n == 0) throw MissingDataError("no depth frames under " + seq_dir + "/depth");

  // frame 0 initializes state; it is never tracked
  fs::path pose0 = fs::path(seq_dir) / "gt_pose" / frame_name(0, ".txt");
  if (fs::exists(pose0))
    pose_ = load_pose(pose0.string(), scene_.avatar.body.skeleton);
  else
    pose_ = Pose::rest(scene_.avatar.body.skeleton);

  bool have_cloth0 = true;
  for (size_t g = 0; g < cloth_states_.size(); ++g)
    have_cloth0 &=
        fs::exists(fs::path(seq_dir) / gt_cloth_dir(static_cast<int>(g)) / frame_name(0, ".obj"));
  if (have_cloth0) {
    for (size_t g = 0; g < cloth_states_.size(); ++g) {
      TriMesh m = load_mesh(
          (fs::path(seq_dir) / gt_cloth_dir(static_cast<int>(g)) / frame_name(0, ".obj"))
              .string());
      if (m.vertex_count() != cloth_states_[g].vertex_count())
        throw InputError("frame-0 cloth vertex count does not match the scene garment");
      cloth_states_[g].positions = m.vertices;
      std::fill(cloth_states_[g].velocities.begin(), cloth_states_[g].velocities.end(),
                Vec3::Zero());
    }
  } else {
    drape();
  }
  rebind_tracker_surface();
  body_prev_ = skin_vertices(scene_.avatar.body, pose_);
  body_collider_->update_positions(body_prev_);

  fs::create_directories(fs::path(out_dir) / "pose");
  for (size_t g = 0; g < cloth_states_.size(); ++g)
    fs::create_directories(fs::path(out_dir) / out_cloth_dir(static_cast<int>(g)));

  std::ostringstream csv;
  csv.precision(9);
  csv << "frame,fit_mean,fit_max,interpenetrations,low_confidence,track_ms,sim_ms,fit_ms,"
         "rest_ms\n";
  auto write_frame = [&](int i) {
    save_pose((fs::path(out_dir) / "pose" / frame_name(i, ".txt")).string(),
              scene_.avatar.body.skeleton, pose_);
    for (size_t g = 0; g < cloth_states_.size(); ++g)
      save_mesh((fs::path(out_dir) / out_cloth_dir(static_cast<int>(g)) / frame_name(i, ".obj"))
                    .string(),
                scene_.avatar.garments[g].mesh, cloth_states_[g].positions);
  };

  timings_log_.clear();
  write_frame(0);
  csv << "0,0,0,0,0,0,0,0,0\n";
  for (int i = 1; i < n; ++i) {
    DepthFrame frame =
        load_depth_raw((fs::path(seq_dir) / "depth" / frame_name(i, ".raw")).string());
    FrameResult r = run_frame(frame);
    write_frame(i);
    // timings are wall-clock and excluded from the determinism contract;
    // they are rounded out of the CSV entirely
    csv << i << "," << r.fit_error_mean << "," << r.fit_error_max << ","
        << r.interpenetration_count << "," << (r.low_confidence ? 1 : 0) << ",0,0,0,0\n";
  }
  write_file((fs::path(out_dir) / "metrics.csv").string(), csv.str());

  std::ostringstream manifest;
  manifest << "# tracking run manifest\n" << scene_.config.dump();
  manifest << std::hex;
  for (int i = 0; i < n; ++i) {
    std::string p = (fs::path(seq_dir) / "depth" / frame_name(i, ".raw")).string();
    manifest << "input " << p << " fnv1a64=" << fnv1a_file(p) << "\n";
  }
  write_file((fs::path(out_dir) / "manifest.txt").string(), manifest.str());
}

void Engine::evaluate(const std::string& track_dir, const std::string& seq_dir,
                      const std::string& out_csv) {
  int n = 0;
  while (fs::exists(fs::path(track_dir) / "pose" / frame_name(n, ".txt"))) ++n;
  int m = 0;
  while (fs::exists(fs::path(seq_dir) / "gt_pose" / frame_name(m, ".txt"))) ++m;
  if (n == 0) throw MissingDataError("no tracked poses under " + track_dir);
  if (m != n)
    throw InputError("frame count mismatch: " + std::to_string(n) + " tracked vs " +
                     std::to_string(m) + " ground truth");

  const Skeleton& skel = scene_.avatar.body.skeleton;
  std::ostringstream csv;
  csv.precision(9);
  csv << "frame,fit_mean,fit_p95,cloth_rmse_visible,cloth_rmse_occluded,pose_rmse,"
         "interpenetrations\n";
  for (int i = 0; i < n; ++i) {
    Pose tracked = load_pose((fs::path(track_dir) / "pose" / frame_name(i, ".txt")).string(), skel);
    Pose gt = load_pose((fs::path(seq_dir) / "gt_pose" / frame_name(i, ".txt")).string(), skel);
    double pose_sq = (tracked.root_translation - gt.root_translation).squaredNorm();
    for (int j = 0; j < skel.joint_count(); ++j)
      pose_sq += (tracked.joint_rotations[j] - gt.joint_rotations[j]).squaredNorm();
    double pose_rmse = std::sqrt(pose_sq / tracked.param_count());

    DepthFrame frame =
        load_depth_raw((fs::path(seq_dir) / "depth" / frame_name(i, ".raw")).string());

    double vis_sq = 0.0, occ_sq = 0.0;
    int vis_n = 0, occ_n = 0;
    std::vector<Vec3> tracked_all;
    std::vector<uint8_t> tracked_vis_all;
    for (size_t g = 0; g < scene_.avatar.garments.size(); ++g) {
      TriMesh gt_cloth = load_mesh(
          (fs::path(seq_dir) / gt_cloth_dir(static_cast<int>(g)) / frame_name(i, ".obj"))
              .string());
      TriMesh tr_cloth = load_mesh(
          (fs::path(track_dir) / out_cloth_dir(static_cast<int>(g)) / frame_name(i, ".obj"))
              .string());
      if (gt_cloth.vertex_count() != tr_cloth.vertex_count())
        throw InputError("cloth vertex count mismatch at frame " + std::to_string(i));
      std::vector<uint8_t> gt_visible =
          vertex_visibility(gt_cloth.vertices, frame, scene_.visibility_tol);
      for (int v = 0; v < gt_cloth.vertex_count(); ++v) {
        double d2 = (gt_cloth.vertices[v] - tr_cloth.vertices[v]).squaredNorm();
        if (gt_visible[v]) {
          vis_sq += d2;
          ++vis_n;
        } else {
          occ_sq += d2;
          ++occ_n;
        }
      }
      std::vector<uint8_t> tr_visible =
          vertex_visibility(tr_cloth.vertices, frame, scene_.visibility_tol);
      tracked_all.insert(tracked_all.end(), tr_cloth.vertices.begin(), tr_cloth.vertices.end());
      tracked_vis_all.insert(tracked_vis_all.end(), tr_visible.begin(), tr_visible.end());
    }
    double p95 = 0.0;
    double fit_mean = projective_fit_error(tracked_all, tracked_vis_all, frame, &p95);

    std::vector<Vec3> body_posed(tracker_surface_->pose_positions(tracked));
    body_posed.resize(tracker_surface_->body_vertex_count);
    int inter = static_cast<int>(find_interpenetrations(body_posed, frame, scene_.track).size());

    csv << i << "," << fit_mean << "," << p95 << ","
        << (vis_n ? std::sqrt(vis_sq / vis_n) : 0.0) << ","
        << (occ_n ? std::sqrt(occ_sq / occ_n) : 0.0) << "," << pose_rmse << "," << inter << "\n";
  }
  write_file(out_csv, csv.str());
}

void Engine::bench(const std::string& out_csv, int n_frames) {
  if (n_frames > 0) scene_.n_frames = n_frames;
  fs::path work = fs::path(out_csv).parent_path();
  if (work.empty()) work = ".";
  fs::path seq = work / "bench_seq";
  fs::path out = work / "bench_out";
  generate_sequence(seq.string());
  track_sequence(seq.string(), out.string());

  auto stat = [&](auto pick) {
    std::vector<double> v;
    for (const StageTimings& t : timings_log_) v.push_back(pick(t));
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= std::max<size_t>(1, v.size());
    double p95 = 0.0;
    if (!v.empty()) {
      size_t k = static_cast<size_t>(0.95 * (v.size() - 1));
      std::nth_element(v.begin(), v.begin() + k, v.end());
      p95 = v[k];
    }
    return std::pair<double, double>(mean, p95);
  };

  std::ostringstream csv;
  csv.precision(6);
  csv << "# machine: " << machine_descriptor() << "\n";
  csv << "stage,mean_ms,p95_ms\n";
  auto [tm, tp] = stat([](const StageTimings& t) { return t.body_tracking_ms; });
  csv << "body_tracking," << tm << "," << tp << "\n";
  auto [sm, sp] = stat([](const StageTimings& t) { return t.cloth_simulation_ms; });
  csv << "cloth_simulation," << sm << "," << sp << "\n";
  auto [fm, fp] = stat([](const StageTimings& t) { return t.depth_fitting_ms; });
  csv << "depth_fitting," << fm << "," << fp << "\n";
  auto [rm, rp] = stat([](const StageTimings& t) { return t.rest_ms; });
  csv << "rest," << rm << "," << rp << "\n";
  write_file(out_csv, csv.str());
}

}  // namespace ct
