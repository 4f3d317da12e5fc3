#include "clothtrack/body.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace ct {

namespace {
Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}
}  // namespace

Mat3 axis_angle_to_matrix(const Vec3& aa) {
  double angle = aa.norm();
  if (angle < 1e-12) {
    // second-order Taylor keeps the map smooth through zero
    Mat3 K = skew(aa);
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

Vec3 matrix_to_axis_angle(const Mat3& R) {
  Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

Mat3 so3_right_jacobian(const Vec3& aa) {
  double t = aa.norm();
  Mat3 K = skew(aa);
  if (t < 1e-6) return Mat3::Identity() - 0.5 * K + (1.0 / 6.0) * K * K;
  double t2 = t * t;
  return Mat3::Identity() - ((1.0 - std::cos(t)) / t2) * K +
         ((t - std::sin(t)) / (t2 * t)) * K * K;
}

void Pose::rewrap() {
  for (Vec3& aa : joint_rotations) {
    double angle = aa.norm();
    if (angle >= M_PI) {
      double wrapped = std::fmod(angle + M_PI, 2.0 * M_PI) - M_PI;
      aa *= wrapped / angle;
    }
  }
}

int Skeleton::find_joint(const std::string& name) const {
  for (int j = 0; j < joint_count(); ++j)
    if (joints[j].name == name) return j;
  return -1;
}

std::vector<Rigid> forward_kinematics(const Skeleton& skel, const Pose& pose) {
  if (static_cast<int>(pose.joint_rotations.size()) != skel.joint_count())
    throw InputError("forward_kinematics: pose dimension mismatch");
  std::vector<Rigid> globals(skel.joints.size());
  for (int j = 0; j < skel.joint_count(); ++j) {
    Rigid local = skel.joints[j].rest_local;
    Rigid rot{axis_angle_to_matrix(pose.joint_rotations[j]), Vec3::Zero()};
    Rigid own = local.compose(rot);
    if (skel.joints[j].parent < 0) {
      globals[j] = own;
      globals[j].t += pose.root_translation;
    } else {
      globals[j] = globals[skel.joints[j].parent].compose(own);
    }
  }
  return globals;
}

void SkinnedBody::finalize() {
  if (weights.size() != mesh.vertices.size())
    throw InputError("skinned body: weight count != vertex count");
  for (size_t v = 0; v < weights.size(); ++v) {
    if (weights[v].empty() || weights[v].size() > 4)
      throw InputError("skinned body: vertex " + std::to_string(v) +
                       " must have 1..4 influences");
    double sum = 0.0;
    for (const auto& sw : weights[v]) {
      if (sw.joint < 0 || sw.joint >= skeleton.joint_count())
        throw InputError("skinned body: bad joint index at vertex " + std::to_string(v));
      if (sw.weight < -1e-9)
        throw InputError("skinned body: negative weight at vertex " + std::to_string(v));
      sum += sw.weight;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw InputError("skinned body: weights at vertex " + std::to_string(v) +
                       " sum to " + std::to_string(sum));
  }
  rest_globals.resize(skeleton.joints.size());
  for (int j = 0; j < skeleton.joint_count(); ++j) {
    int p = skeleton.joints[j].parent;
    rest_globals[j] = p < 0 ? skeleton.joints[j].rest_local
                            : rest_globals[p].compose(skeleton.joints[j].rest_local);
  }
}

static std::vector<Vec3> skin_with(const std::vector<Vec3>& templ,
                                   const std::vector<std::vector<SkinWeight>>& weights,
                                   const std::vector<Rigid>& rest_globals,
                                   const std::vector<Rigid>& globals) {
  std::vector<Vec3> out(templ.size());
  std::vector<Rigid> G(globals.size());
  for (size_t j = 0; j < globals.size(); ++j) G[j] = globals[j].compose(rest_globals[j].inverse());
  for (size_t v = 0; v < templ.size(); ++v) {
    Vec3 x = Vec3::Zero();
    for (const auto& sw : weights[v]) x += sw.weight * G[sw.joint].apply(templ[v]);
    out[v] = x;
  }
  return out;
}

std::vector<Vec3> skin_vertices(const SkinnedBody& body, const std::vector<Rigid>& globals) {
  return skin_with(body.mesh.vertices, body.weights, body.rest_globals, globals);
}

std::vector<Vec3> skin_vertices(const SkinnedBody& body, const Pose& pose) {
  return skin_vertices(body, forward_kinematics(body.skeleton, pose));
}

/// Shared Jacobian assembly for any LBS surface over the skeleton.
std::vector<MatX> lbs_pose_jacobian(const Skeleton& skel, const Pose& pose,
                                    const std::vector<Rigid>& rest_globals,
                                    const std::vector<Vec3>& templ,
                                    const std::vector<std::vector<SkinWeight>>& weights,
                                    const std::vector<int>& vertex_ids) {
  const int J = skel.joint_count();
  std::vector<Rigid> globals = forward_kinematics(skel, pose);
  std::vector<Rigid> G(J);
  for (int j = 0; j < J; ++j) G[j] = globals[j].compose(rest_globals[j].inverse());

  // ancestors[k] = sorted chain root..k
  std::vector<std::vector<int>> chain(J);
  for (int k = 0; k < J; ++k) {
    int p = skel.joints[k].parent;
    if (p >= 0) chain[k] = chain[p];
    chain[k].push_back(k);
  }
  std::vector<Mat3> Jr(J);
  for (int j = 0; j < J; ++j) Jr[j] = so3_right_jacobian(pose.joint_rotations[j]);

  std::vector<MatX> out;
  out.reserve(vertex_ids.size());
  for (int vid : vertex_ids) {
    MatX Jv = MatX::Zero(3, 3 + 3 * J);
    Jv.block<3, 3>(0, 0) = Mat3::Identity();  // root translation
    for (const auto& sw : weights[vid]) {
      const int k = sw.joint;
      const Vec3 xk = G[k].apply(templ[vid]);  // this influence's rigid candidate
      for (int j : chain[k]) {
        // R(theta_j + d) ~ R(theta_j) * exp(Jr d): the posed point swings
        // about joint j's frame, p expressed in that frame.
        const Vec3 p = globals[j].inverse().apply(xk);
        Jv.block<3, 3>(0, 3 + 3 * j) += sw.weight * (globals[j].R * (-skew(p)) * Jr[j]);
      }
    }
    out.push_back(std::move(Jv));
  }
  return out;
}

std::vector<MatX> pose_jacobian(const SkinnedBody& body, const Pose& pose,
                                const std::vector<int>& vertex_ids) {
  return lbs_pose_jacobian(body.skeleton, pose, body.rest_globals, body.mesh.vertices,
                           body.weights, vertex_ids);
}

Skeleton load_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open skeleton file: " + path);
  Skeleton skel;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Joint j;
    double qx, qy, qz, qw;
    if (!(ss >> j.name >> j.parent >> j.rest_local.t.x() >> j.rest_local.t.y() >>
          j.rest_local.t.z() >> qx >> qy >> qz >> qw))
      throw InputError(path + ":" + std::to_string(lineno) + ": malformed joint line");
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (std::abs(q.norm() - 1.0) > 1e-3)
      throw InputError(path + ":" + std::to_string(lineno) + ": non-unit quaternion");
    j.rest_local.R = q.normalized().toRotationMatrix();
    int own = static_cast<int>(skel.joints.size());
    if (j.parent >= own || (own == 0 && j.parent != -1))
      throw InputError(path + ":" + std::to_string(lineno) +
                       ": joints must be topologically sorted (parent before child)");
    skel.joints.push_back(j);
  }
  if (skel.joints.empty()) throw InputError(path + ": empty skeleton");
  return skel;
}

void save_skeleton(const std::string& path, const Skeleton& skel) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write skeleton file: " + path);
  for (const Joint& j : skel.joints) {
    Eigen::Quaterniond q(j.rest_local.R);
    out << j.name << " " << j.parent << " " << j.rest_local.t.x() << " " << j.rest_local.t.y()
        << " " << j.rest_local.t.z() << " " << q.x() << " " << q.y() << " " << q.z() << " "
        << q.w() << "\n";
  }
}

std::vector<std::vector<SkinWeight>> load_skin_weights(const std::string& path, int vertex_count,
                                                       int joint_count) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open weights file: " + path);
  std::vector<std::vector<SkinWeight>> weights(vertex_count);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    int vid;
    if (!(ss >> vid)) throw InputError(path + ":" + std::to_string(lineno) + ": bad vertex id");
    if (vid < 0 || vid >= vertex_count)
      throw InputError(path + ":" + std::to_string(lineno) + ": vertex id out of range");
    std::string tok;
    while (ss >> tok) {
      size_t colon = tok.find(':');
      if (colon == std::string::npos)
        throw InputError(path + ":" + std::to_string(lineno) + ": expected joint:weight");
      SkinWeight sw;
      sw.joint = std::stoi(tok.substr(0, colon));
      sw.weight = std::stod(tok.substr(colon + 1));
      if (sw.joint < 0 || sw.joint >= joint_count)
        throw InputError(path + ":" + std::to_string(lineno) + ": joint index out of range");
      weights[vid].push_back(sw);
    }
  }
  return weights;
}

void save_skin_weights(const std::string& path, const std::vector<std::vector<SkinWeight>>& w) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write weights file: " + path);
  for (size_t v = 0; v < w.size(); ++v) {
    out << v;
    for (const auto& sw : w[v]) out << " " << sw.joint << ":" << sw.weight;
    out << "\n";
  }
}

JointLimits load_joint_limits(const std::string& path, const Skeleton& skel) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open joint limits file: " + path);
  JointLimits limits;
  limits.bounds.assign(skel.joint_count(), {-M_PI, M_PI, -M_PI, M_PI, -M_PI, M_PI});
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string name;
    std::array<double, 6> b;
    if (!(ss >> name >> b[0] >> b[1] >> b[2] >> b[3] >> b[4] >> b[5]))
      throw InputError(path + ":" + std::to_string(lineno) + ": malformed limits line");
    int j = skel.find_joint(name);
    if (j < 0) throw InputError(path + ":" + std::to_string(lineno) + ": unknown joint " + name);
    limits.bounds[j] = b;
  }
  return limits;
}

}  // namespace ct
