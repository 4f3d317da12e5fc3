#pragma once

#include <string>
#include <vector>

#include "clothtrack/core.hpp"
#include "clothtrack/mesh.hpp"

namespace ct {

struct Joint {
  std::string name;
  int parent = -1;  // -1 for root; parents precede children
  Rigid rest_local;
};

struct Skeleton {
  std::vector<Joint> joints;
  int joint_count() const { return static_cast<int>(joints.size()); }
  int find_joint(const std::string& name) const;  // -1 if absent
};

/// Root translation plus one axis-angle rotation per joint.
struct Pose {
  Vec3 root_translation = Vec3::Zero();
  std::vector<Vec3> joint_rotations;

  static Pose rest(const Skeleton& skel) {
    Pose p;
    p.joint_rotations.assign(skel.joints.size(), Vec3::Zero());
    return p;
  }
  int param_count() const { return 3 + 3 * static_cast<int>(joint_rotations.size()); }
  /// Wraps every axis-angle so its magnitude stays below pi.
  void rewrap();
};

struct SkinWeight {
  int joint = 0;
  double weight = 0.0;
};

struct SkinnedBody {
  Skeleton skeleton;
  TriMesh mesh;  // rest-pose template
  std::vector<std::vector<SkinWeight>> weights;  // <= 4 influences, sum 1

  std::vector<Rigid> rest_globals;  // accumulated rest transforms, built once

  void finalize();  // builds rest_globals, validates weights
};

/// Per-joint global transforms for a pose:
/// G[j] = G[parent] * rest_local[j] * Rot(theta_j), root also translated.
std::vector<Rigid> forward_kinematics(const Skeleton& skel, const Pose& pose);

/// Linear blend skinning of the template through the given global joint
/// transforms.
std::vector<Vec3> skin_vertices(const SkinnedBody& body, const std::vector<Rigid>& globals);
std::vector<Vec3> skin_vertices(const SkinnedBody& body, const Pose& pose);

/// Analytic d(posed position)/d(pose params) for the listed vertices.
/// Each block is 3 x (3 + 3J): root translation columns first, then one
/// 3-column block per joint axis-angle.
std::vector<MatX> pose_jacobian(const SkinnedBody& body, const Pose& pose,
                                const std::vector<int>& vertex_ids);

Mat3 axis_angle_to_matrix(const Vec3& aa);
Vec3 matrix_to_axis_angle(const Mat3& R);
/// Right Jacobian of SO(3): exp(theta + d) ~ exp(theta) * exp(Jr(theta) d).
Mat3 so3_right_jacobian(const Vec3& aa);

Skeleton load_skeleton(const std::string& path);
void save_skeleton(const std::string& path, const Skeleton& skel);
std::vector<std::vector<SkinWeight>> load_skin_weights(const std::string& path, int vertex_count,
                                                       int joint_count);
void save_skin_weights(const std::string& path, const std::vector<std::vector<SkinWeight>>& w);

struct JointLimits {
  // Per joint, per axis [lo, hi] in radians.
  std::vector<std::array<double, 6>> bounds;
};
JointLimits load_joint_limits(const std::string& path, const Skeleton& skel);

}  // namespace ct
