#pragma once

#include "clothtrack/pipeline.hpp"

namespace ct {

/// Regular (nx+1)x(ny+1) vertex grid in the xz plane at the given height,
/// edge length `spacing`. Used as the standard drape/test sheet.
TriMesh make_grid_cloth(int nx, int ny, double spacing, double height = 0.0);

/// Closed UV-sphere (for analytic-SDF collision tests).
TriMesh make_uv_sphere(const Vec3& center, double radius, int rings, int segments);

/// Closed capped cylinder along +y from base, outward-oriented. A distinct
/// radius_z gives an elliptical cross-section (twist about the axis becomes
/// observable to depth tracking, like a real limb).
TriMesh make_capped_cylinder(const Vec3& base, double radius, double height, int segments,
                             int rings, double radius_z = -1.0);

struct HumanoidParams {
  double torso_radius = 0.13;
  double torso_height = 0.55;
  double arm_radius = 0.045;
  double arm_length = 0.52;
  int torso_segments = 24;
  int torso_rings = 14;
  int arm_segments = 12;
  int arm_rings = 12;
  // Garment tube around the torso.
  double shirt_radius = 0.165;
  double shirt_length = 0.48;
  int shirt_segments = 0;   // 0 = pick so edge length ~ shirt_edge_target
  int shirt_rings = 0;
  double shirt_edge_target = 0.02;
  std::string material = "soft";
};

/// Procedural articulated test avatar: capsule-ish torso with two arms,
/// skeleton {root, chest, l_shoulder, l_elbow, r_shoulder, r_elbow},
/// proximity-based skin weights, and a tube "shirt" garment pinned at the
/// top ring. Built in a y-up frame with the pelvis at the origin.
MultiLayerAvatar make_basic_humanoid(const HumanoidParams& params = {});

/// Arm-raise motion for the basic humanoid: both shoulders rotate the arms
/// from hanging to horizontal over [0, n_frames].
Motion make_arm_raise_motion(const Skeleton& skel, int n_frames, double amplitude_rad = 1.2);

/// Root turn: rotates the whole body about +y by `angle_rad` over the
/// sequence (the occlusion scenario).
Motion make_turn_motion(const Skeleton& skel, int n_frames, double angle_rad = 3.14159265358979);

}  // namespace ct
