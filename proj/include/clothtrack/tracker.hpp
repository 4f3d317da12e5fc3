#pragma once

#include <vector>

#include "clothtrack/body.hpp"
#include "clothtrack/depthcam.hpp"

namespace ct {

struct TrackConfig {
  double lambda_data = 1.0;
  // small point-to-point share of the data term; pure point-to-plane leaves
  // translation along a dominant surface direction unconstrained (a draped
  // tube has almost no upward-facing pixels, so root height drifts)
  double lambda_point = 0.1;
  double lambda_pri = 0.01;
  // weak absolute pull toward rest; leashes random-walk drift in directions
  // the depth data cannot observe (twist about a near-symmetric limb)
  double lambda_rest = 0.002;
  // unobservable-direction leash: eigendirections of the data normal matrix
  // with eigenvalue below null_threshold (twist about near-symmetric limbs,
  // straight-arm elbow rotations) are pulled toward rest with lambda_null.
  // Observable directions sit orders of magnitude above the threshold and
  // are left untouched, so this adds no bias to actual articulation.
  double null_threshold = 0.1;
  double lambda_null = 0.3;
  std::vector<double> inter_schedule = {1.0, 1.0, 1.0, 10.0, 10.0, 10.0};
  int icp_iterations = 6;
  double sigma_shift = 0.005;      // interpenetration target offset (m)
  // classification slack before a vertex counts as piercing the observation;
  // must absorb pixel-footprint depth spread on glancing surfaces (thin limbs)
  double inter_margin = 0.008;
  double max_corr_dist = 0.10;     // ICP gating distance (m)
  double max_normal_angle = 1.0471975511965976;  // 60 deg
  int min_pairs = 50;
  double max_step = 0.2;           // per-iteration trust region (rad / m)
  double huber_delta = 0.01;       // data-term robustness threshold (m)
  double self_occlusion_tol = 0.003;  // visibility slack in the self-render (m)
};

struct DataPair {
  int vertex = 0;
  Vec3 target = Vec3::Zero();
  Vec3 target_normal = Vec3::Zero();
};

struct InterPair {
  int vertex = 0;       // body vertex id
  Vec3 target = Vec3::Zero();  // u_c - n_{u_c} * sigma
};

struct Correspondences {
  std::vector<DataPair> data;
  std::vector<InterPair> inter;
  const Pose* anchor = nullptr;  // prior target; nullptr means the rest pose
};

struct TrackResult {
  Pose pose;
  bool low_confidence = false;
  bool diverged = false;
  std::vector<int> inter_counts;   // |Q| per ICP iteration
  std::vector<double> energies;
};

/// The surface the data term fits: the skinned body plus garment vertices
/// rigidly bound (for tracking only) to their nearest body vertex.
struct TrackerSurface {
  Skeleton skeleton;
  TriMesh mesh;                                   // body + garments combined
  std::vector<std::vector<SkinWeight>> weights;
  std::vector<Rigid> rest_globals;
  int body_vertex_count = 0;                      // prefix of mesh vertices

  std::vector<Vec3> pose_positions(const Pose& pose) const;
  std::vector<MatX> jacobians(const Pose& pose, const std::vector<int>& vertex_ids) const;
};

TrackerSurface make_tracker_surface(const SkinnedBody& body,
                                    const std::vector<const TriMesh*>& garments,
                                    const std::vector<const std::vector<Vec3>*>& garment_rest);

/// Rebind against a posed snapshot: garment positions are world-space, paired
/// with the nearest posed body vertex and inverse-skinned into template space
/// so that pose_positions(pose) reproduces them exactly. Rebinding every frame
/// keeps the tracked surface aligned with the simulated garment state.
TrackerSurface make_tracker_surface(const SkinnedBody& body, const Pose& pose,
                                    const std::vector<const TriMesh*>& garments,
                                    const std::vector<const std::vector<Vec3>*>& garment_world);

/// Projective point-to-plane pairs for visible surface vertices, gated by
/// distance and normal angle.
std::vector<DataPair> find_data_correspondences(const TrackerSurface& surface,
                                                const std::vector<Vec3>& posed,
                                                const DepthFrame& frame, const TrackConfig& cfg);

/// Body vertices in front of the observed depth at their pixel, paired with
/// a target just behind the observation.
std::vector<InterPair> find_interpenetrations(const std::vector<Vec3>& body_posed,
                                              const DepthFrame& frame, const TrackConfig& cfg);

/// Total tracking energy and (optionally) its Gauss-Newton system for a
/// frozen correspondence set. Exposed for gradient verification.
double tracking_energy(const TrackerSurface& surface, const Pose& pose,
                       const Correspondences& corr, const JointLimits& limits,
                       const TrackConfig& cfg, double lambda_inter, MatX* JtJ = nullptr,
                       VecX* Jtr = nullptr);

TrackResult track_body(const TrackerSurface& surface, const Pose& prev_pose,
                       const DepthFrame& frame, const JointLimits& limits,
                       const TrackConfig& cfg);

}  // namespace ct
