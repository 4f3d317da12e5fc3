#pragma once

#include <string>
#include <vector>

#include "clothtrack/body.hpp"
#include "clothtrack/collision.hpp"
#include "clothtrack/config.hpp"
#include "clothtrack/depthcam.hpp"
#include "clothtrack/fitting.hpp"
#include "clothtrack/simcore.hpp"
#include "clothtrack/tracker.hpp"

namespace ct {

struct Garment {
  std::string name;
  TriMesh mesh;
  MaterialParams material;
  std::vector<int> pinned;  // vertex ids anchored to the body
};

/// Body plus simulation-ready garments in one coordinate frame. Garments
/// must be collision-free against the rest-pose body when loaded.
struct MultiLayerAvatar {
  SkinnedBody body;
  JointLimits limits;
  std::vector<Garment> garments;

  void validate(double body_eps) const;
};

/// Pose keyframes, linearly interpolated in parameter space.
struct Motion {
  std::vector<std::pair<double, Pose>> keyframes;  // (frame index, pose)
  Pose sample(double frame) const;
};

struct Scene {
  Config config;
  MultiLayerAvatar avatar;
  Intrinsics intrinsics;
  Motion motion;
  int n_frames = 60;
  double noise_sigma_z = 0.0;     // generation-time sensor noise
  double noise_dropout = 0.0;
  uint64_t noise_seed = 1;

  SimConfig sim_gt;               // generation config
  SimConfig sim_track;            // tracking-side config (may differ)
  MaterialParams material_gt;
  MaterialParams material_track;
  CollisionConfig collision;
  FitParams fit;
  TrackConfig track;
  double blend_ramp_px = 8.0;
  double visibility_tol = 0.005;
  double drape_seconds = 2.0;
  // re-fit the tracking template to the simulated garment every frame.
  // Keeps the template honest when the garment slides relative to the body,
  // but folds fitted cloth back into the template, which hides persistent
  // pose error from the data term; off, the frame-0 binding is kept.
  bool rebind_every_frame = false;
};

Scene load_scene(const std::string& path, const std::vector<std::string>& overrides = {});

struct StageTimings {
  double body_tracking_ms = 0.0;
  double cloth_simulation_ms = 0.0;
  double depth_fitting_ms = 0.0;
  double rest_ms = 0.0;
};

struct FrameResult {
  Pose pose;
  std::vector<ClothState> cloth_states;
  double fit_error_mean = 0.0;   // visible projective point-to-depth (m)
  double fit_error_max = 0.0;
  int interpenetration_count = 0;
  bool low_confidence = false;
  StageTimings timings;
  std::vector<int> stage_order;  // audit trail: 0 track, 1 simulate, 2 mask, 3 fit
};

/// Runtime state the pipeline threads through a sequence.
class Engine {
 public:
  explicit Engine(Scene scene);

  const Scene& scene() const { return scene_; }

  /// Settles garments on the rest-pose body (scene.drape_seconds of
  /// simulated time). Establishes the frame-0 cloth state.
  void drape();

  /// Track -> simulate -> blend mask -> iterative depth fit, in that order.
  FrameResult run_frame(const DepthFrame& frame);

  /// Synthesizes ground truth: poses the body along the motion, simulates
  /// cloth with the GT config, rasterizes depth, persists everything under
  /// out_dir (depth/%06d.raw, gt_pose/%06d.txt, gt_cloth_<g>/%06d.obj).
  void generate_sequence(const std::string& out_dir);

  /// Re-tracks a stored sequence; writes per-frame poses, cloth OBJs,
  /// metrics.csv and a reproducibility manifest under out_dir.
  void track_sequence(const std::string& seq_dir, const std::string& out_dir);

  /// Compares a tracked run against stored ground truth; writes CSV.
  void evaluate(const std::string& track_dir, const std::string& seq_dir,
                const std::string& out_csv);

  void bench(const std::string& out_csv, int n_frames);

  // State access for tests and in-process experiments.
  Pose& current_pose() { return pose_; }
  std::vector<ClothState>& cloth_states() { return cloth_states_; }
  const std::vector<SpringSet>& springs() const { return springs_; }
  BodyCollider& body_collider() { return *body_collider_; }

  /// Skinning-only baseline: garment vertices rigidly follow their nearest
  /// body vertex (the comparison surface for the occlusion evaluation).
  std::vector<Vec3> skinning_baseline(int garment, const Pose& pose) const;

  DepthFrame render_ground_truth(const Pose& pose,
                                 const std::vector<std::vector<Vec3>>& cloth_positions) const;

 private:
  void simulate_garments(const Pose& pose_start, const Pose& pose_end, const SimConfig& cfg,
                         const MaterialParams* material_override);
  void rebind_tracker_surface();

  Scene scene_;
  Pose pose_;
  std::vector<ClothState> cloth_states_;
  std::vector<SpringSet> springs_;
  std::vector<std::vector<std::vector<SkinWeight>>> garment_skin_;  // nearest-body-vertex weights
  std::unique_ptr<BodyCollider> body_collider_;
  std::unique_ptr<TrackerSurface> tracker_surface_;
  std::vector<Vec3> body_prev_;  // posed body at previous frame
  std::vector<StageTimings> timings_log_;  // one entry per run_frame call
};

/// Per-frame evaluation row (written as CSV by Engine::evaluate).
struct EvalRow {
  int frame = 0;
  double fit_mean = 0.0, fit_p95 = 0.0;
  double cloth_rmse_visible = 0.0, cloth_rmse_occluded = 0.0;
  double pose_rmse = 0.0;
  int interpenetrations = 0;
};

double projective_fit_error(const std::vector<Vec3>& positions,
                            const std::vector<uint8_t>& visible, const DepthFrame& frame,
                            double* p95 = nullptr, double* max_err = nullptr);

// Pose files: "root tx ty tz" then one "name rx ry rz" line per joint.
void save_pose(const std::string& path, const Skeleton& skel, const Pose& pose);
Pose load_pose(const std::string& path, const Skeleton& skel);

}  // namespace ct
