#include "clothtrack/fitting.hpp"

#include <cmath>

namespace ct {

Vec3 depth_fitting_force(const Vec3& vertex, const DepthFrame& frame, double psi,
                         const FitParams& params) {
  if (psi <= 0.0) return Vec3::Zero();
  const Intrinsics& intr = frame.intr;
  if (vertex.z() <= 1e-6) return Vec3::Zero();
  Vec2 uv = intr.project(vertex);
  int uc = static_cast<int>(std::lround(uv.x())), vc = static_cast<int>(std::lround(uv.y()));
  if (uc < 0 || vc < 0 || uc >= intr.width || vc >= intr.height) return Vec3::Zero();
  if (frame.depth[frame.idx(uc, vc)] <= 0.0f) return Vec3::Zero();  // depth hole

  // Gaussian kernel over the 3x3 valid neighborhood, normalized to sum 1
  const double inv2s2 = 1.0 / (2.0 * params.sigma_px * params.sigma_px);
  double wsum = 0.0;
  double weights[9];
  int ids[9];
  int n = 0;
  for (int dv = -1; dv <= 1; ++dv) {
    for (int du = -1; du <= 1; ++du) {
      int u = uc + du, v = vc + dv;
      if (u < 0 || v < 0 || u >= intr.width || v >= intr.height) continue;
      int id = frame.idx(u, v);
      if (frame.depth[id] <= 0.0f) continue;
      double w = std::exp(-(du * du + dv * dv) * inv2s2);
      weights[n] = w;
      ids[n] = id;
      wsum += w;
      ++n;
    }
  }
  if (n == 0 || wsum <= 0.0) return Vec3::Zero();

  Vec3 force = Vec3::Zero();
  for (int k = 0; k < n; ++k) {
    Vec3 diff = frame.points[ids[k]] - vertex;
    double dist = diff.norm();
    if (dist < 1e-6) continue;
    // magnitude grows as exp(gamma*dist); clamp at the max_dist magnitude
    double mag = params.eta * std::exp(params.gamma * std::min(dist, params.max_dist));
    force += (weights[k] / wsum) * mag * (diff / dist);
  }
  return psi * force;
}

void iterative_depth_fit(ClothState& state, const SpringSet& springs,
                         const MaterialParams& material, const SimConfig& config,
                         const DepthFrame& frame, const BlendWeightField& blend,
                         CollisionContext& collision, const FitParams& params) {
  if (params.iterations <= 0) return;
  const std::vector<Vec3> saved_velocities = state.velocities;

  SimConfig fit_cfg = config;
  fit_cfg.substeps_per_frame = params.iterations;

  std::vector<Vec3> prev;
  auto extra = [&](ForceField& extra_forces, const ClothState& s) {
    for (int i = 0; i < s.vertex_count(); ++i) {
      if (!blend.visible[i]) continue;  // invisible vertices move only via coupling
      extra_forces[i] = depth_fitting_force(s.positions[i], frame, blend.psi[i], params);
    }
  };
  auto collide = [&](ClothState& s, double) {
    for (Vec3& v : s.velocities) v *= params.overdamp;
    collision.resolve_cloth_cloth(s, prev, fit_cfg.dt);
    collision.resolve_body_cloth(s);  // body static during the fitting pass
    collision.resolve_floor(s);
    prev = s.positions;
  };
  prev = state.positions;
  simulate_frame(state, springs, material, fit_cfg, collide, extra);

  // fitting displacements must not inject momentum into the next frame
  state.velocities = saved_velocities;
}

}  // namespace ct
