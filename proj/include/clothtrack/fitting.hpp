#pragma once

#include "clothtrack/collision.hpp"
#include "clothtrack/depthcam.hpp"
#include "clothtrack/simcore.hpp"

namespace ct {

struct FitParams {
  double gamma = 240.0;      // exponential scale (1/m)
  double eta = 0.34;         // force scale (N)
  double sigma_px = 1.0;     // Gaussian bandwidth of the pixel kernel
  double max_dist = 0.05;    // force magnitude clamp distance (m)
  int iterations = 100;
  // per-iteration velocity retention. The depth force stiffens exponentially
  // with distance (d|F|/dd = gamma*|F|), so momentum carried between
  // iterations turns the pass into an unstable oscillator; overdamping makes
  // it a stable relaxation while the velocity-restore rule already guarantees
  // the pass carries no momentum into the next frame
  double overdamp = 0.5;
};

/// Depth attraction force on one visible cloth vertex: Gaussian-blended
/// over the 3x3 valid depth neighborhood of the vertex's projective pixel,
/// magnitude eta*exp(gamma*dist) per neighbor (clamped at max_dist), scaled
/// by the blend weight psi. Zero if the pixel has no depth.
Vec3 depth_fitting_force(const Vec3& vertex, const DepthFrame& frame, double psi,
                         const FitParams& params);

/// Second simulation pass of a frame: the depth force enters as the extra
/// external force, the body stays static, and the cloth velocities are
/// restored bitwise afterwards so fitting displacements carry no momentum.
void iterative_depth_fit(ClothState& state, const SpringSet& springs,
                         const MaterialParams& material, const SimConfig& config,
                         const DepthFrame& frame, const BlendWeightField& blend,
                         CollisionContext& collision, const FitParams& params);

}  // namespace ct
