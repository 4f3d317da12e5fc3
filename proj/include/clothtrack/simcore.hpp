#pragma once

#include <functional>
#include <string>
#include <vector>

#include "clothtrack/core.hpp"
#include "clothtrack/mesh.hpp"

namespace ct {

struct ClothState {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  std::vector<double> mass;
  std::vector<uint8_t> pinned;

  int vertex_count() const { return static_cast<int>(positions.size()); }
  static ClothState at_rest(const std::vector<Vec3>& rest_positions, double vertex_mass);
};

struct MaterialParams {
  double k = 300.0;   // stretch stiffness
  double w = 0.01;    // torsion coefficient (moment per radian)
};

/// Presets: soft (k=300, w=0.01), middle (k=800, w=0.05), hard (k=1300, w=0.1).
MaterialParams material_preset(const std::string& name);

struct SimConfig {
  double dt = 0.00033;
  int substeps_per_frame = 100;
  double damping = 0.1;        // velocity loss per rendered frame
  double vertex_mass = 0.001;
  Vec3 gravity_dir = Vec3(0, -1, 0);
  double gravity_mag = 9.8;

  /// Per-substep velocity factor distributing the per-frame damping.
  double substep_damping_factor() const;
};

using ForceField = std::vector<Vec3>;

void accumulate_external(ForceField& forces, const ClothState& state, const SimConfig& config,
                         const ForceField* extra = nullptr);
void accumulate_stretch(ForceField& forces, const ClothState& state, const SpringSet& springs,
                        const MaterialParams& material);
void accumulate_torsion(ForceField& forces, const ClothState& state, const SpringSet& springs,
                        const MaterialParams& material);

/// Explicit Euler step. Throws NumericalError naming the first bad vertex
/// if the update produces a non-finite value.
void integrate_euler(ClothState& state, const ForceField& forces, const SimConfig& config);

/// Collision hook invoked once per substep after integration.
/// body_fraction in (0,1] is the interpolation position within the frame.
using CollisionHook = std::function<void(ClothState&, double body_fraction)>;

/// Per-substep external-force hook (the depth-fitting force plugs in here).
using ExternalForceHook = std::function<void(ForceField&, const ClothState&)>;

/// One rendered frame: substeps_per_frame iterations of
/// [accumulate -> integrate -> collide], body interpolated by the caller
/// via the collision hook.
void simulate_frame(ClothState& state, const SpringSet& springs, const MaterialParams& material,
                    const SimConfig& config, const CollisionHook& collide,
                    const ExternalForceHook& extra_force = nullptr);

}  // namespace ct
