#include "clothtrack/simcore.hpp"

#include <cmath>
#include <iostream>

namespace ct {

ClothState ClothState::at_rest(const std::vector<Vec3>& rest_positions, double vertex_mass) {
  ClothState s;
  s.positions = rest_positions;
  s.velocities.assign(rest_positions.size(), Vec3::Zero());
  s.mass.assign(rest_positions.size(), vertex_mass);
  s.pinned.assign(rest_positions.size(), 0);
  return s;
}

MaterialParams material_preset(const std::string& name) {
  if (name == "soft") return {300.0, 0.01};
  if (name == "middle") return {800.0, 0.05};
  if (name == "hard") return {1300.0, 0.1};
  throw InputError("unknown material preset: " + name + " (soft|middle|hard)");
}

double SimConfig::substep_damping_factor() const {
  // The damping coefficient is the velocity loss per rendered frame,
  // distributed evenly so behavior is independent of the substep count.
  return std::pow(1.0 - damping, 1.0 / substeps_per_frame);
}

void accumulate_external(ForceField& forces, const ClothState& state, const SimConfig& config,
                         const ForceField* extra) {
  if (extra && extra->size() != state.positions.size())
    throw InputError("accumulate_external: extra force size mismatch");
  const Vec3 g = config.gravity_mag * config.gravity_dir;
  for (int i = 0; i < state.vertex_count(); ++i) {
    forces[i] += state.mass[i] * g;
    if (extra) forces[i] += (*extra)[i];
  }
}

void accumulate_stretch(ForceField& forces, const ClothState& state, const SpringSet& springs,
                        const MaterialParams& material) {
  static bool warned = false;
  for (const StretchSpring& s : springs.stretch) {
    Vec3 d = state.positions[s.j] - state.positions[s.i];
    double len = d.norm();
    if (len < 1e-9) {
      if (!warned) {
        std::cerr << "warning: collapsed stretch spring (" << s.i << "," << s.j
                  << "), direction undefined, skipping\n";
        warned = true;
      }
      continue;
    }
    // F = k * dx with dx = half the deviation from rest length
    double dx = 0.5 * (len - s.rest_length);
    Vec3 f = (material.k * dx / len) * d;
    forces[s.i] += f;
    forces[s.j] -= f;
  }
}

void accumulate_torsion(ForceField& forces, const ClothState& state, const SpringSet& springs,
                        const MaterialParams& material) {
  if (material.w <= 0.0) return;
  static bool warned = false;
  Vec3 grad[4];
  for (const TorsionSpring& s : springs.torsion) {
    const Vec3& x1 = state.positions[s.p1];
    const Vec3& x2 = state.positions[s.p2];
    const Vec3& x3 = state.positions[s.p3];
    const Vec3& x4 = state.positions[s.p4];
    Vec3 n1 = (x2 - x1).cross(x3 - x1);
    Vec3 n2 = (x4 - x1).cross(x2 - x1);
    if (n1.norm() < 1e-12 || n2.norm() < 1e-12) {
      if (!warned) {
        std::cerr << "warning: degenerate hinge triangle at torsion spring (" << s.p1 << ","
                  << s.p2 << "), skipping\n";
        warned = true;
      }
      continue;
    }
    double theta = dihedral_angle_signed(x1, x2, x3, x4, grad);
    // Rest angle is unsigned; deflection measured on the angle magnitude,
    // restoring moment M = w * delta_alpha along the unsigned-angle gradient.
    double sign = theta >= 0.0 ? 1.0 : -1.0;
    double delta = std::abs(theta) - s.rest_angle;
    double moment = -material.w * delta * sign;
    forces[s.p1] += moment * grad[0];
    forces[s.p2] += moment * grad[1];
    forces[s.p3] += moment * grad[2];
    forces[s.p4] += moment * grad[3];
  }
}

void integrate_euler(ClothState& state, const ForceField& forces, const SimConfig& config) {
  const double damp = config.substep_damping_factor();
  for (int i = 0; i < state.vertex_count(); ++i) {
    if (state.pinned[i]) continue;
    Vec3 a = forces[i] / state.mass[i];
    Vec3 v = (state.velocities[i] + a * config.dt) * damp;
    Vec3 x = state.positions[i] + v * config.dt;
    if (!x.allFinite() || !v.allFinite())
      throw NumericalError("integrate_euler: non-finite state at vertex " + std::to_string(i) +
                           ", force (" + std::to_string(forces[i].x()) + "," +
                           std::to_string(forces[i].y()) + "," + std::to_string(forces[i].z()) +
                           ")");
    state.velocities[i] = v;
    state.positions[i] = x;
  }
}

void simulate_frame(ClothState& state, const SpringSet& springs, const MaterialParams& material,
                    const SimConfig& config, const CollisionHook& collide,
                    const ExternalForceHook& extra_force) {
  ForceField forces(state.positions.size());
  ForceField extra;
  for (int s = 1; s <= config.substeps_per_frame; ++s) {
    std::fill(forces.begin(), forces.end(), Vec3::Zero());
    if (extra_force) {
      extra.assign(state.positions.size(), Vec3::Zero());
      extra_force(extra, state);
      accumulate_external(forces, state, config, &extra);
    } else {
      accumulate_external(forces, state, config, nullptr);
    }
    accumulate_stretch(forces, state, springs, material);
    accumulate_torsion(forces, state, springs, material);
    integrate_euler(state, forces, config);
    if (collide) collide(state, static_cast<double>(s) / config.substeps_per_frame);
  }
}

}  // namespace ct
