#include "clothtrack/tracker.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace ct {

// defined in body.cpp
std::vector<MatX> lbs_pose_jacobian(const Skeleton& skel, const Pose& pose,
                                    const std::vector<Rigid>& rest_globals,
                                    const std::vector<Vec3>& templ,
                                    const std::vector<std::vector<SkinWeight>>& weights,
                                    const std::vector<int>& vertex_ids);

std::vector<Vec3> TrackerSurface::pose_positions(const Pose& pose) const {
  std::vector<Rigid> globals = forward_kinematics(skeleton, pose);
  std::vector<Rigid> G(globals.size());
  for (size_t j = 0; j < globals.size(); ++j) G[j] = globals[j].compose(rest_globals[j].inverse());
  std::vector<Vec3> out(mesh.vertices.size());
  for (size_t v = 0; v < out.size(); ++v) {
    Vec3 x = Vec3::Zero();
    for (const auto& sw : weights[v]) x += sw.weight * G[sw.joint].apply(mesh.vertices[v]);
    out[v] = x;
  }
  return out;
}

std::vector<MatX> TrackerSurface::jacobians(const Pose& pose,
                                            const std::vector<int>& vertex_ids) const {
  return lbs_pose_jacobian(skeleton, pose, rest_globals, mesh.vertices, weights, vertex_ids);
}

TrackerSurface make_tracker_surface(const SkinnedBody& body,
                                    const std::vector<const TriMesh*>& garments,
                                    const std::vector<const std::vector<Vec3>*>& garment_rest) {
  TrackerSurface surf;
  surf.skeleton = body.skeleton;
  surf.rest_globals = body.rest_globals;
  surf.mesh = body.mesh;
  surf.weights = body.weights;
  surf.body_vertex_count = body.mesh.vertex_count();

  for (size_t g = 0; g < garments.size(); ++g) {
    const TriMesh& gm = *garments[g];
    const std::vector<Vec3>& rest = *garment_rest[g];
    int base = surf.mesh.vertex_count();
    for (int v = 0; v < gm.vertex_count(); ++v) {
      const Vec3& p = rest[v];
      // rigid binding: borrow the skin weights of the nearest body vertex
      int nearest = 0;
      double best = std::numeric_limits<double>::max();
      for (int b = 0; b < body.mesh.vertex_count(); ++b) {
        double d = (body.mesh.vertices[b] - p).squaredNorm();
        if (d < best) {
          best = d;
          nearest = b;
        }
      }
      surf.mesh.vertices.push_back(p);
      surf.weights.push_back(body.weights[nearest]);
    }
    for (const auto& t : gm.triangles)
      surf.mesh.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
  surf.mesh.build_adjacency();
  return surf;
}

TrackerSurface make_tracker_surface(const SkinnedBody& body, const Pose& pose,
                                    const std::vector<const TriMesh*>& garments,
                                    const std::vector<const std::vector<Vec3>*>& garment_world) {
  TrackerSurface surf;
  surf.skeleton = body.skeleton;
  surf.rest_globals = body.rest_globals;
  surf.mesh = body.mesh;
  surf.weights = body.weights;
  surf.body_vertex_count = body.mesh.vertex_count();

  std::vector<Vec3> body_posed = skin_vertices(body, pose);
  std::vector<Rigid> globals = forward_kinematics(body.skeleton, pose);
  std::vector<Rigid> G(globals.size());
  for (size_t j = 0; j < globals.size(); ++j) G[j] = globals[j].compose(body.rest_globals[j].inverse());

  for (size_t g = 0; g < garments.size(); ++g) {
    const TriMesh& gm = *garments[g];
    const std::vector<Vec3>& world = *garment_world[g];
    int base = surf.mesh.vertex_count();
    for (int v = 0; v < gm.vertex_count(); ++v) {
      const Vec3& p = world[v];
      // rigid binding in the CURRENT posed configuration: the garment state
      // is a world-space snapshot, so invert the blended skin transform to
      // recover the template position that reproduces it under `pose`
      int nearest = 0;
      double best = std::numeric_limits<double>::max();
      for (int b = 0; b < body.mesh.vertex_count(); ++b) {
        double d = (body_posed[b] - p).squaredNorm();
        if (d < best) {
          best = d;
          nearest = b;
        }
      }
      Mat3 A = Mat3::Zero();
      Vec3 t = Vec3::Zero();
      for (const auto& sw : body.weights[nearest]) {
        A += sw.weight * G[sw.joint].R;
        t += sw.weight * G[sw.joint].t;
      }
      surf.mesh.vertices.push_back(A.inverse() * (p - t));
      surf.weights.push_back(body.weights[nearest]);
    }
    for (const auto& tr : gm.triangles)
      surf.mesh.triangles.push_back({tr[0] + base, tr[1] + base, tr[2] + base});
  }
  surf.mesh.build_adjacency();
  return surf;
}

std::vector<DataPair> find_data_correspondences(const TrackerSurface& surface,
                                                const std::vector<Vec3>& posed,
                                                const DepthFrame& frame, const TrackConfig& cfg) {
  std::vector<DataPair> pairs;
  std::vector<Vec3> normals = compute_normals(surface.mesh, posed);
  const Intrinsics& intr = frame.intr;
  const double cos_gate = std::cos(cfg.max_normal_angle);
  // self-occlusion gate: a body vertex under the garment would otherwise
  // pair with the cloth depth just in front of it, biasing every residual
  DepthFrame self_render = rasterize_depth({{&surface.mesh, &posed}}, intr);
  std::vector<uint8_t> visible = vertex_visibility(posed, self_render, cfg.self_occlusion_tol);
  for (size_t v = 0; v < posed.size(); ++v) {
    const Vec3& p = posed[v];
    if (p.z() <= 1e-6 || !visible[v]) continue;
    Vec2 uv = intr.project(p);
    int u = static_cast<int>(std::lround(uv.x())), vv = static_cast<int>(std::lround(uv.y()));
    if (u < 0 || vv < 0 || u >= intr.width || vv >= intr.height) continue;
    int id = frame.idx(u, vv);
    if (frame.depth[id] <= 0.0f || !frame.normal_valid[id]) continue;
    // only camera-facing surface vertices can see the sensor
    if (normals[v].z() > 0.0) continue;
    const Vec3& q = frame.points[id];
    if ((q - p).norm() > cfg.max_corr_dist) continue;
    if (normals[v].dot(frame.normals[id]) < cos_gate) continue;
    pairs.push_back({static_cast<int>(v), q, frame.normals[id]});
  }
  return pairs;
}

std::vector<InterPair> find_interpenetrations(const std::vector<Vec3>& body_posed,
                                              const DepthFrame& frame, const TrackConfig& cfg) {
  std::vector<InterPair> pairs;
  const Intrinsics& intr = frame.intr;
  for (size_t v = 0; v < body_posed.size(); ++v) {
    const Vec3& p = body_posed[v];
    if (p.z() <= 1e-6) continue;
    Vec2 uv = intr.project(p);
    int u = static_cast<int>(std::lround(uv.x())), vv = static_cast<int>(std::lround(uv.y()));
    if (u < 0 || vv < 0 || u >= intr.width || vv >= intr.height) continue;
    int id = frame.idx(u, vv);
    if (frame.depth[id] <= 0.0f || !frame.normal_valid[id]) continue;
    // strictly in front of the observation = interpenetrating the cloth
    // depth; the margin keeps vertices lying exactly on a quantized/noisy
    // observation of themselves out of Q
    if (p.z() >= frame.depth[id] - cfg.inter_margin) continue;
    // a pixel far behind the vertex is background seen past a silhouette,
    // not cloth the body has pierced
    if (frame.depth[id] - p.z() > cfg.max_corr_dist) continue;
    Vec3 target = frame.points[id] - frame.normals[id] * cfg.sigma_shift;
    pairs.push_back({static_cast<int>(v), target});
  }
  return pairs;
}

double tracking_energy(const TrackerSurface& surface, const Pose& pose,
                       const Correspondences& corr, const JointLimits& limits,
                       const TrackConfig& cfg, double lambda_inter, MatX* JtJ, VecX* Jtr) {
  const int P = pose.param_count();
  const int J = surface.skeleton.joint_count();
  if (JtJ) {
    JtJ->setZero(P, P);
    Jtr->setZero(P);
  }

  std::vector<int> vids;
  vids.reserve(corr.data.size() + corr.inter.size());
  for (const auto& d : corr.data) vids.push_back(d.vertex);
  for (const auto& q : corr.inter) vids.push_back(q.vertex);

  std::vector<Vec3> posed = surface.pose_positions(pose);
  std::vector<MatX> jac;
  if (JtJ) jac = surface.jacobians(pose, vids);

  double energy = 0.0;
  size_t ji = 0;
  for (const auto& d : corr.data) {
    double r = d.target_normal.dot(posed[d.vertex] - d.target);
    // Huber loss: quadratic near zero, linear past delta, so silhouette
    // mis-associations cannot dominate the step. IRLS weight w = rho'(r)/r
    // keeps 2*Jtr the exact gradient of the summed energy.
    const double ar = std::abs(r), delta = cfg.huber_delta;
    double w = (delta > 0.0 && ar > delta) ? delta / ar : 1.0;
    energy += cfg.lambda_data * (w == 1.0 ? r * r : delta * (2.0 * ar - delta));
    Vec3 r3 = posed[d.vertex] - d.target;
    const double nr3 = r3.norm();
    double w3 = (delta > 0.0 && nr3 > delta) ? delta / nr3 : 1.0;
    energy += cfg.lambda_point * (w3 == 1.0 ? nr3 * nr3 : delta * (2.0 * nr3 - delta));
    if (JtJ) {
      VecX row = jac[ji].transpose() * d.target_normal;
      *JtJ += (cfg.lambda_data * w) * row * row.transpose();
      *Jtr += (cfg.lambda_data * w) * r * row;
      const MatX& Jv = jac[ji];
      *JtJ += (cfg.lambda_point * w3) * Jv.transpose() * Jv;
      *Jtr += (cfg.lambda_point * w3) * Jv.transpose() * r3;
    }
    ++ji;
  }
  for (const auto& q : corr.inter) {
    Vec3 r = posed[q.vertex] - q.target;
    energy += lambda_inter * r.squaredNorm();
    if (JtJ) {
      const MatX& Jv = jac[ji];
      *JtJ += lambda_inter * Jv.transpose() * Jv;
      *Jtr += lambda_inter * Jv.transpose() * r;
    }
    ++ji;
  }
  // prior: pull toward the anchor pose (the previous frame while tracking,
  // which damps unobservable directions such as twist about a bare limb axis
  // without dragging a sustained articulation back to rest), plus one-sided
  // quadratic joint limits around the rest pose
  for (int j = 0; j < J; ++j) {
    const Vec3& theta = pose.joint_rotations[j];
    Vec3 dev = corr.anchor ? Vec3(theta - corr.anchor->joint_rotations[j]) : theta;
    energy += cfg.lambda_pri * dev.squaredNorm() + cfg.lambda_rest * theta.squaredNorm();
    if (JtJ) {
      for (int a = 0; a < 3; ++a) {
        int col = 3 + 3 * j + a;
        (*JtJ)(col, col) += cfg.lambda_pri + cfg.lambda_rest;
        (*Jtr)(col) += cfg.lambda_pri * dev[a] + cfg.lambda_rest * theta[a];
      }
    }
    if (!limits.bounds.empty()) {
      for (int a = 0; a < 3; ++a) {
        double lo = limits.bounds[j][2 * a], hi = limits.bounds[j][2 * a + 1];
        double excess = theta[a] < lo ? theta[a] - lo : (theta[a] > hi ? theta[a] - hi : 0.0);
        energy += cfg.lambda_pri * excess * excess;
        if (JtJ && excess != 0.0) {
          int col = 3 + 3 * j + a;
          (*JtJ)(col, col) += cfg.lambda_pri;
          (*Jtr)(col) += cfg.lambda_pri * excess;
        }
      }
    }
  }
  return energy;
}

TrackResult track_body(const TrackerSurface& surface, const Pose& prev_pose,
                       const DepthFrame& frame, const JointLimits& limits,
                       const TrackConfig& cfg) {
  TrackResult result;
  result.pose = prev_pose;
  const int P = prev_pose.param_count();

  Pose pose = prev_pose;
  double prev_energy = std::numeric_limits<double>::max();
  double prev_lambda = -1.0;
  int energy_increases = 0;

  // leash target for data-null directions: rest rotations, previous
  // translation (translation is always observable, this is just a fallback)
  const int J = surface.skeleton.joint_count();
  auto pack = [&](const Pose& p) {
    VecX v(P);
    v.segment<3>(0) = p.root_translation;
    for (int j = 0; j < J; ++j) v.segment<3>(3 + 3 * j) = p.joint_rotations[j];
    return v;
  };
  VecX null_anchor = VecX::Zero(P);
  null_anchor.segment<3>(0) = prev_pose.root_translation;
  MatX null_basis;  // fixed on the first iteration so energies stay comparable

  for (int iter = 0; iter < cfg.icp_iterations; ++iter) {
    double lambda_inter = cfg.inter_schedule.empty()
                              ? 0.0
                              : cfg.inter_schedule[std::min<size_t>(iter, cfg.inter_schedule.size() - 1)];
    std::vector<Vec3> posed = surface.pose_positions(pose);

    Correspondences corr;
    corr.anchor = &prev_pose;
    corr.data = find_data_correspondences(surface, posed, frame, cfg);
    std::vector<Vec3> body_posed(posed.begin(), posed.begin() + surface.body_vertex_count);
    corr.inter = find_interpenetrations(body_posed, frame, cfg);
    result.inter_counts.push_back(static_cast<int>(corr.inter.size()));

    if (static_cast<int>(corr.data.size()) < cfg.min_pairs) {
      result.low_confidence = true;
      result.pose = prev_pose;
      return result;
    }

    MatX JtJ;
    VecX Jtr;
    double energy = tracking_energy(surface, pose, corr, limits, cfg, lambda_inter, &JtJ, &Jtr);

    if (iter == 0 && cfg.lambda_null > 0.0) {
      Eigen::SelfAdjointEigenSolver<MatX> es(JtJ);
      int k = 0;
      while (k < P && es.eigenvalues()[k] < cfg.null_threshold) ++k;
      null_basis = es.eigenvectors().leftCols(k);
    }
    if (null_basis.cols() > 0) {
      VecX c = null_basis.transpose() * (pack(pose) - null_anchor);
      energy += cfg.lambda_null * c.squaredNorm();
      JtJ += cfg.lambda_null * null_basis * null_basis.transpose();
      Jtr += cfg.lambda_null * null_basis * c;
    }
    result.energies.push_back(energy);

    // energies under different interpenetration weights are not comparable;
    // only judge divergence within a constant-weight stretch of the schedule
    if (lambda_inter == prev_lambda && energy > prev_energy) {
      if (++energy_increases >= 3) {
        result.diverged = true;
        result.pose = prev_pose;
        return result;
      }
    } else {
      energy_increases = 0;
    }
    prev_energy = energy;
    prev_lambda = lambda_inter;

    // always lightly damped: a rotationally symmetric limb makes its twist
    // column near-singular, and undamped GN drifts along it
    double lm = 1e-4 * JtJ.trace() / P;
    Eigen::LDLT<MatX> ldlt(JtJ + lm * MatX::Identity(P, P));
    VecX delta = ldlt.solve(-Jtr);
    if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
      MatX damped = JtJ + (1e4 * lm) * MatX::Identity(P, P);
      delta = damped.ldlt().solve(-Jtr);
      if (!delta.allFinite()) throw NumericalError("track_body: singular normal equations");
    }
    // trust region: correspondences are only valid near the linearization point
    double step = delta.lpNorm<Eigen::Infinity>();
    if (step > cfg.max_step) delta *= cfg.max_step / step;

    pose.root_translation += delta.segment<3>(0);
    for (int j = 0; j < surface.skeleton.joint_count(); ++j)
      pose.joint_rotations[j] += delta.segment<3>(3 + 3 * j);
    pose.rewrap();
  }
  result.pose = pose;
  return result;
}

}  // namespace ct
