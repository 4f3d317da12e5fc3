#include "clothtrack/procedural.hpp"

#include <cmath>

namespace ct {

TriMesh make_grid_cloth(int nx, int ny, double spacing, double height) {
  TriMesh mesh;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      mesh.vertices.emplace_back(i * spacing, height, j * spacing);
  auto vid = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      mesh.triangles.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      mesh.triangles.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  }
  mesh.build_adjacency();
  return mesh;
}

TriMesh make_uv_sphere(const Vec3& center, double radius, int rings, int segments) {
  TriMesh mesh;
  mesh.vertices.push_back(center + Vec3(0, -radius, 0));  // south pole
  for (int r = 1; r < rings; ++r) {
    double phi = M_PI * r / rings - M_PI / 2.0;  // -pi/2..pi/2
    for (int s = 0; s < segments; ++s) {
      double th = 2.0 * M_PI * s / segments;
      mesh.vertices.push_back(center + radius * Vec3(std::cos(phi) * std::cos(th), std::sin(phi),
                                                     std::cos(phi) * std::sin(th)));
    }
  }
  int north = static_cast<int>(mesh.vertices.size());
  mesh.vertices.push_back(center + Vec3(0, radius, 0));
  auto ring_vid = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
  for (int s = 0; s < segments; ++s)
    mesh.triangles.push_back({0, ring_vid(1, s), ring_vid(1, s + 1)});
  for (int r = 1; r < rings - 1; ++r) {
    for (int s = 0; s < segments; ++s) {
      int a = ring_vid(r, s), b = ring_vid(r, s + 1);
      int c = ring_vid(r + 1, s), d = ring_vid(r + 1, s + 1);
      mesh.triangles.push_back({a, c, b});
      mesh.triangles.push_back({b, c, d});
    }
  }
  for (int s = 0; s < segments; ++s)
    mesh.triangles.push_back({north, ring_vid(rings - 1, s + 1), ring_vid(rings - 1, s)});
  mesh.build_adjacency();
  return mesh;
}

TriMesh make_capped_cylinder(const Vec3& base, double radius, double height, int segments,
                             int rings, double radius_z) {
  if (radius_z <= 0.0) radius_z = radius;
  TriMesh mesh;
  for (int r = 0; r <= rings; ++r) {
    double y = height * r / rings;
    for (int s = 0; s < segments; ++s) {
      double th = 2.0 * M_PI * s / segments;
      mesh.vertices.push_back(base + Vec3(radius * std::cos(th), y, radius_z * std::sin(th)));
    }
  }
  auto vid = [&](int r, int s) { return r * segments + (s % segments); };
  for (int r = 0; r < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      int a = vid(r, s), b = vid(r, s + 1), c = vid(r + 1, s), d = vid(r + 1, s + 1);
      // outward orientation: +y up, theta increasing toward +z
      mesh.triangles.push_back({a, c, b});
      mesh.triangles.push_back({b, c, d});
    }
  }
  int bottom = static_cast<int>(mesh.vertices.size());
  mesh.vertices.push_back(base);
  int top = static_cast<int>(mesh.vertices.size());
  mesh.vertices.push_back(base + Vec3(0, height, 0));
  for (int s = 0; s < segments; ++s) {
    mesh.triangles.push_back({bottom, vid(0, s), vid(0, s + 1)});
    mesh.triangles.push_back({top, vid(rings, s + 1), vid(rings, s)});
  }
  mesh.build_adjacency();
  return mesh;
}

namespace {

/// Open tube (no caps) for garments; rings from y=top downward.
TriMesh make_tube(const Vec3& top_center, double radius, double length, int segments, int rings) {
  TriMesh mesh;
  for (int r = 0; r <= rings; ++r) {
    double y = -length * r / rings;
    for (int s = 0; s < segments; ++s) {
      double th = 2.0 * M_PI * s / segments;
      mesh.vertices.push_back(top_center + Vec3(radius * std::cos(th), y, radius * std::sin(th)));
    }
  }
  auto vid = [&](int r, int s) { return r * segments + (s % segments); };
  for (int r = 0; r < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      int a = vid(r, s), b = vid(r, s + 1), c = vid(r + 1, s), d = vid(r + 1, s + 1);
      mesh.triangles.push_back({a, b, c});
      mesh.triangles.push_back({b, d, c});
    }
  }
  mesh.build_adjacency();
  return mesh;
}

void append_mesh(TriMesh& dst, const TriMesh& src) {
  int base = dst.vertex_count();
  dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
  for (const auto& t : src.triangles)
    dst.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

}  // namespace

MultiLayerAvatar make_basic_humanoid(const HumanoidParams& p) {
  MultiLayerAvatar avatar;

  // skeleton: pelvis at the origin, chest partway up the torso, shoulders
  // at the arm tops, elbows halfway down the arms
  const double shoulder_y = p.torso_height - 0.05;
  const double arm_x = p.shirt_radius + p.arm_radius + 0.01;
  Skeleton& skel = avatar.body.skeleton;
  auto add_joint = [&](const std::string& name, int parent, const Vec3& t) {
    Joint j;
    j.name = name;
    j.parent = parent;
    j.rest_local.t = t;
    skel.joints.push_back(j);
    return static_cast<int>(skel.joints.size()) - 1;
  };
  int root = add_joint("root", -1, Vec3::Zero());
  int chest = add_joint("chest", root, Vec3(0, p.torso_height * 0.55, 0));
  int l_shoulder = add_joint("l_shoulder", chest, Vec3(arm_x, shoulder_y - p.torso_height * 0.55, 0));
  int l_elbow = add_joint("l_elbow", l_shoulder, Vec3(0, -p.arm_length / 2.0, 0));
  int r_shoulder = add_joint("r_shoulder", chest, Vec3(-arm_x, shoulder_y - p.torso_height * 0.55, 0));
  int r_elbow = add_joint("r_elbow", r_shoulder, Vec3(0, -p.arm_length / 2.0, 0));

  // body mesh: torso plus two arms (disjoint closed parts); elliptical
  // cross-sections so axial twist is observable from depth
  TriMesh torso = make_capped_cylinder(Vec3::Zero(), p.torso_radius, p.torso_height,
                                       p.torso_segments, p.torso_rings, 0.75 * p.torso_radius);
  TriMesh l_arm = make_capped_cylinder(Vec3(arm_x, shoulder_y - p.arm_length, 0), p.arm_radius,
                                       p.arm_length, p.arm_segments, p.arm_rings,
                                       0.75 * p.arm_radius);
  TriMesh r_arm = make_capped_cylinder(Vec3(-arm_x, shoulder_y - p.arm_length, 0), p.arm_radius,
                                       p.arm_length, p.arm_segments, p.arm_rings,
                                       0.75 * p.arm_radius);
  TriMesh& body = avatar.body.mesh;
  int torso_count = torso.vertex_count();
  int l_arm_count = l_arm.vertex_count();
  append_mesh(body, torso);
  append_mesh(body, l_arm);
  append_mesh(body, r_arm);
  body.build_adjacency();

  // skin weights: torso blends root->chest along height, arms blend
  // shoulder->elbow along the arm
  auto& weights = avatar.body.weights;
  weights.resize(body.vertex_count());
  const double chest_y0 = p.torso_height * 0.30, chest_y1 = p.torso_height * 0.70;
  for (int v = 0; v < torso_count; ++v) {
    double y = body.vertices[v].y();
    double w = std::clamp((y - chest_y0) / (chest_y1 - chest_y0), 0.0, 1.0);
    if (w <= 0.0)
      weights[v] = {{root, 1.0}};
    else if (w >= 1.0)
      weights[v] = {{chest, 1.0}};
    else
      weights[v] = {{root, 1.0 - w}, {chest, w}};
  }
  auto arm_weights = [&](int begin, int count, int shoulder, int elbow) {
    const double elbow_y = shoulder_y - p.arm_length / 2.0;
    const double blend = 0.06;
    for (int v = begin; v < begin + count; ++v) {
      double y = body.vertices[v].y();
      double w = std::clamp((elbow_y + blend / 2.0 - y) / blend, 0.0, 1.0);  // 1 below elbow
      if (w <= 0.0)
        weights[v] = {{shoulder, 1.0}};
      else if (w >= 1.0)
        weights[v] = {{elbow, 1.0}};
      else
        weights[v] = {{shoulder, 1.0 - w}, {elbow, w}};
    }
  };
  arm_weights(torso_count, l_arm_count, l_shoulder, l_elbow);
  arm_weights(torso_count + l_arm_count, r_arm.vertex_count(), r_shoulder, r_elbow);
  avatar.body.finalize();

  // joint limits: generous defaults, elbows hinge-only-ish
  avatar.limits.bounds.assign(skel.joint_count(), {-M_PI, M_PI, -M_PI, M_PI, -M_PI, M_PI});
  avatar.limits.bounds[l_elbow] = {-0.1, 0.1, -0.1, 0.1, -2.6, 0.1};
  avatar.limits.bounds[r_elbow] = {-0.1, 0.1, -0.1, 0.1, -0.1, 2.6};

  // shirt: open tube around the torso, pinned at the top ring
  int segments = p.shirt_segments;
  int rings = p.shirt_rings;
  if (segments <= 0)
    segments = std::max(8, static_cast<int>(std::lround(2.0 * M_PI * p.shirt_radius /
                                                        p.shirt_edge_target)));
  if (rings <= 0)
    rings = std::max(4, static_cast<int>(std::lround(p.shirt_length / p.shirt_edge_target)));
  Garment shirt;
  shirt.name = "shirt";
  shirt.mesh = make_tube(Vec3(0, p.torso_height - 0.02, 0), p.shirt_radius, p.shirt_length,
                         segments, rings);
  shirt.material = material_preset(p.material);
  for (int s = 0; s < segments; ++s) shirt.pinned.push_back(s);  // top ring
  avatar.garments.push_back(std::move(shirt));
  return avatar;
}

Motion make_arm_raise_motion(const Skeleton& skel, int n_frames, double amplitude_rad) {
  Motion motion;
  int l = skel.find_joint("l_shoulder"), r = skel.find_joint("r_shoulder");
  if (l < 0 || r < 0) throw InputError("arm_raise motion needs l_shoulder/r_shoulder joints");
  Pose start = Pose::rest(skel);
  Pose end = start;
  end.joint_rotations[l] = Vec3(0, 0, amplitude_rad);
  end.joint_rotations[r] = Vec3(0, 0, -amplitude_rad);
  motion.keyframes = {{0.0, start}, {static_cast<double>(n_frames), end}};
  return motion;
}

Motion make_turn_motion(const Skeleton& skel, int n_frames, double angle_rad) {
  Motion motion;
  Pose start = Pose::rest(skel);
  // Interpolating axis-angle magnitude about a fixed axis is exact, but a
  // single 0..pi keyframe pair would rewrap; use several keyframes.
  const int steps = 8;
  for (int k = 0; k <= steps; ++k) {
    Pose p = start;
    double a = angle_rad * k / steps;
    p.joint_rotations[0] = Vec3(0, a, 0);
    motion.keyframes.push_back({static_cast<double>(n_frames) * k / steps, p});
  }
  return motion;
}

}  // namespace ct
