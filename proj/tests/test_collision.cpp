#include "doctest.h"

#include <random>

#include "clothtrack/collision.hpp"
#include "clothtrack/procedural.hpp"

using namespace ct;

namespace {

// Two far-apart triangles in one mesh: topologically disjoint, so the
// self-collision pass treats them as genuine collision candidates.
TriMesh two_triangle_cloth(double gap) {
  TriMesh m;
  m.vertices = {Vec3(-0.05, 0, -0.05), Vec3(0.05, 0, -0.05), Vec3(0, 0, 0.05),
                Vec3(-0.05, gap, -0.05), Vec3(0.05, gap, -0.05), Vec3(0, gap, 0.05)};
  m.triangles = {{0, 1, 2}, {3, 4, 5}};
  m.build_adjacency();
  return m;
}

}  // namespace

TEST_SUITE("collision") {

TEST_CASE("closest point on sphere mesh matches the analytic SDF") {
  const Vec3 center(0.1, -0.2, 0.4);
  const double radius = 0.5;
  TriMesh sphere = make_uv_sphere(center, radius, 48, 64);
  BodyCollider collider(sphere, sphere.vertices);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  // chordal deviation of the 48x64 tessellation bounds the error
  const double mesh_tol = 0.004;
  for (int trial = 0; trial < 200; ++trial) {
    Vec3 q = center + Vec3(U(rng), U(rng), U(rng));
    double analytic = (q - center).norm() - radius;
    if (std::abs((q - center).norm()) < 0.05) continue;  // near-center normal is ambiguous
    ClosestPointResult cp = collider.closest_point(q);
    CHECK(std::abs(cp.signed_distance - analytic) < mesh_tol);
    Vec3 analytic_n = (q - center).normalized();
    CHECK(cp.normal.dot(analytic_n) > std::cos(0.1));  // within ~6 degrees
    CHECK(std::abs((cp.point - center).norm() - radius) < mesh_tol);
  }
}

TEST_CASE("body resolve: projection to surface + eps, velocity split") {
  const Vec3 center(0, 0, 0);
  TriMesh sphere = make_uv_sphere(center, 0.5, 48, 64);
  BodyCollider collider(sphere, sphere.vertices);
  CollisionConfig cfg;
  cfg.body_eps = 0.003;
  CollisionContext ctx(cfg, nullptr);
  ctx.set_body(&collider);

  ClothState s;
  s.positions = {Vec3(0.508, 0, 0),            // 5mm outside: untouched
                 Vec3(0.498, 0, 0),            // 2mm inside the offset shell
                 Vec3(0.503, 0, 0)};           // exactly at eps, outward velocity
  s.velocities = {Vec3(1, 0, 0), Vec3(-1.0, 0.7, 0), Vec3(0.4, 0, 0)};
  s.mass = {0.001, 0.001, 0.001};
  s.pinned = {0, 0, 0};

  std::vector<Vec3> before = s.positions;
  ctx.resolve_body_cloth(s);
  CHECK(s.positions[0] == before[0]);
  CHECK(s.velocities[0] == Vec3(1, 0, 0));
  // pushed out to radius + eps along the local normal (~+x here)
  CHECK(s.positions[1].x() == doctest::Approx(0.503).epsilon(0.01));
  CHECK(std::abs(s.velocities[1].x()) < 0.05);                        // inward part gone
  CHECK(s.velocities[1].y() == doctest::Approx(0.7).epsilon(0.01));   // tangential kept
  CHECK((s.positions[2] - before[2]).norm() < 1e-3);  // boundary case: at most re-projected
  CHECK(s.velocities[2].x() == doctest::Approx(0.4)); // outward velocity untouched

  // audit: nothing remains inside the offset shell
  for (const Vec3& p : s.positions) {
    CHECK(collider.closest_point(p).signed_distance >= cfg.body_eps - 1e-6);
    CHECK(p.allFinite());
  }
}

TEST_CASE("body resolve never moves pinned vertices") {
  TriMesh sphere = make_uv_sphere(Vec3::Zero(), 0.5, 24, 32);
  BodyCollider collider(sphere, sphere.vertices);
  CollisionConfig cfg;
  CollisionContext ctx(cfg, nullptr);
  ctx.set_body(&collider);
  ClothState s;
  s.positions = {Vec3(0.1, 0, 0)};  // deep inside
  s.velocities = {Vec3::Zero()};
  s.mass = {0.001};
  s.pinned = {1};
  ctx.resolve_body_cloth(s);
  CHECK(s.positions[0] == Vec3(0.1, 0, 0));
}

TEST_CASE("collider tracks updated body positions") {
  TriMesh sphere = make_uv_sphere(Vec3::Zero(), 0.5, 32, 48);
  BodyCollider collider(sphere, sphere.vertices);
  std::vector<Vec3> moved = sphere.vertices;
  for (Vec3& p : moved) p += Vec3(0.2, 0, 0);
  collider.update_positions(moved);
  ClosestPointResult cp = collider.closest_point(Vec3(0.9, 0, 0));
  CHECK(cp.signed_distance == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("vertex-triangle CCD: analytic crossing time") {
  // point falls from y=1 to y=-1 across a static triangle in y=0: t* = 0.5
  Vec3 a(-1, 0, -1), b(1, 0, -1), c(0, 0, 1.5);
  double t_hit = -1;
  bool hit = vertex_triangle_ccd(Vec3(0, 1, 0), Vec3(0, -2, 0), a, Vec3::Zero(), b, Vec3::Zero(),
                                 c, Vec3::Zero(), &t_hit);
  REQUIRE(hit);
  CHECK(t_hit == doctest::Approx(0.5).epsilon(1e-6));

  // crossing the plane outside the triangle: no hit
  CHECK_FALSE(vertex_triangle_ccd(Vec3(5, 1, 0), Vec3(0, -2, 0), a, Vec3::Zero(), b, Vec3::Zero(),
                                  c, Vec3::Zero(), &t_hit));
  // moving away: no hit
  CHECK_FALSE(vertex_triangle_ccd(Vec3(0, 1, 0), Vec3(0, 2, 0), a, Vec3::Zero(), b, Vec3::Zero(),
                                  c, Vec3::Zero(), &t_hit));

  // both endpoints moving: relative crossing at t = 0.25
  hit = vertex_triangle_ccd(Vec3(0, 0.5, 0), Vec3(0, -1, 0), a, Vec3(0, 1, 0), b, Vec3(0, 1, 0),
                            c, Vec3(0, 1, 0), &t_hit);
  REQUIRE(hit);
  CHECK(t_hit == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("closest_segment_segment basic geometry") {
  double s, t;
  // crossing perpendicular segments, closest at midpoints
  closest_segment_segment(Vec3(-1, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, -1), Vec3(0, 1, 1), &s, &t);
  CHECK(s == doctest::Approx(0.5));
  CHECK(t == doctest::Approx(0.5));
  // parallel disjoint segments: clamped to the near ends
  closest_segment_segment(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 1, 0), Vec3(3, 1, 0), &s, &t);
  CHECK(s == doctest::Approx(1.0));
  CHECK(t == doctest::Approx(0.0));
}

TEST_CASE("edge-edge CCD detects a crossing in time") {
  // edge a-b moves down onto static edge c-d; coplanar when y reaches 0 (t=0.5)
  double t_hit = -1;
  bool hit = edge_edge_ccd(Vec3(-1, 1, 0), Vec3(0, -2, 0), Vec3(1, 1, 0), Vec3(0, -2, 0),
                           Vec3(0, 0, -1), Vec3::Zero(), Vec3(0, 0, 1), Vec3::Zero(), &t_hit);
  REQUIRE(hit);
  CHECK(t_hit == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("separated sheets moving apart produce no events") {
  TriMesh cloth = two_triangle_cloth(0.10);
  CollisionConfig cfg;
  CollisionContext ctx(cfg, &cloth);
  ClothState s = ClothState::at_rest(cloth.vertices, 0.001);
  std::vector<Vec3> prev = s.positions;
  for (int v = 3; v < 6; ++v) s.positions[v] += Vec3(0, 0.01, 0);  // moving apart
  ctx.resolve_cloth_cloth(s, prev, 0.00033);
  CHECK(ctx.stats().cloth_cloth_events == 0);
  for (int v = 3; v < 6; ++v) CHECK(s.positions[v].y() == doctest::Approx(0.11));
}

TEST_CASE("swept crossing is caught and separated to the cloth thickness") {
  TriMesh cloth = two_triangle_cloth(0.01);
  CollisionConfig cfg;
  cfg.cloth_eps = 0.002;
  CollisionContext ctx(cfg, &cloth);
  ClothState s = ClothState::at_rest(cloth.vertices, 0.001);
  std::vector<Vec3> prev = s.positions;
  // drive the upper triangle straight through the lower one in one substep
  for (int v = 3; v < 6; ++v) {
    s.positions[v] += Vec3(0, -0.02, 0);
    s.velocities[v] = Vec3(0, -0.02 / 0.00033, 0);
  }
  ctx.resolve_cloth_cloth(s, prev, 0.00033);
  CHECK(ctx.stats().cloth_cloth_events > 0);
  // no tunneling: the upper triangle stays on its original side
  for (int v = 3; v < 6; ++v) CHECK(s.positions[v].y() > s.positions[v % 3].y() - 1e-9);
  for (const Vec3& p : s.positions) CHECK(p.allFinite());
}

TEST_CASE("impulse response preserves linear momentum") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> U(-0.004, 0.004);
  for (int trial = 0; trial < 50; ++trial) {
    TriMesh cloth = two_triangle_cloth(0.004);
    CollisionConfig cfg;
    cfg.cloth_eps = 0.002;
    CollisionContext ctx(cfg, &cloth);
    ClothState s = ClothState::at_rest(cloth.vertices, 0.001);
    std::vector<Vec3> prev = s.positions;
    for (int v = 3; v < 6; ++v) {
      s.positions[v] += Vec3(U(rng), -0.006 + U(rng), U(rng));
      s.velocities[v] = Vec3(U(rng), -1.0, U(rng));
    }
    Vec3 momentum_before = Vec3::Zero();
    for (int v = 0; v < 6; ++v) momentum_before += s.mass[v] * s.velocities[v];
    ctx.resolve_cloth_cloth(s, prev, 0.00033);
    Vec3 momentum_after = Vec3::Zero();
    for (int v = 0; v < 6; ++v) momentum_after += s.mass[v] * s.velocities[v];
    CHECK((momentum_after - momentum_before).norm() < 1e-10);
  }
}

TEST_CASE("cached broad phase still catches slow approaches over substeps") {
  // the grid is rebuilt only every few substeps; a pair drifting together
  // in between must still be detected (margin correctness)
  TriMesh cloth = two_triangle_cloth(0.012);
  CollisionConfig cfg;
  cfg.cloth_eps = 0.002;
  CollisionContext ctx(cfg, &cloth);
  ClothState s = ClothState::at_rest(cloth.vertices, 0.001);
  bool any = false;
  for (int step = 0; step < 30; ++step) {
    std::vector<Vec3> prev = s.positions;
    for (int v = 3; v < 6; ++v) {
      s.positions[v] += Vec3(0, -0.0005, 0);
      s.velocities[v] = Vec3(0, -0.0005 / 0.00033, 0);
    }
    ctx.resolve_cloth_cloth(s, prev, 0.00033);
    any = any || ctx.stats().cloth_cloth_events > 0;
    // never tunnels past its counterpart on the lower sheet
    for (int v = 3; v < 6; ++v) CHECK(s.positions[v].y() > s.positions[v - 3].y() - 1e-9);
  }
  CHECK(any);
}

TEST_CASE("divergent motion raises NumericalError instead of hanging") {
  TriMesh cloth = two_triangle_cloth(0.01);
  CollisionConfig cfg;
  CollisionContext ctx(cfg, &cloth);
  ClothState s = ClothState::at_rest(cloth.vertices, 0.001);
  std::vector<Vec3> prev = s.positions;
  s.positions[3] += Vec3(0, 500.0, 0);
  CHECK_THROWS_AS(ctx.resolve_cloth_cloth(s, prev, 0.00033), NumericalError);
}

TEST_CASE("floor resolve: projection and velocity clamp") {
  CollisionConfig cfg;
  cfg.floor.point = Vec3(0, 0, 0);
  cfg.floor.normal = Vec3(0, 1, 0);
  CollisionContext ctx(cfg, nullptr);
  ClothState s;
  s.positions = {Vec3(0, 0.5, 0), Vec3(0, -0.001, 0), Vec3(1, -0.002, 0)};
  s.velocities = {Vec3(0, -1, 0), Vec3(0.3, -2, 0), Vec3(0, -1, 0)};
  s.mass = {0.001, 0.001, 0.001};
  s.pinned = {0, 0, 1};
  ctx.resolve_floor(s);
  CHECK(s.positions[0] == Vec3(0, 0.5, 0));     // above: untouched
  CHECK(s.positions[1].y() == doctest::Approx(0.0));
  CHECK(s.velocities[1].y() == doctest::Approx(0.0));
  CHECK(s.velocities[1].x() == doctest::Approx(0.3));  // tangential kept
  CHECK(s.positions[2].y() == doctest::Approx(-0.002));  // pinned: untouched
}

TEST_CASE("falling sheet comes to rest on the floor") {
  TriMesh cloth = make_grid_cloth(6, 6, 0.02, 0.05);
  SpringSet springs = build_springs(cloth, cloth.vertices);
  MaterialParams mat = material_preset("soft");
  CollisionConfig cfg;
  cfg.floor.point = Vec3(0, 0, 0);
  cfg.floor.normal = Vec3(0, 1, 0);
  cfg.enable_cloth_cloth = false;
  CollisionContext ctx(cfg, &cloth);
  ClothState s = ClothState::at_rest(cloth.vertices, 0.001);
  SimConfig sim;
  sim.gravity_dir = Vec3(0, -1, 0);
  for (int frame = 0; frame < 30; ++frame)
    simulate_frame(s, springs, mat, sim, [&](ClothState& st, double) { ctx.resolve_floor(st); },
                   nullptr);
  for (const Vec3& p : s.positions) {
    CHECK(p.y() >= -1e-6);
    CHECK(p.y() < 0.002);  // resting on the plane, not hovering
  }
}

}  // TEST_SUITE
