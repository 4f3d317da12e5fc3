#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <random>

#include "clothtrack/depthcam.hpp"
#include "clothtrack/procedural.hpp"

using namespace ct;

namespace {

Intrinsics small_intr() {
  Intrinsics intr;
  intr.width = 64;
  intr.height = 48;
  intr.fx = intr.fy = 60.0;
  intr.cx = 31.5;
  intr.cy = 23.5;
  return intr;
}

// axis-aligned quad (two triangles) at constant camera depth z
TriMesh make_quad(double half, double z, bool flip = false) {
  TriMesh m;
  m.vertices = {Vec3(-half, -half, z), Vec3(half, -half, z), Vec3(half, half, z),
                Vec3(-half, half, z)};
  if (flip)
    m.triangles = {{0, 2, 1}, {0, 3, 2}};
  else
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
  m.build_adjacency();
  return m;
}

// brute-force squared EDT with the virtual zero border
std::vector<double> brute_edt(const std::vector<uint8_t>& mask, int w, int h) {
  std::vector<double> out(w * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask[y * w + x]) continue;
      double best = std::numeric_limits<double>::max();
      // zero pixels inside the image
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
          if (!mask[v * w + u])
            best = std::min(best, double((u - x) * (u - x) + (v - y) * (v - y)));
      // virtual zero pixels just outside each border
      best = std::min({best, double((x + 1) * (x + 1)), double((y + 1) * (y + 1)),
                       double((w - x) * (w - x)), double((h - y) * (h - y))});
      out[y * w + x] = best;
    }
  return out;
}

}  // namespace

TEST_SUITE("depthcam") {

TEST_CASE("constant-depth quad rasterizes to its exact depth") {
  Intrinsics intr = small_intr();
  TriMesh quad = make_quad(0.5, 2.0);
  DepthFrame frame = rasterize_depth({{&quad, &quad.vertices}}, intr);
  // the quad spans +-0.5 m at 2 m: +-15 px around the principal point
  int hits = 0;
  for (int v = 0; v < intr.height; ++v)
    for (int u = 0; u < intr.width; ++u) {
      double x = (u - intr.cx) / intr.fx * 2.0, y = (v - intr.cy) / intr.fy * 2.0;
      bool inside = std::abs(x) < 0.49 && std::abs(y) < 0.49;
      bool outside = std::abs(x) > 0.51 || std::abs(y) > 0.51;
      if (inside) {
        CHECK(frame.depth_at(u, v) == doctest::Approx(2.0).epsilon(1e-6));
        ++hits;
      } else if (outside) {
        CHECK(frame.depth_at(u, v) == 0.0f);
      }
    }
  CHECK(hits > 700);  // ~30x30 px footprint
}

TEST_CASE("z-buffer keeps the nearer of two overlapping surfaces") {
  Intrinsics intr = small_intr();
  TriMesh near_q = make_quad(0.2, 1.5);
  TriMesh far_q = make_quad(0.8, 3.0);
  DepthFrame frame = rasterize_depth({{&far_q, &far_q.vertices}, {&near_q, &near_q.vertices}},
                                     intr);
  int u0 = static_cast<int>(intr.cx), v0 = static_cast<int>(intr.cy);
  CHECK(frame.depth_at(u0, v0) == doctest::Approx(1.5).epsilon(1e-6));
  // a pixel covered only by the far quad
  double xf = 0.6;  // meters at z=3 -> 12 px off center
  int uf = static_cast<int>(std::lround(intr.fx * xf / 3.0 + intr.cx));
  CHECK(frame.depth_at(uf, v0) == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("winding does not matter: back-face culling is off") {
  Intrinsics intr = small_intr();
  TriMesh a = make_quad(0.5, 2.0, false);
  TriMesh b = make_quad(0.5, 2.0, true);
  DepthFrame fa = rasterize_depth({{&a, &a.vertices}}, intr);
  DepthFrame fb = rasterize_depth({{&b, &b.vertices}}, intr);
  for (size_t i = 0; i < fa.depth.size(); ++i) CHECK(fa.depth[i] == fb.depth[i]);
}

TEST_CASE("slanted triangle depth matches the ray-plane intersection") {
  Intrinsics intr = small_intr();
  TriMesh m;
  m.vertices = {Vec3(-0.4, -0.35, 1.9), Vec3(0.45, -0.3, 2.4), Vec3(0.0, 0.5, 2.1)};
  m.triangles = {{0, 1, 2}};
  m.build_adjacency();
  DepthFrame frame = rasterize_depth({{&m, &m.vertices}}, intr);
  Vec3 n = (m.vertices[1] - m.vertices[0]).cross(m.vertices[2] - m.vertices[0]);
  double d = n.dot(m.vertices[0]);
  int checked = 0;
  for (int v = 0; v < intr.height; ++v)
    for (int u = 0; u < intr.width; ++u) {
      if (!frame.valid(u, v)) continue;
      Vec3 ray((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      double z_exact = d / n.dot(ray);
      // inverse depth is linear in screen space, so a planar triangle
      // rasterizes to the exact ray-plane depth (float buffer precision)
      CHECK(frame.depth_at(u, v) == doctest::Approx(z_exact).epsilon(1e-6));
      ++checked;
    }
  CHECK(checked > 100);
}

TEST_CASE("projection and backprojection invert each other") {
  Intrinsics intr;  // default 640x480
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Vec3 p(U(rng), U(rng), 1.5 + U(rng));
    Vec2 uv = intr.project(p);
    Vec3 back = intr.backproject(uv.x(), uv.y(), p.z());
    CHECK((back - p).norm() < 1e-12);
  }
}

TEST_CASE("depth_to_points backprojects within half a pixel") {
  Intrinsics intr = small_intr();
  TriMesh quad = make_quad(0.5, 2.0);
  DepthFrame frame = rasterize_depth({{&quad, &quad.vertices}}, intr);
  depth_to_points(frame);
  for (int v = 0; v < intr.height; ++v)
    for (int u = 0; u < intr.width; ++u) {
      if (!frame.valid(u, v)) continue;
      Vec2 uv = intr.project(frame.points[frame.idx(u, v)]);
      CHECK(std::abs(uv.x() - u) <= 0.5);
      CHECK(std::abs(uv.y() - v) <= 0.5);
    }
}

TEST_CASE("sphere normals match the analytic surface normal within 5 deg") {
  Intrinsics intr;  // full resolution keeps the finite differences tight
  Vec3 center(0.0, 0.0, 2.0);
  TriMesh sphere = make_uv_sphere(center, 0.5, 96, 128);
  DepthFrame frame = rasterize_depth({{&sphere, &sphere.vertices}}, intr);
  depth_to_points(frame);
  int checked = 0;
  double worst = 0.0;
  for (int v = 0; v < intr.height; v += 3)
    for (int u = 0; u < intr.width; u += 3) {
      int id = frame.idx(u, v);
      if (!frame.normal_valid[id]) continue;
      Vec3 p = frame.points[id];
      Vec3 analytic = (p - center).normalized();
      // skip the silhouette band where the raster surface is truncated
      if (analytic.z() > -0.5) continue;
      CHECK(frame.normals[id].z() < 0.0);  // faces the camera
      double cosang = std::clamp(std::abs(frame.normals[id].dot(analytic)), 0.0, 1.0);
      worst = std::max(worst, std::acos(cosang) * 180.0 / M_PI);
      ++checked;
    }
  CHECK(checked > 300);
  CHECK(worst < 5.0);
}

TEST_CASE("normals invalidated across depth discontinuities") {
  Intrinsics intr = small_intr();
  TriMesh near_q = make_quad(0.25, 1.5);
  TriMesh far_q = make_quad(1.2, 3.0);
  DepthFrame frame = rasterize_depth({{&far_q, &far_q.vertices}, {&near_q, &near_q.vertices}},
                                     intr);
  depth_to_points(frame);
  // walk a scanline through the centre: the jump column must be invalid
  int v0 = static_cast<int>(intr.cy);
  bool found_invalid_at_jump = false;
  for (int u = 1; u < intr.width - 1; ++u) {
    float a = frame.depth_at(u - 1, v0), b = frame.depth_at(u + 1, v0);
    if (a > 0 && b > 0 && std::abs(a - b) > 0.5) {
      if (!frame.normal_valid[frame.idx(u, v0)]) found_invalid_at_jump = true;
    }
  }
  CHECK(found_invalid_at_jump);
  // interior of each quad keeps valid, axis-aligned normals
  int uc = static_cast<int>(intr.cx);
  REQUIRE(frame.normal_valid[frame.idx(uc, v0)]);
  CHECK(frame.normals[frame.idx(uc, v0)].isApprox(Vec3(0, 0, -1), 1e-6));
}

TEST_CASE("distance transform equals brute force on random masks") {
  std::mt19937 rng(17);
  for (auto [w, h] : {std::pair{7, 5}, {16, 16}, {33, 9}, {64, 48}}) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<uint8_t> mask(w * h);
    for (auto& m : mask) m = U(rng) < 0.7 ? 1 : 0;
    std::vector<double> fast = distance_transform(mask, w, h);
    std::vector<double> slow = brute_edt(mask, w, h);
    for (int i = 0; i < w * h; ++i) CHECK(fast[i] == doctest::Approx(std::sqrt(slow[i])));
  }
}

TEST_CASE("distance transform of a disk peaks at the radius") {
  const int w = 41, h = 41, r = 12;
  std::vector<uint8_t> mask(w * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((x - 20) * (x - 20) + (y - 20) * (y - 20) <= r * r) mask[y * w + x] = 1;
  std::vector<double> dt = distance_transform(mask, w, h);
  double center = dt[20 * w + 20];
  CHECK(center >= r - 1.0);
  CHECK(center <= r + 1.0);
  // all-ones mask: distance governed by the virtual border
  std::vector<uint8_t> ones(w * h, 1);
  std::vector<double> dt1 = distance_transform(ones, w, h);
  CHECK(dt1[20 * w + 20] == doctest::Approx(21.0));
  CHECK(dt1[0] == doctest::Approx(1.0));
}

TEST_CASE("blend mask: zero at the silhouette boundary, one deep inside") {
  Intrinsics intr;  // full resolution so the ramp fits inside the footprint
  TriMesh quad = make_quad(0.5, 2.0);
  DepthFrame scene = rasterize_depth({{&quad, &quad.vertices}}, intr);
  std::vector<uint8_t> visible = vertex_visibility(quad.vertices, scene, 0.003);
  BlendWeightField blend = make_blend_mask(quad, quad.vertices, intr, 8.0, visible);
  REQUIRE(blend.psi.size() == 4);
  // corners sit exactly on the silhouette boundary (psi 0 if pixel rounding
  // pushes a corner off the rasterized footprint entirely)
  for (double p : blend.psi) CHECK(p < 0.25);

  // a finer grid puts vertices far inside the silhouette
  TriMesh grid = make_grid_cloth(10, 10, 0.1);
  std::vector<Vec3> pos(grid.vertex_count());
  for (int v = 0; v < grid.vertex_count(); ++v) {
    const Vec3& q = grid.vertices[v];  // xz plane -> face the camera
    pos[v] = Vec3(q.x() - 0.5, q.z() - 0.5, 2.0);
  }
  DepthFrame scene2 = rasterize_depth({{&grid, &pos}}, intr);
  std::vector<uint8_t> vis2 = vertex_visibility(pos, scene2, 0.003);
  BlendWeightField b2 = make_blend_mask(grid, pos, intr, 8.0, vis2);
  int interior_ones = 0;
  for (int v = 0; v < grid.vertex_count(); ++v) {
    Vec2 uv = intr.project(pos[v]);
    double margin_px = std::min({uv.x() - intr.project(Vec3(-0.5, -0.5, 2)).x(),
                                 intr.project(Vec3(0.5, 0.5, 2)).x() - uv.x(),
                                 uv.y() - intr.project(Vec3(-0.5, -0.5, 2)).y(),
                                 intr.project(Vec3(0.5, 0.5, 2)).y() - uv.y()});
    if (margin_px > 30) {
      CHECK(b2.psi[v] == doctest::Approx(1.0));
      ++interior_ones;
    }
  }
  CHECK(interior_ones > 20);
  // invisible vertices get psi = 0
  std::vector<uint8_t> none(grid.vertex_count(), 0);
  BlendWeightField b3 = make_blend_mask(grid, pos, intr, 8.0, none);
  for (double p : b3.psi) CHECK(p == 0.0);
}

TEST_CASE("vertex visibility against an occluder") {
  Intrinsics intr = small_intr();
  TriMesh quad = make_quad(0.5, 2.0);
  DepthFrame scene = rasterize_depth({{&quad, &quad.vertices}}, intr);
  depth_to_points(scene);
  std::vector<Vec3> probes = {
      Vec3(0, 0, 1.5),    // in front of the quad
      Vec3(0, 0, 2.0),    // on the quad
      Vec3(0, 0, 2.5),    // behind the quad
      Vec3(5, 0, 2.0),    // projects outside the frame
      Vec3(0, 0, -1.0)};  // behind the camera
  std::vector<uint8_t> vis = vertex_visibility(probes, scene, 0.003);
  CHECK(vis[0] == 1);
  CHECK(vis[1] == 1);
  CHECK(vis[2] == 0);
  CHECK(vis[3] == 0);
  CHECK(vis[4] == 0);
}

TEST_CASE("depth noise statistics and determinism") {
  Intrinsics intr;  // plenty of samples
  TriMesh quad = make_quad(0.8, 2.0);
  DepthFrame clean = rasterize_depth({{&quad, &quad.vertices}}, intr);
  DepthFrame noisy = clean;
  const double sigma = 0.005;
  add_depth_noise(noisy, sigma, 0.0, 42);
  double sum = 0.0, sq = 0.0;
  int n = 0;
  for (size_t i = 0; i < clean.depth.size(); ++i) {
    if (clean.depth[i] <= 0.0f) {
      CHECK(noisy.depth[i] == 0.0f);  // holes stay holes
      continue;
    }
    double d = noisy.depth[i] - clean.depth[i];
    sum += d;
    sq += d * d;
    ++n;
  }
  REQUIRE(n > 100000);
  double mean = sum / n;
  double stddev = std::sqrt(sq / n - mean * mean);
  // sigma scales with (z/1m)^2 = 4 at z = 2
  double expect = sigma * 4.0;
  CHECK(std::abs(mean) < 3.0 * expect / std::sqrt(double(n)));
  CHECK(stddev == doctest::Approx(expect).epsilon(0.05));

  DepthFrame again = clean;
  add_depth_noise(again, sigma, 0.0, 42);
  for (size_t i = 0; i < again.depth.size(); ++i) CHECK(again.depth[i] == noisy.depth[i]);
  DepthFrame other = clean;
  add_depth_noise(other, sigma, 0.0, 43);
  int differing = 0;
  for (size_t i = 0; i < other.depth.size(); ++i) differing += other.depth[i] != noisy.depth[i];
  CHECK(differing > n / 2);
}

TEST_CASE("boundary dropout removes pixels only near discontinuities") {
  Intrinsics intr = small_intr();
  TriMesh near_q = make_quad(0.25, 1.5);
  TriMesh far_q = make_quad(1.2, 3.0);
  DepthFrame clean = rasterize_depth({{&far_q, &far_q.vertices}, {&near_q, &near_q.vertices}},
                                     intr);
  DepthFrame noisy = clean;
  add_depth_noise(noisy, 0.0, 1.0, 7);
  int dropped_near_jump = 0, dropped_interior = 0;
  for (int v = 1; v < intr.height - 1; ++v)
    for (int u = 1; u < intr.width - 1; ++u) {
      int id = clean.idx(u, v);
      if (clean.depth[id] <= 0.0f) continue;
      bool near_jump = false;
      for (int dv = -1; dv <= 1 && !near_jump; ++dv)
        for (int du = -1; du <= 1; ++du) {
          float nb = clean.depth[clean.idx(u + du, v + dv)];
          if (std::abs(nb - clean.depth[id]) > 0.1) { near_jump = true; break; }
        }
      if (noisy.depth[id] == 0.0f) (near_jump ? dropped_near_jump : dropped_interior)++;
    }
  CHECK(dropped_near_jump > 0);
  CHECK(dropped_interior == 0);
}

TEST_CASE("raw depth file round-trips within the 1 mm quantization") {
  Intrinsics intr = small_intr();
  TriMesh quad = make_quad(0.4, 2.0);
  DepthFrame frame = rasterize_depth({{&quad, &quad.vertices}}, intr);
  depth_to_points(frame);
  std::string path = "/tmp/ct_depthcam_roundtrip.raw";
  save_depth_raw(path, frame);
  DepthFrame back = load_depth_raw(path);
  CHECK(back.intr.width == intr.width);
  CHECK(back.intr.fx == doctest::Approx(intr.fx));
  CHECK(back.intr.cx == doctest::Approx(intr.cx));
  REQUIRE(back.depth.size() == frame.depth.size());
  for (size_t i = 0; i < frame.depth.size(); ++i) {
    if (frame.depth[i] <= 0.0f)
      CHECK(back.depth[i] == 0.0f);
    else
      CHECK(std::abs(back.depth[i] - frame.depth[i]) <= 0.0006);
  }
  // points/normals are re-derived on load
  CHECK(back.points.size() == back.depth.size());
  std::remove(path.c_str());
  std::remove((path + ".intr").c_str());
}

}  // TEST_SUITE
