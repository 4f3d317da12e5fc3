#include "clothtrack/depthcam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace ct {

DepthFrame rasterize_depth(const std::vector<MeshInstance>& meshes, const Intrinsics& intr) {
  DepthFrame frame;
  frame.intr = intr;
  frame.depth.assign(intr.width * intr.height, 0.0f);
  std::vector<float> inv_z(intr.width * intr.height, 0.0f);  // max 1/z wins

  for (const MeshInstance& inst : meshes) {
    const auto& pos = *inst.positions;
    for (const auto& tri : inst.mesh->triangles) {
      const Vec3 &A = pos[tri[0]], &B = pos[tri[1]], &C = pos[tri[2]];
      if (A.z() <= 1e-6 || B.z() <= 1e-6 || C.z() <= 1e-6) continue;  // no near-plane clipping
      Vec2 a = intr.project(A), b = intr.project(B), c = intr.project(C);
      double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
      if (std::abs(area) < 1e-12) continue;
      int u0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
      int u1 = std::min(intr.width - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
      int v0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
      int v1 = std::min(intr.height - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
      if (u0 > u1 || v0 > v1) continue;
      const double iza = 1.0 / A.z(), izb = 1.0 / B.z(), izc = 1.0 / C.z();
      for (int v = v0; v <= v1; ++v) {
        for (int u = u0; u <= u1; ++u) {
          Vec2 p(u, v);
          double w0 = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area;
          double w1 = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area;
          double w2 = 1.0 - w0 - w1;
          if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
          // inverse depth interpolates linearly in screen space
          float iz = static_cast<float>(w0 * iza + w1 * izb + w2 * izc);
          int id = frame.idx(u, v);
          if (iz > inv_z[id]) {
            inv_z[id] = iz;
            frame.depth[id] = 1.0f / iz;
          }
        }
      }
    }
  }
  return frame;
}

void depth_to_points(DepthFrame& frame) {
  const Intrinsics& intr = frame.intr;
  const int W = intr.width, H = intr.height;
  frame.points.assign(W * H, Vec3::Zero());
  frame.normals.assign(W * H, Vec3::Zero());
  frame.normal_valid.assign(W * H, 0);
  for (int v = 0; v < H; ++v)
    for (int u = 0; u < W; ++u) {
      double d = frame.depth[frame.idx(u, v)];
      if (d > 0.0) frame.points[frame.idx(u, v)] = intr.backproject(u, v, d);
    }
  const double jump = 0.05;  // discontinuity threshold
  for (int v = 1; v < H - 1; ++v) {
    for (int u = 1; u < W - 1; ++u) {
      int id = frame.idx(u, v);
      if (frame.depth[id] <= 0.0f) continue;
      int l = frame.idx(u - 1, v), r = frame.idx(u + 1, v);
      int t = frame.idx(u, v - 1), bo = frame.idx(u, v + 1);
      if (frame.depth[l] <= 0.0f || frame.depth[r] <= 0.0f || frame.depth[t] <= 0.0f ||
          frame.depth[bo] <= 0.0f)
        continue;
      double dc = frame.depth[id];
      if (std::abs(frame.depth[l] - dc) > jump || std::abs(frame.depth[r] - dc) > jump ||
          std::abs(frame.depth[t] - dc) > jump || std::abs(frame.depth[bo] - dc) > jump)
        continue;
      Vec3 du = frame.points[r] - frame.points[l];
      Vec3 dv = frame.points[bo] - frame.points[t];
      Vec3 n = du.cross(dv);
      double len = n.norm();
      if (len < 1e-20) continue;
      n /= len;
      if (n.z() > 0.0) n = -n;  // face the camera
      frame.normals[id] = n;
      frame.normal_valid[id] = 1;
    }
  }
}

void add_depth_noise(DepthFrame& frame, double sigma_z, double boundary_dropout, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int W = frame.intr.width, H = frame.intr.height;
  std::vector<uint8_t> boundary(W * H, 0);
  if (boundary_dropout > 0.0) {
    for (int v = 1; v < H - 1; ++v)
      for (int u = 1; u < W - 1; ++u) {
        int id = frame.idx(u, v);
        if (frame.depth[id] <= 0.0f) continue;
        float dc = frame.depth[id];
        for (int k : {frame.idx(u - 1, v), frame.idx(u + 1, v), frame.idx(u, v - 1),
                      frame.idx(u, v + 1)})
          if (frame.depth[k] <= 0.0f || std::abs(frame.depth[k] - dc) > 0.05f) boundary[id] = 1;
      }
  }
  for (int i = 0; i < W * H; ++i) {
    if (frame.depth[i] <= 0.0f) continue;
    if (boundary[i] && uni(rng) < boundary_dropout) {
      frame.depth[i] = 0.0f;
      continue;
    }
    double z = frame.depth[i];
    frame.depth[i] = static_cast<float>(std::max(1e-4, z + sigma_z * z * z * gauss(rng)));
  }
}

std::vector<uint8_t> vertex_visibility(const std::vector<Vec3>& positions, const DepthFrame& scene,
                                       double tol) {
  std::vector<uint8_t> visible(positions.size(), 0);
  const Intrinsics& intr = scene.intr;
  for (size_t i = 0; i < positions.size(); ++i) {
    const Vec3& p = positions[i];
    if (p.z() <= 1e-6) continue;
    Vec2 uv = intr.project(p);
    int u = static_cast<int>(std::lround(uv.x())), v = static_cast<int>(std::lround(uv.y()));
    if (u < 0 || v < 0 || u >= intr.width || v >= intr.height) continue;
    float d = scene.depth[scene.idx(u, v)];
    if (d <= 0.0f) continue;
    if (p.z() <= d + tol) visible[i] = 1;
  }
  return visible;
}

std::vector<double> distance_transform(const std::vector<uint8_t>& mask, int width, int height) {
  // Felzenszwalb & Huttenlocher EDT, columns then rows. Each 1-D pass runs on
  // the row/column extended by one virtual zero sample at either end, so the
  // image border contributes exactly like a ring of zero pixels around it.
  const double INF = 1e20;
  const int ext = std::max(width, height) + 2;
  std::vector<double> f(ext);
  std::vector<double> d(ext);
  std::vector<int> v(ext);
  std::vector<double> z(ext + 1);
  std::vector<double> dist(width * height);

  auto edt_1d = [&](int n) {
    int k = 0;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for (int q = 1; q < n; ++q) {
      double s;
      while (true) {
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        if (s <= z[k]) {
          --k;
        } else {
          break;
        }
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = INF;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
      while (z[k + 1] < q) ++k;
      d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
    }
  };

  for (int x = 0; x < width; ++x) {
    f[0] = 0.0;
    for (int y = 0; y < height; ++y) f[y + 1] = mask[y * width + x] ? INF : 0.0;
    f[height + 1] = 0.0;
    edt_1d(height + 2);
    for (int y = 0; y < height; ++y) dist[y * width + x] = d[y + 1];
  }
  for (int y = 0; y < height; ++y) {
    f[0] = 0.0;
    for (int x = 0; x < width; ++x) f[x + 1] = dist[y * width + x];
    f[width + 1] = 0.0;
    edt_1d(width + 2);
    for (int x = 0; x < width; ++x) dist[y * width + x] = d[x + 1];
  }
  for (double& x : dist) x = std::sqrt(x);
  return dist;
}

BlendWeightField make_blend_mask(const TriMesh& cloth, const std::vector<Vec3>& positions,
                                 const Intrinsics& intr, double ramp_px,
                                 const std::vector<uint8_t>& visible) {
  BlendWeightField field;
  field.visible = visible;
  field.psi.assign(positions.size(), 0.0);

  DepthFrame sil = rasterize_depth({{&cloth, &positions}}, intr);
  std::vector<uint8_t> mask(intr.width * intr.height, 0);
  bool any = false;
  for (size_t i = 0; i < mask.size(); ++i) {
    mask[i] = sil.depth[i] > 0.0f ? 1 : 0;
    any = any || mask[i];
  }
  if (!any) return field;  // cloth outside the frustum: pure simulation

  std::vector<double> dist = distance_transform(mask, intr.width, intr.height);
  for (size_t i = 0; i < positions.size(); ++i) {
    if (!visible[i]) continue;
    const Vec3& p = positions[i];
    if (p.z() <= 1e-6) continue;
    Vec2 uv = intr.project(p);
    int u = static_cast<int>(std::lround(uv.x())), v = static_cast<int>(std::lround(uv.y()));
    if (u < 0 || v < 0 || u >= intr.width || v >= intr.height) continue;
    // silhouette-edge pixels sit at distance 1 from background; measure the
    // ramp from the boundary itself
    double dpix = std::max(0.0, dist[v * intr.width + u] - 1.0);
    field.psi[i] = std::clamp(dpix / ramp_px, 0.0, 1.0);
  }
  return field;
}

void save_depth_raw(const std::string& path, const DepthFrame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write depth file: " + path);
  std::vector<uint16_t> mm(frame.depth.size());
  for (size_t i = 0; i < frame.depth.size(); ++i) {
    double v = std::clamp(frame.depth[i] * 1000.0, 0.0, 65535.0);
    mm[i] = static_cast<uint16_t>(std::lround(v));
  }
  out.write(reinterpret_cast<const char*>(mm.data()), mm.size() * sizeof(uint16_t));
  std::ofstream sidecar(path + ".intr");
  sidecar << frame.intr.fx << " " << frame.intr.fy << " " << frame.intr.cx << " "
          << frame.intr.cy << " " << frame.intr.width << " " << frame.intr.height << "\n";
}

DepthFrame load_depth_raw(const std::string& path) {
  std::ifstream sidecar(path + ".intr");
  if (!sidecar) throw MissingDataError("missing intrinsics sidecar: " + path + ".intr");
  DepthFrame frame;
  if (!(sidecar >> frame.intr.fx >> frame.intr.fy >> frame.intr.cx >> frame.intr.cy >>
        frame.intr.width >> frame.intr.height))
    throw InputError("malformed intrinsics sidecar: " + path + ".intr");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDataError("missing depth file: " + path);
  std::vector<uint16_t> mm(frame.intr.width * frame.intr.height);
  in.read(reinterpret_cast<char*>(mm.data()), mm.size() * sizeof(uint16_t));
  if (!in) throw InputError("truncated depth file: " + path);
  frame.depth.resize(mm.size());
  for (size_t i = 0; i < mm.size(); ++i) frame.depth[i] = mm[i] / 1000.0f;
  depth_to_points(frame);
  return frame;
}

}  // namespace ct
