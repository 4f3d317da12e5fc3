#pragma once

#include <string>
#include <vector>

#include "clothtrack/core.hpp"
#include "clothtrack/mesh.hpp"

namespace ct {

struct Intrinsics {
  double fx = 525.0, fy = 525.0;
  double cx = 319.5, cy = 239.5;
  int width = 640, height = 480;

  Vec2 project(const Vec3& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
  Vec3 backproject(double u, double v, double depth) const {
    return {(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
  }
  bool in_frame(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u < width && v < height;
  }
};

/// Depth image in meters (0 = invalid) plus derived camera-space points and
/// normals (normals face the camera, -z-ish).
struct DepthFrame {
  Intrinsics intr;
  std::vector<float> depth;              // width*height, row-major
  std::vector<Vec3> points;              // valid where depth > 0
  std::vector<Vec3> normals;             // zero where invalid
  std::vector<uint8_t> normal_valid;

  int idx(int u, int v) const { return v * intr.width + u; }
  float depth_at(int u, int v) const { return depth[idx(u, v)]; }
  bool valid(int u, int v) const { return depth[idx(u, v)] > 0.0f; }
};

struct BlendWeightField {
  std::vector<double> psi;       // in [0,1], 0 for invisible vertices
  std::vector<uint8_t> visible;
};

struct MeshInstance {
  const TriMesh* mesh;
  const std::vector<Vec3>* positions;  // camera space
};

/// Z-buffer rasterization of the listed meshes (camera at origin, +z
/// forward, back-face culling off). Points/normals are not derived; call
/// depth_to_points afterwards.
DepthFrame rasterize_depth(const std::vector<MeshInstance>& meshes, const Intrinsics& intr);

/// Back-projects the depth buffer and estimates normals by central
/// differences; normals invalidated across depth jumps > 5 cm.
void depth_to_points(DepthFrame& frame);

/// Optional sensor model: per-pixel Gaussian depth noise (sigma scaled by
/// (z/1m)^2) plus random dropout near depth discontinuities.
void add_depth_noise(DepthFrame& frame, double sigma_z, double boundary_dropout, uint64_t seed);

/// Per-vertex visibility: projects in frame and camera depth <= buffer + tol.
std::vector<uint8_t> vertex_visibility(const std::vector<Vec3>& positions, const DepthFrame& scene,
                                       double tol);

/// Smooth depth-fitting weights from the distance transform of the
/// simulated cloth's rendered silhouette. ramp_px is the distance (in
/// pixels from the silhouette boundary) at which the weight saturates at 1.
BlendWeightField make_blend_mask(const TriMesh& cloth, const std::vector<Vec3>& positions,
                                 const Intrinsics& intr, double ramp_px,
                                 const std::vector<uint8_t>& visible);

/// Exact Euclidean distance transform in pixels (distance to the nearest
/// zero pixel; pixels outside the image count as zero).
std::vector<double> distance_transform(const std::vector<uint8_t>& mask, int width, int height);

// 16-bit raw depth I/O (millimeters, little endian) with a text intrinsics
// sidecar at <path>.intr.
void save_depth_raw(const std::string& path, const DepthFrame& frame);
DepthFrame load_depth_raw(const std::string& path);

}  // namespace ct
