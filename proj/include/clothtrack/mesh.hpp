#pragma once

#include <array>
#include <string>
#include <vector>

#include "clothtrack/core.hpp"

namespace ct {

/// Triangle mesh with edge and edge->triangle adjacency tables.
/// Edges are stored as (min,max) index pairs sorted lexicographically so
/// spring enumeration order is reproducible.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<int, 2>> edges;
  // Up to two incident triangles per edge, -1 when absent.
  std::vector<std::array<int, 2>> edge_tris;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }
  int interior_edge_count() const;

  /// Rebuilds edges and adjacency from the triangle list.
  void build_adjacency();
};

struct StretchSpring {
  int i = 0, j = 0;
  double rest_length = 0.0;
};

/// Hinge over an interior edge. p1,p2 span the shared edge; p3 and p4 are
/// the opposite vertices of the two incident triangles.
struct TorsionSpring {
  int p1 = 0, p2 = 0, p3 = 0, p4 = 0;
  double rest_angle = 0.0;  // [0, pi], unsigned dihedral at rest
};

struct SpringSet {
  std::vector<StretchSpring> stretch;
  std::vector<TorsionSpring> torsion;
};

TriMesh load_mesh(const std::string& path);
void save_mesh(const std::string& path, const TriMesh& mesh, const std::vector<Vec3>& positions);

/// One stretch spring per edge, one torsion spring per interior edge.
/// Rest lengths/angles measured on rest_positions.
SpringSet build_springs(const TriMesh& mesh, const std::vector<Vec3>& rest_positions);

/// Area-weighted vertex normals, normalized. Zero for isolated vertices.
std::vector<Vec3> compute_normals(const TriMesh& mesh, const std::vector<Vec3>& positions);

/// Unsigned dihedral angle between the normals of the two triangles of a
/// hinge, in [0, pi].
double dihedral_angle(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p4);

/// Signed dihedral angle in (-pi, pi] and its gradient wrt the four hinge
/// vertices. The gradients sum to zero.
double dihedral_angle_signed(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p4,
                             Vec3 grad[4]);

}  // namespace ct
