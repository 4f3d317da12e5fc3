#pragma once

#include <memory>
#include <vector>

#include "clothtrack/core.hpp"
#include "clothtrack/mesh.hpp"
#include "clothtrack/simcore.hpp"

namespace ct {

struct ClosestPointResult {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();   // outward pseudo-normal at the closest point
  double signed_distance = 0.0; // negative inside
  int triangle = -1;
};

/// Closest-point / signed-distance queries against a deforming closed mesh.
/// The AABB tree is built once on the topology and refit when positions
/// change. Signed distance uses angle-weighted pseudo-normals so queries
/// near edges and vertices get a consistent sign.
class BodyCollider {
 public:
  BodyCollider(const TriMesh& mesh, const std::vector<Vec3>& positions);

  void update_positions(const std::vector<Vec3>& positions);
  ClosestPointResult closest_point(const Vec3& query) const;
  const std::vector<Vec3>& positions() const { return positions_; }

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;   // children, -1 at leaves
    int tri_begin = 0, tri_end = 0;
  };

  void build(const std::vector<Vec3>& positions);
  void refit();
  void rebuild_pseudo_normals();

  const TriMesh& mesh_;
  std::vector<Vec3> positions_;
  std::vector<Node> nodes_;
  std::vector<int> tri_order_;
  std::vector<Vec3> face_normals_;
  std::vector<Vec3> vertex_pseudo_normals_;
  std::vector<Vec3> edge_pseudo_normals_;  // indexed like mesh.edges
  std::vector<int> edge_lookup_;           // triangle*3+corner -> edge id
};

struct FloorPlane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3(0, 1, 0);
};

struct CollisionConfig {
  double body_eps = 0.003;   // cloth rest distance above body
  double cloth_eps = 0.002;  // cloth-cloth thickness
  bool enable_body = true;
  bool enable_cloth_cloth = true;
  bool enable_edge_edge = false;
  bool enable_floor = true;
  FloorPlane floor;
  double hash_cell = 0.04;   // >= max cloth edge length
};

struct CollisionStats {
  int body_projections = 0;
  int deep_unresolved = 0;
  int cloth_cloth_events = 0;
  int floor_projections = 0;
};

/// Per-substep collision state: interpolated body collider, cloth topology
/// for self collision, previous-position buffer for swept tests.
class CollisionContext {
 public:
  CollisionContext(const CollisionConfig& config, const TriMesh* cloth_mesh);

  void set_body(BodyCollider* body) { body_ = body; }
  const CollisionConfig& config() const { return config_; }
  CollisionStats& stats() { return stats_; }

  /// Projects cloth vertices found closer than body_eps to the body surface
  /// back to surface + body_eps; zeroes the inward velocity component.
  void resolve_body_cloth(ClothState& state);

  /// Swept vertex-triangle (and optionally edge-edge) self collision over
  /// the motion prev_positions -> state.positions within dt.
  void resolve_cloth_cloth(ClothState& state, const std::vector<Vec3>& prev_positions, double dt);

  void resolve_floor(ClothState& state);

 private:
  void build_vertex_adjacency();
  bool topologically_adjacent(int vertex, const std::array<int, 3>& tri) const;

  CollisionConfig config_;
  const TriMesh* cloth_mesh_;
  BodyCollider* body_ = nullptr;
  CollisionStats stats_;

  // 1-ring neighbor lists (sorted); topological neighbors are handled by
  // springs, not collision
  std::vector<std::vector<int>> vertex_neighbors_;

  // broad-phase grid cached across substeps, rebuilt with an inflation
  // margin covering the motion until the next rebuild
  struct Grid;
  std::shared_ptr<Grid> grid_;
  int substeps_since_rebuild_ = 0;
};

/// Earliest coplanarity time for two moving segments (a,b) and (c,d).
bool edge_edge_ccd(const Vec3& a0, const Vec3& da, const Vec3& b0, const Vec3& db,
                   const Vec3& c0, const Vec3& dc, const Vec3& d0, const Vec3& dd, double* t_hit);

/// Closest points between segments p1p2 and q1q2; returns parameters s,t in [0,1].
void closest_segment_segment(const Vec3& p1, const Vec3& p2, const Vec3& q1, const Vec3& q2,
                             double* s, double* t);

/// Earliest t in [0,1] at which moving point p(t)=p0+t*dp becomes coplanar
/// with moving triangle (a,b,c). Returns false if no root is bracketed.
bool vertex_triangle_ccd(const Vec3& p0, const Vec3& dp, const Vec3& a0, const Vec3& da,
                         const Vec3& b0, const Vec3& db, const Vec3& c0, const Vec3& dc,
                         double* t_hit);

/// Closest point on triangle abc to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace ct
