#include "clothtrack/collision.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

namespace ct {

// ---------------------------------------------------------------- triangle

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Ericson, Real-Time Collision Detection, 5.1.5
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  Vec3 bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  Vec3 cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// ------------------------------------------------------------ BodyCollider

BodyCollider::BodyCollider(const TriMesh& mesh, const std::vector<Vec3>& positions)
    : mesh_(mesh) {
  if (positions.size() != mesh.vertices.size())
    throw InputError("BodyCollider: position count mismatch");
  // edge lookup: (min,max) pair -> edge id, then triangle corner -> edge id
  std::map<std::array<int, 2>, int> edge_ids;
  for (int e = 0; e < mesh_.edge_count(); ++e) edge_ids[mesh_.edges[e]] = e;
  edge_lookup_.assign(mesh_.triangle_count() * 3, -1);
  for (int t = 0; t < mesh_.triangle_count(); ++t) {
    for (int c = 0; c < 3; ++c) {
      int a = mesh_.triangles[t][c], b = mesh_.triangles[t][(c + 1) % 3];
      edge_lookup_[t * 3 + c] = edge_ids.at({std::min(a, b), std::max(a, b)});
    }
  }
  build(positions);
}

void BodyCollider::build(const std::vector<Vec3>& positions) {
  positions_ = positions;
  tri_order_.resize(mesh_.triangle_count());
  std::iota(tri_order_.begin(), tri_order_.end(), 0);
  nodes_.clear();
  nodes_.reserve(2 * mesh_.triangle_count());

  struct Item {
    int node;
    int begin, end;
  };
  auto centroid = [&](int t) {
    const auto& tri = mesh_.triangles[t];
    return (positions_[tri[0]] + positions_[tri[1]] + positions_[tri[2]]) / 3.0;
  };
  nodes_.push_back({});
  std::vector<Item> stack{{0, 0, mesh_.triangle_count()}};
  while (!stack.empty()) {
    Item it = stack.back();
    stack.pop_back();
    Node& node = nodes_[it.node];
    node.tri_begin = it.begin;
    node.tri_end = it.end;
    if (it.end - it.begin <= 4) continue;  // leaf
    Vec3 lo = Vec3::Constant(1e30), hi = Vec3::Constant(-1e30);
    for (int k = it.begin; k < it.end; ++k) {
      Vec3 c = centroid(tri_order_[k]);
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] < 1e-12) continue;
    int mid = (it.begin + it.end) / 2;
    std::nth_element(tri_order_.begin() + it.begin, tri_order_.begin() + mid,
                     tri_order_.begin() + it.end,
                     [&](int a, int b) { return centroid(a)[axis] < centroid(b)[axis]; });
    int li = static_cast<int>(nodes_.size());
    node.left = li;
    node.right = li + 1;
    nodes_.push_back({});
    nodes_.push_back({});
    stack.push_back({li, it.begin, mid});
    stack.push_back({li + 1, mid, it.end});
  }
  refit();
  rebuild_pseudo_normals();
}

void BodyCollider::update_positions(const std::vector<Vec3>& positions) {
  if (positions.size() != positions_.size())
    throw InputError("BodyCollider: position count changed");
  positions_ = positions;
  refit();
  rebuild_pseudo_normals();
}

void BodyCollider::refit() {
  // children were pushed after parents, so reverse order refits bottom-up
  for (int n = static_cast<int>(nodes_.size()) - 1; n >= 0; --n) {
    Node& node = nodes_[n];
    if (node.left >= 0) {
      node.lo = nodes_[node.left].lo.cwiseMin(nodes_[node.right].lo);
      node.hi = nodes_[node.left].hi.cwiseMax(nodes_[node.right].hi);
    } else {
      Vec3 lo = Vec3::Constant(1e30), hi = Vec3::Constant(-1e30);
      for (int k = node.tri_begin; k < node.tri_end; ++k) {
        for (int v : mesh_.triangles[tri_order_[k]]) {
          lo = lo.cwiseMin(positions_[v]);
          hi = hi.cwiseMax(positions_[v]);
        }
      }
      node.lo = lo;
      node.hi = hi;
    }
  }
}

void BodyCollider::rebuild_pseudo_normals() {
  const int T = mesh_.triangle_count();
  face_normals_.assign(T, Vec3::Zero());
  vertex_pseudo_normals_.assign(positions_.size(), Vec3::Zero());
  edge_pseudo_normals_.assign(mesh_.edge_count(), Vec3::Zero());
  for (int t = 0; t < T; ++t) {
    const auto& tri = mesh_.triangles[t];
    const Vec3 &a = positions_[tri[0]], &b = positions_[tri[1]], &c = positions_[tri[2]];
    Vec3 n = (b - a).cross(c - a);
    double len = n.norm();
    if (len < 1e-20) continue;
    n /= len;
    face_normals_[t] = n;
    for (int cidx = 0; cidx < 3; ++cidx) {
      // angle-weighted vertex pseudo-normal (Baerentzen & Aanaes)
      const Vec3& p = positions_[tri[cidx]];
      Vec3 e1 = (positions_[tri[(cidx + 1) % 3]] - p).normalized();
      Vec3 e2 = (positions_[tri[(cidx + 2) % 3]] - p).normalized();
      double angle = std::acos(std::clamp(e1.dot(e2), -1.0, 1.0));
      vertex_pseudo_normals_[tri[cidx]] += angle * n;
      edge_pseudo_normals_[edge_lookup_[t * 3 + cidx]] += n;
    }
  }
  for (Vec3& n : vertex_pseudo_normals_)
    if (n.norm() > 1e-20) n.normalize();
  for (Vec3& n : edge_pseudo_normals_)
    if (n.norm() > 1e-20) n.normalize();
}

namespace {
double aabb_dist_sq(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  double d = 0.0;
  for (int i = 0; i < 3; ++i) {
    double v = std::max({lo[i] - p[i], 0.0, p[i] - hi[i]});
    d += v * v;
  }
  return d;
}
}  // namespace

ClosestPointResult BodyCollider::closest_point(const Vec3& query) const {
  ClosestPointResult best;
  double best_sq = 1e30;
  // small explicit stack, nearer child first
  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    int ni = stack[--top];
    const Node& node = nodes_[ni];
    if (aabb_dist_sq(query, node.lo, node.hi) >= best_sq) continue;
    if (node.left >= 0) {
      double dl = aabb_dist_sq(query, nodes_[node.left].lo, nodes_[node.left].hi);
      double dr = aabb_dist_sq(query, nodes_[node.right].lo, nodes_[node.right].hi);
      if (dl < dr) {
        stack[top++] = node.right;
        stack[top++] = node.left;
      } else {
        stack[top++] = node.left;
        stack[top++] = node.right;
      }
      continue;
    }
    for (int k = node.tri_begin; k < node.tri_end; ++k) {
      int t = tri_order_[k];
      const auto& tri = mesh_.triangles[t];
      Vec3 cp = closest_point_on_triangle(query, positions_[tri[0]], positions_[tri[1]],
                                          positions_[tri[2]]);
      double dsq = (query - cp).squaredNorm();
      if (dsq < best_sq) {
        best_sq = dsq;
        best.point = cp;
        best.triangle = t;
      }
    }
  }
  if (best.triangle < 0) return best;

  // classify the closest point (face / edge / vertex) to pick the pseudo-normal
  const auto& tri = mesh_.triangles[best.triangle];
  const Vec3 &a = positions_[tri[0]], &b = positions_[tri[1]], &c = positions_[tri[2]];
  Vec3 n = (b - a).cross(c - a);
  double n2 = n.squaredNorm();
  Vec3 normal = face_normals_[best.triangle];
  if (n2 > 1e-24) {
    const Vec3 v0 = b - a, v1 = c - a, v2 = best.point - a;
    const double d00 = v0.dot(v0), d01 = v0.dot(v1), d11 = v1.dot(v1);
    const double d20 = v2.dot(v0), d21 = v2.dot(v1);
    const double denom = d00 * d11 - d01 * d01;
    double wb = (d11 * d20 - d01 * d21) / denom;
    double wc = (d00 * d21 - d01 * d20) / denom;
    double wa = 1.0 - wb - wc;
    const double eps = 1e-6;
    int on_corner = -1;
    if (wa > 1.0 - eps) on_corner = 0;
    else if (wb > 1.0 - eps) on_corner = 1;
    else if (wc > 1.0 - eps) on_corner = 2;
    if (on_corner >= 0) {
      normal = vertex_pseudo_normals_[tri[on_corner]];
    } else if (wa < eps || wb < eps || wc < eps) {
      int corner = wc < eps ? 0 : (wa < eps ? 1 : 2);  // edge opposite the zero barycentric
      normal = edge_pseudo_normals_[edge_lookup_[best.triangle * 3 + corner]];
    }
  }
  best.normal = normal;
  double dist = std::sqrt(best_sq);
  double sign = (query - best.point).dot(normal) >= 0.0 ? 1.0 : -1.0;
  best.signed_distance = sign * dist;
  return best;
}

// -------------------------------------------------------- CollisionContext

CollisionContext::CollisionContext(const CollisionConfig& config, const TriMesh* cloth_mesh)
    : config_(config), cloth_mesh_(cloth_mesh) {
  if (cloth_mesh_) build_vertex_adjacency();
}

void CollisionContext::build_vertex_adjacency() {
  vertex_neighbors_.assign(cloth_mesh_->vertex_count(), {});
  for (const auto& [i, j] : cloth_mesh_->edges) {
    vertex_neighbors_[i].push_back(j);
    vertex_neighbors_[j].push_back(i);
  }
  for (auto& n : vertex_neighbors_) std::sort(n.begin(), n.end());
}

bool CollisionContext::topologically_adjacent(int vertex, const std::array<int, 3>& tri) const {
  const auto& nb = vertex_neighbors_[vertex];
  for (int v : tri) {
    if (v == vertex) return true;
    if (std::binary_search(nb.begin(), nb.end(), v)) return true;
  }
  return false;
}

void CollisionContext::resolve_body_cloth(ClothState& state) {
  if (!config_.enable_body || !body_) return;
  const double eps = config_.body_eps;
  for (int i = 0; i < state.vertex_count(); ++i) {
    if (state.pinned[i]) continue;
    ClosestPointResult cp = body_->closest_point(state.positions[i]);
    if (cp.triangle < 0) continue;
    if (cp.signed_distance >= eps) continue;
    state.positions[i] = cp.point + eps * cp.normal;
    double vn = state.velocities[i].dot(cp.normal);
    if (vn < 0.0) state.velocities[i] -= vn * cp.normal;  // keep tangential part
    ++stats_.body_projections;
    if (cp.signed_distance < -0.05) ++stats_.deep_unresolved;
  }
}

void CollisionContext::resolve_floor(ClothState& state) {
  if (!config_.enable_floor) return;
  const Vec3& n = config_.floor.normal;
  for (int i = 0; i < state.vertex_count(); ++i) {
    if (state.pinned[i]) continue;
    double h = (state.positions[i] - config_.floor.point).dot(n);
    if (h >= 0.0) continue;
    state.positions[i] -= h * n;
    double vn = state.velocities[i].dot(n);
    if (vn < 0.0) state.velocities[i] -= vn * n;
    ++stats_.floor_projections;
  }
}

// ---------------------------------------------------------- cloth-cloth CCD

namespace {

// smallest real root of a*t^3 + b*t^2 + c*t + d in [0,1], bisection on
// sign-change brackets
bool cubic_root_in_01(double a, double b, double c, double d, double* root) {
  auto f = [&](double t) { return ((a * t + b) * t + c) * t + d; };
  // sample to bracket; the polynomial has at most 3 roots
  const int N = 16;
  double prev_t = 0.0, prev_f = f(0.0);
  if (std::abs(prev_f) < 1e-18) {
    *root = 0.0;
    return true;
  }
  for (int i = 1; i <= N; ++i) {
    double t = static_cast<double>(i) / N;
    double ft = f(t);
    if (prev_f * ft <= 0.0) {
      double lo = prev_t, hi = t, flo = prev_f;
      for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        double fm = f(mid);
        if (flo * fm <= 0.0)
          hi = mid;
        else {
          lo = mid;
          flo = fm;
        }
      }
      *root = 0.5 * (lo + hi);
      return true;
    }
    prev_t = t;
    prev_f = ft;
  }
  return false;
}

struct CellKey {
  int64_t v;
  bool operator==(const CellKey& o) const { return v == o.v; }
};
struct CellHash {
  size_t operator()(const CellKey& k) const { return std::hash<int64_t>()(k.v); }
};

inline int64_t cell_coord(double x, double h) { return static_cast<int64_t>(std::floor(x / h)); }

inline CellKey cell_key(int64_t cx, int64_t cy, int64_t cz) {
  auto m = [](int64_t c) { return c & 0x1FFFFF; };
  return {m(cx) | (m(cy) << 21) | (m(cz) << 42)};
}

inline CellKey cell_of(const Vec3& p, double h) {
  return cell_key(cell_coord(p.x(), h), cell_coord(p.y(), h), cell_coord(p.z(), h));
}

}  // namespace

bool vertex_triangle_ccd(const Vec3& p0, const Vec3& dp, const Vec3& a0, const Vec3& da,
                         const Vec3& b0, const Vec3& db, const Vec3& c0, const Vec3& dc,
                         double* t_hit) {
  // coplanarity: ((p-a) . ((b-a) x (c-a)))(t) = 0, cubic in t
  Vec3 x0 = p0 - a0, vx = dp - da;
  Vec3 y0 = b0 - a0, vy = db - da;
  Vec3 z0 = c0 - a0, vz = dc - da;
  // n(t) = (y0 + t vy) x (z0 + t vz)
  Vec3 n0 = y0.cross(z0);
  Vec3 n1 = y0.cross(vz) + vy.cross(z0);
  Vec3 n2 = vy.cross(vz);
  double d = n0.dot(x0);
  double c = n0.dot(vx) + n1.dot(x0);
  double b = n1.dot(vx) + n2.dot(x0);
  double a = n2.dot(vx);
  double t;
  if (!cubic_root_in_01(a, b, c, d, &t)) return false;
  // inside-triangle check at t
  Vec3 p = p0 + t * dp, A = a0 + t * da, B = b0 + t * db, C = c0 + t * dc;
  Vec3 n = (B - A).cross(C - A);
  double n2n = n.squaredNorm();
  if (n2n < 1e-24) return false;
  Vec3 w = p - A;
  double gamma = (B - A).cross(w).dot(n) / n2n;
  double beta = w.cross(C - A).dot(n) / n2n;
  double alpha = 1.0 - beta - gamma;
  const double tol = -0.05;
  if (alpha < tol || beta < tol || gamma < tol) return false;
  *t_hit = t;
  return true;
}

struct CollisionContext::Grid {
  std::unordered_map<CellKey, std::vector<int>, CellHash> tri_cells;
  std::unordered_map<CellKey, std::vector<int>, CellHash> edge_cells;
  double cell = 0.0;
  int lifetime = 0;       // substeps the inflation margin stays valid
  double margin = 0.0;    // inflation applied at build time
  double motion_used = 0.0;  // accumulated per-substep motion since build
};

void CollisionContext::resolve_cloth_cloth(ClothState& state,
                                           const std::vector<Vec3>& prev_positions, double dt) {
  if (!config_.enable_cloth_cloth || !cloth_mesh_) return;
  const double h = config_.hash_cell;
  const double eps = config_.cloth_eps;
  const TriMesh& mesh = *cloth_mesh_;

  // Broad phase: hash triangle AABBs, rebuilt every few substeps with a
  // margin covering the motion until the next rebuild. The margin is capped
  // (unbounded velocities would enumerate unbounded cell ranges); if actual
  // motion outruns it, the grid is rebuilt early so the candidate set stays
  // a superset of the true proximity pairs.
  double step_motion = 0.0;
  for (int v = 0; v < state.vertex_count(); ++v)
    step_motion = std::max(step_motion, (state.positions[v] - prev_positions[v]).squaredNorm());
  step_motion = std::sqrt(step_motion);
  if (step_motion > 1.0)
    throw NumericalError("resolve_cloth_cloth: vertex moved " + std::to_string(step_motion) +
                         " m in one substep, simulation diverged");
  if (grid_) {
    grid_->motion_used += 2.0 * step_motion;
    if (grid_->motion_used + eps > grid_->margin) grid_.reset();
  }
  const int rebuild_period = 8;
  if (!grid_ || substeps_since_rebuild_ >= grid_->lifetime) {
    double vmax = 0.0;
    for (const Vec3& v : state.velocities) vmax = std::max(vmax, v.norm());
    double margin = eps +
                    std::min(rebuild_period * std::max(dt, 0.0) * vmax * 2.0, 2.0 * h) + 1e-6;
    auto grid = std::make_shared<Grid>();
    grid->cell = h;
    grid->lifetime = rebuild_period;
    grid->margin = margin;
    grid->tri_cells.reserve(mesh.triangle_count() * 2);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      Vec3 lo = Vec3::Constant(1e30), hi = Vec3::Constant(-1e30);
      for (int v : mesh.triangles[t]) {
        lo = lo.cwiseMin(prev_positions[v]).cwiseMin(state.positions[v]);
        hi = hi.cwiseMax(prev_positions[v]).cwiseMax(state.positions[v]);
      }
      lo -= Vec3::Constant(margin);
      hi += Vec3::Constant(margin);
      for (int64_t cx = cell_coord(lo.x(), h); cx <= cell_coord(hi.x(), h); ++cx)
        for (int64_t cy = cell_coord(lo.y(), h); cy <= cell_coord(hi.y(), h); ++cy)
          for (int64_t cz = cell_coord(lo.z(), h); cz <= cell_coord(hi.z(), h); ++cz)
            grid->tri_cells[cell_key(cx, cy, cz)].push_back(t);
    }
    if (config_.enable_edge_edge) {
      grid->edge_cells.reserve(mesh.edge_count() * 2);
      for (int e = 0; e < mesh.edge_count(); ++e) {
        const auto& [i, j] = mesh.edges[e];
        Vec3 lo = prev_positions[i].cwiseMin(prev_positions[j])
                      .cwiseMin(state.positions[i]).cwiseMin(state.positions[j]) -
                  Vec3::Constant(margin);
        Vec3 hi = prev_positions[i].cwiseMax(prev_positions[j])
                      .cwiseMax(state.positions[i]).cwiseMax(state.positions[j]) +
                  Vec3::Constant(margin);
        for (int64_t cx = cell_coord(lo.x(), h); cx <= cell_coord(hi.x(), h); ++cx)
          for (int64_t cy = cell_coord(lo.y(), h); cy <= cell_coord(hi.y(), h); ++cy)
            for (int64_t cz = cell_coord(lo.z(), h); cz <= cell_coord(hi.z(), h); ++cz)
              grid->edge_cells[cell_key(cx, cy, cz)].push_back(e);
      }
    }
    grid_ = grid;
    substeps_since_rebuild_ = 0;
  }
  ++substeps_since_rebuild_;

  struct Event {
    double t;
    int a, b;        // vertex,triangle or edge,edge
    bool is_edge;
    bool operator<(const Event& o) const {
      if (t != o.t) return t < o.t;
      if (is_edge != o.is_edge) return is_edge < o.is_edge;
      if (a != o.a) return a < o.a;
      return b < o.b;
    }
  };
  std::vector<Event> events;

  std::vector<int> candidates;
  for (int v = 0; v < state.vertex_count(); ++v) {
    candidates.clear();
    CellKey k0 = cell_of(state.positions[v], h);
    CellKey k1 = cell_of(prev_positions[v], h);
    if (auto it = grid_->tri_cells.find(k0); it != grid_->tri_cells.end())
      candidates.insert(candidates.end(), it->second.begin(), it->second.end());
    if (!(k1 == k0)) {
      if (auto it = grid_->tri_cells.find(k1); it != grid_->tri_cells.end())
        candidates.insert(candidates.end(), it->second.begin(), it->second.end());
      std::sort(candidates.begin(), candidates.end());
      candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    }
    for (int t : candidates) {
      const auto& tri = mesh.triangles[t];
      // immediate topological neighbors are constrained by springs instead
      if (topologically_adjacent(v, tri)) continue;
      // cheap reject before the cubic
      Vec3 cp_end = closest_point_on_triangle(state.positions[v], state.positions[tri[0]],
                                              state.positions[tri[1]], state.positions[tri[2]]);
      double end_dist_sq = (state.positions[v] - cp_end).squaredNorm();
      double travel = (state.positions[v] - prev_positions[v]).norm() +
                      (state.positions[tri[0]] - prev_positions[tri[0]]).norm();
      if (end_dist_sq > (eps + travel) * (eps + travel)) continue;
      double t_hit;
      Vec3 dp = state.positions[v] - prev_positions[v];
      if (vertex_triangle_ccd(prev_positions[v], dp, prev_positions[tri[0]],
                              state.positions[tri[0]] - prev_positions[tri[0]],
                              prev_positions[tri[1]],
                              state.positions[tri[1]] - prev_positions[tri[1]],
                              prev_positions[tri[2]],
                              state.positions[tri[2]] - prev_positions[tri[2]], &t_hit)) {
        events.push_back({t_hit, v, t, false});
      } else if (end_dist_sq < eps * eps) {
        // no bracketed root: fall back to end-of-step proximity repulsion
        events.push_back({1.0, v, t, false});
      }
    }
  }

  if (config_.enable_edge_edge) {
    std::vector<int> edge_candidates;
    for (int e = 0; e < mesh.edge_count(); ++e) {
      const auto& [i, j] = mesh.edges[e];
      edge_candidates.clear();
      Vec3 mid = 0.5 * (state.positions[i] + state.positions[j]);
      if (auto it = grid_->edge_cells.find(cell_of(mid, h)); it != grid_->edge_cells.end())
        edge_candidates = it->second;
      for (int e2 : edge_candidates) {
        if (e2 <= e) continue;  // each pair once
        const auto& [k, l] = mesh.edges[e2];
        if (k == i || k == j || l == i || l == j) continue;
        const auto& nbi = vertex_neighbors_[i];
        if (std::binary_search(nbi.begin(), nbi.end(), k) ||
            std::binary_search(nbi.begin(), nbi.end(), l))
          continue;
        const auto& nbj = vertex_neighbors_[j];
        if (std::binary_search(nbj.begin(), nbj.end(), k) ||
            std::binary_search(nbj.begin(), nbj.end(), l))
          continue;
        double s, tt;
        closest_segment_segment(state.positions[i], state.positions[j], state.positions[k],
                                state.positions[l], &s, &tt);
        Vec3 pa = state.positions[i] + s * (state.positions[j] - state.positions[i]);
        Vec3 pb = state.positions[k] + tt * (state.positions[l] - state.positions[k]);
        double t_hit = 1.0;
        bool hit = (pa - pb).squaredNorm() < eps * eps;
        if (!hit) {
          hit = edge_edge_ccd(prev_positions[i], state.positions[i] - prev_positions[i],
                              prev_positions[j], state.positions[j] - prev_positions[j],
                              prev_positions[k], state.positions[k] - prev_positions[k],
                              prev_positions[l], state.positions[l] - prev_positions[l], &t_hit);
          if (hit) {
            // coplanarity alone is not contact; require proximity at t_hit
            auto at = [&](int vtx) {
              return prev_positions[vtx] + t_hit * (state.positions[vtx] - prev_positions[vtx]);
            };
            closest_segment_segment(at(i), at(j), at(k), at(l), &s, &tt);
            Vec3 qa = at(i) + s * (at(j) - at(i));
            Vec3 qb = at(k) + tt * (at(l) - at(k));
            hit = (qa - qb).squaredNorm() < eps * eps;
          }
        }
        if (hit) events.push_back({t_hit, e, e2, true});
      }
    }
  }

  std::sort(events.begin(), events.end());

  for (const Event& ev : events) {
    if (ev.is_edge) {
      const auto& [i, j] = mesh.edges[ev.a];
      const auto& [k, l] = mesh.edges[ev.b];
      double s, tt;
      closest_segment_segment(state.positions[i], state.positions[j], state.positions[k],
                              state.positions[l], &s, &tt);
      Vec3 pa = state.positions[i] + s * (state.positions[j] - state.positions[i]);
      Vec3 pb = state.positions[k] + tt * (state.positions[l] - state.positions[k]);
      Vec3 diff = pa - pb;
      double dist = diff.norm();
      if (dist >= eps || dist < 1e-12) continue;
      Vec3 n = diff / dist;
      double push = 0.5 * (eps - dist);
      auto apply = [&](int va, int vb, double bary, const Vec3& dir) {
        if (!state.pinned[va]) state.positions[va] += (1.0 - bary) * push * dir;
        if (!state.pinned[vb]) state.positions[vb] += bary * push * dir;
      };
      apply(i, j, s, n);
      apply(k, l, tt, -n);
      Vec3 va = (1.0 - s) * state.velocities[i] + s * state.velocities[j];
      Vec3 vb = (1.0 - tt) * state.velocities[k] + tt * state.velocities[l];
      double rel = (va - vb).dot(n);
      if (rel < 0.0) {
        if (!state.pinned[i]) state.velocities[i] -= 0.5 * (1.0 - s) * rel * n;
        if (!state.pinned[j]) state.velocities[j] -= 0.5 * s * rel * n;
        if (!state.pinned[k]) state.velocities[k] += 0.5 * (1.0 - tt) * rel * n;
        if (!state.pinned[l]) state.velocities[l] += 0.5 * tt * rel * n;
      }
      ++stats_.cloth_cloth_events;
      continue;
    }
    const auto& tri = mesh.triangles[ev.b];
    Vec3 cp = closest_point_on_triangle(state.positions[ev.a], state.positions[tri[0]],
                                        state.positions[tri[1]], state.positions[tri[2]]);
    Vec3 diff = state.positions[ev.a] - cp;
    double dist = diff.norm();
    if (dist >= eps) continue;  // an earlier event already separated the pair
    Vec3 n = dist > 1e-12 ? Vec3(diff / dist)
                          : (state.positions[tri[1]] - state.positions[tri[0]])
                                .cross(state.positions[tri[2]] - state.positions[tri[0]])
                                .normalized();
    double push = eps - dist;
    // momentum-preserving split: vertex takes half, triangle shares half
    double wv = state.pinned[ev.a] ? 0.0 : 0.5;
    double wt = 0.5;
    int free_tri = 0;
    for (int k = 0; k < 3; ++k)
      if (!state.pinned[tri[k]]) ++free_tri;
    if (free_tri == 0) {
      wt = 0.0;
      wv = state.pinned[ev.a] ? 0.0 : 1.0;
    } else if (state.pinned[ev.a]) {
      wt = 1.0;
    }
    if (wv > 0.0) state.positions[ev.a] += wv * push * n;
    if (wt > 0.0) {
      for (int k = 0; k < 3; ++k) {
        if (state.pinned[tri[k]]) continue;
        state.positions[tri[k]] -= (wt / free_tri) * push * n;
      }
    }
    // impulse: cancel relative normal velocity, equal/opposite halves
    Vec3 vtri = (state.velocities[tri[0]] + state.velocities[tri[1]] + state.velocities[tri[2]]) / 3.0;
    double rel = (state.velocities[ev.a] - vtri).dot(n);
    if (rel < 0.0) {
      double jv = state.pinned[ev.a] ? 0.0 : 0.5;
      if (jv > 0.0) state.velocities[ev.a] -= jv * rel * n;
      if (free_tri > 0) {
        for (int k = 0; k < 3; ++k) {
          if (state.pinned[tri[k]]) continue;
          state.velocities[tri[k]] += (0.5 / free_tri) * rel * n;
        }
      }
    }
    ++stats_.cloth_cloth_events;
  }
  (void)dt;
}

void closest_segment_segment(const Vec3& p1, const Vec3& p2, const Vec3& q1, const Vec3& q2,
                             double* s, double* t) {
  // Ericson 5.1.9
  Vec3 d1 = p2 - p1, d2 = q2 - q1, r = p1 - q1;
  double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double ss = 0.0, tt = 0.0;
  if (a <= 1e-18 && e <= 1e-18) {
    *s = *t = 0.0;
    return;
  }
  if (a <= 1e-18) {
    tt = std::clamp(f / e, 0.0, 1.0);
  } else {
    double c = d1.dot(r);
    if (e <= 1e-18) {
      ss = std::clamp(-c / a, 0.0, 1.0);
    } else {
      double b = d1.dot(d2);
      double denom = a * e - b * b;
      if (denom > 1e-18) ss = std::clamp((b * f - c * e) / denom, 0.0, 1.0);
      tt = (b * ss + f) / e;
      if (tt < 0.0) {
        tt = 0.0;
        ss = std::clamp(-c / a, 0.0, 1.0);
      } else if (tt > 1.0) {
        tt = 1.0;
        ss = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  *s = ss;
  *t = tt;
}

bool edge_edge_ccd(const Vec3& a0, const Vec3& da, const Vec3& b0, const Vec3& db,
                   const Vec3& c0, const Vec3& dc, const Vec3& d0, const Vec3& dd,
                   double* t_hit) {
  // coplanarity of (b-a), (c-a), (d-a): scalar triple product is cubic in t
  Vec3 x0 = b0 - a0, vx = db - da;
  Vec3 y0 = c0 - a0, vy = dc - da;
  Vec3 z0 = d0 - a0, vz = dd - da;
  Vec3 n0 = y0.cross(z0);
  Vec3 n1 = y0.cross(vz) + vy.cross(z0);
  Vec3 n2 = vy.cross(vz);
  double d = n0.dot(x0);
  double c = n0.dot(vx) + n1.dot(x0);
  double b = n1.dot(vx) + n2.dot(x0);
  double a = n2.dot(vx);
  auto f = [&](double t) { return ((a * t + b) * t + c) * t + d; };
  const int N = 16;
  double prev_t = 0.0, prev_f = f(0.0);
  if (std::abs(prev_f) < 1e-18) {
    *t_hit = 0.0;
    return true;
  }
  for (int i = 1; i <= N; ++i) {
    double t = static_cast<double>(i) / N;
    double ft = f(t);
    if (prev_f * ft <= 0.0) {
      double lo = prev_t, hi = t, flo = prev_f;
      for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        double fm = f(mid);
        if (flo * fm <= 0.0)
          hi = mid;
        else {
          lo = mid;
          flo = fm;
        }
      }
      *t_hit = 0.5 * (lo + hi);
      return true;
    }
    prev_t = t;
    prev_f = ft;
  }
  return false;
}

}  // namespace ct
