#include "clothtrack/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace ct {

int TriMesh::interior_edge_count() const {
  int n = 0;
  for (const auto& et : edge_tris)
    if (et[1] >= 0) ++n;
  return n;
}

void TriMesh::build_adjacency() {
  std::map<std::array<int, 2>, std::array<int, 2>> table;
  bool non_manifold = false;
  for (int t = 0; t < triangle_count(); ++t) {
    const auto& tri = triangles[t];
    for (int c = 0; c < 3; ++c) {
      int a = tri[c], b = tri[(c + 1) % 3];
      std::array<int, 2> key = {std::min(a, b), std::max(a, b)};
      auto [it, inserted] = table.try_emplace(key, std::array<int, 2>{t, -1});
      if (!inserted) {
        if (it->second[1] < 0)
          it->second[1] = t;
        else
          non_manifold = true;
      }
    }
  }
  if (non_manifold)
    std::cerr << "warning: mesh has non-manifold edges (>2 incident triangles)\n";
  edges.clear();
  edge_tris.clear();
  edges.reserve(table.size());
  edge_tris.reserve(table.size());
  for (const auto& [key, tris] : table) {  // std::map iterates sorted
    edges.push_back(key);
    edge_tris.push_back(tris);
  }
}

TriMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open mesh file: " + path);
  TriMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p.x() >> p.y() >> p.z()))
        throw InputError(path + ":" + std::to_string(lineno) + ": malformed vertex line");
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::array<int, 3> tri;
      std::string tok;
      int n = 0;
      while (ss >> tok) {
        // accept "i", "i/j", "i/j/k"
        int idx = 0;
        try {
          idx = std::stoi(tok.substr(0, tok.find('/')));
        } catch (const std::exception&) {
          throw InputError(path + ":" + std::to_string(lineno) + ": malformed face index");
        }
        if (idx < 0) idx = static_cast<int>(mesh.vertices.size()) + idx + 1;
        if (n >= 3)
          throw InputError(path + ":" + std::to_string(lineno) +
                           ": non-triangle face (triangulate first)");
        tri[n++] = idx - 1;
      }
      if (n != 3)
        throw InputError(path + ":" + std::to_string(lineno) + ": face needs 3 indices");
      for (int v : tri)
        if (v < 0 || v >= static_cast<int>(mesh.vertices.size()))
          throw InputError(path + ":" + std::to_string(lineno) + ": face index out of range");
      mesh.triangles.push_back(tri);
    }
    // other OBJ tags ignored
  }
  mesh.build_adjacency();
  return mesh;
}

void save_mesh(const std::string& path, const TriMesh& mesh, const std::vector<Vec3>& positions) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write mesh file: " + path);
  char buf[128];
  for (const Vec3& p : positions) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  for (const auto& t : mesh.triangles)
    out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
}

double dihedral_angle(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p4) {
  Vec3 n1 = (p2 - p1).cross(p3 - p1);
  Vec3 n2 = (p4 - p1).cross(p2 - p1);
  double denom = n1.norm() * n2.norm();
  if (denom < 1e-24) return 0.0;
  double c = std::clamp(n1.dot(n2) / denom, -1.0, 1.0);
  return std::acos(c);
}

double dihedral_angle_signed(const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& p4,
                             Vec3 grad[4]) {
  const Vec3 e = p2 - p1;
  const double elen = e.norm();
  Vec3 n1 = e.cross(p3 - p1);            // normal of (p1,p2,p3)
  Vec3 n2 = (p4 - p1).cross(e);          // normal of (p1,p4,p2), same orientation
  const double n1sq = n1.squaredNorm(), n2sq = n2.squaredNorm();
  if (elen < 1e-12 || n1sq < 1e-24 || n2sq < 1e-24) {
    for (int i = 0; i < 4; ++i) grad[i].setZero();
    return 0.0;
  }
  const Vec3 eh = e / elen;
  const Vec3 n1h = n1 / std::sqrt(n1sq), n2h = n2 / std::sqrt(n2sq);
  const double theta = std::atan2(n1h.cross(n2h).dot(eh), n1h.dot(n2h));

  // d(theta)/dx via the triangle altitudes; the four gradients sum to zero.
  const Vec3 g3 = (-elen / n1sq) * n1;
  const Vec3 g4 = (-elen / n2sq) * n2;
  const double a1 = (p3 - p2).dot(e) / elen;
  const double a2 = (p4 - p2).dot(e) / elen;
  const double b1 = (p3 - p1).dot(e) / elen;
  const double b2 = (p4 - p1).dot(e) / elen;
  grad[0] = (-a1 / n1sq) * n1 + (-a2 / n2sq) * n2;
  grad[1] = (b1 / n1sq) * n1 + (b2 / n2sq) * n2;
  grad[2] = g3;
  grad[3] = g4;
  return theta;
}

SpringSet build_springs(const TriMesh& mesh, const std::vector<Vec3>& rest_positions) {
  if (rest_positions.size() != mesh.vertices.size())
    throw InputError("build_springs: rest position count mismatch");
  SpringSet set;
  set.stretch.reserve(mesh.edges.size());
  for (size_t e = 0; e < mesh.edges.size(); ++e) {
    const auto& [i, j] = mesh.edges[e];
    double d = (rest_positions[j] - rest_positions[i]).norm();
    if (d < 1e-12)
      throw InputError("build_springs: zero-length edge " + std::to_string(e) + " (" +
                       std::to_string(i) + "," + std::to_string(j) + ")");
    set.stretch.push_back({i, j, d});
  }
  for (size_t e = 0; e < mesh.edges.size(); ++e) {
    const auto& et = mesh.edge_tris[e];
    if (et[1] < 0) continue;  // boundary edge, no hinge
    int i = mesh.edges[e][0], j = mesh.edges[e][1];
    auto opposite = [&](int t) {
      for (int v : mesh.triangles[t])
        if (v != i && v != j) return v;
      throw InputError("build_springs: degenerate triangle " + std::to_string(t) +
                       " (repeated vertex)");
    };
    int p3 = opposite(et[0]);
    int p4 = opposite(et[1]);
    for (int t : {et[0], et[1]}) {
      const auto& tri = mesh.triangles[t];
      Vec3 n = (rest_positions[tri[1]] - rest_positions[tri[0]])
                   .cross(rest_positions[tri[2]] - rest_positions[tri[0]]);
      if (n.norm() < 1e-12)
        throw InputError("build_springs: zero-area triangle " + std::to_string(t));
    }
    double a0 = dihedral_angle(rest_positions[i], rest_positions[j], rest_positions[p3],
                               rest_positions[p4]);
    set.torsion.push_back({i, j, p3, p4, a0});
  }
  return set;
}

std::vector<Vec3> compute_normals(const TriMesh& mesh, const std::vector<Vec3>& positions) {
  std::vector<Vec3> normals(positions.size(), Vec3::Zero());
  for (const auto& t : mesh.triangles) {
    Vec3 n = (positions[t[1]] - positions[t[0]]).cross(positions[t[2]] - positions[t[0]]);
    // area-weighted: |n| = 2*area, degenerate triangles contribute nothing
    normals[t[0]] += n;
    normals[t[1]] += n;
    normals[t[2]] += n;
  }
  for (Vec3& n : normals) {
    double len = n.norm();
    if (len > 1e-20) n /= len;
  }
  return normals;
}

}  // namespace ct
