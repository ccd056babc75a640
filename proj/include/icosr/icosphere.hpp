#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "icosr/core.hpp"

namespace icosr {

// Subdivided icosahedron. Pixels are the triangular faces. Face ids are
// base-face-major in quadtree order: id = base * 4^L + d_1 d_2 ... d_L in
// base 4, where d_k is the child index at subdivision step k (children 0..2
// sit at the parent's corners 0..2, child 3 is the inverted center triangle).
//
// Each face also carries rhombus-lattice coordinates. The 20 base faces pair
// into 10 rhombi (two per meridian strip); a face at cell (i,j) of its
// rhombus is the "up" (apex-north) or "down" half of that cell. These
// coordinates drive the rectangular panel layout in sphere_layout.hpp.
class IcosphereGrid {
 public:
  struct Face {
    std::array<int32_t, 3> v;  // vertex ids, lattice order (see corner roles below), CCW from outside
    int32_t base = 0;          // base icosahedron face id, 0..19
    int32_t cell_i = 0;        // rhombus cell row (0 .. 2^L-1)
    int32_t cell_j = 0;        // rhombus cell col (0 .. 2^L-1)
    bool up = false;           // apex-toward-north half of the cell
  };

  // Corner roles, as lattice offsets of Face::v within the rhombus:
  //   up:   v[0]=(i,j)    v[1]=(i+1,j)   v[2]=(i,j+1)
  //   down: v[0]=(i+1,j)  v[1]=(i+1,j+1) v[2]=(i,j+1)

  int level = 0;
  std::vector<Face> faces;
  std::vector<Vec3> vertices;
  std::vector<Vec3> face_centers;       // normalized centroids
  double edge_length_scale = 0.0;       // mean chordal edge length

  int face_count() const { return static_cast<int>(faces.size()); }
  int vertex_count() const { return static_cast<int>(vertices.size()); }
  long edge_count() const { return static_cast<long>(faces.size()) * 3 / 2; }

  static IcosphereGrid build(int level);

  // Face whose spherical triangle contains p; boundary ties resolve to the
  // lowest face id. p must be unit within 1e-6.
  int face_of_point(const Vec3& p) const;
  int face_of_point(const SpherePoint& p) const { return face_of_point(p.dir); }

  // Planar barycentric weights of p w.r.t. the face's chordal triangle, after
  // central projection of p onto the triangle plane. Nonnegative, sum 1.
  std::array<double, 3> barycentric(int face_id, const Vec3& p) const;

  // Faces incident to a vertex, clockwise as seen from outside the sphere,
  // starting at start_face. Always 6 entries; for the 12 original vertices
  // (5 incident faces) slot 6 repeats start_face.
  std::array<int32_t, 6> vertex_ring(int vertex_id, int start_face) const;

  int ring_size(int vertex_id) const {
    return static_cast<int>(ring_offsets_[vertex_id + 1] - ring_offsets_[vertex_id]);
  }

  // Incident faces in stored (canonical clockwise) order.
  const int32_t* ring_begin(int vertex_id) const { return ring_faces_.data() + ring_offsets_[vertex_id]; }

  // True if p lies in face's spherical triangle (tolerance eps on the edge
  // great-circle sign tests). Shared by point location and test oracles.
  bool face_contains(int face_id, const Vec3& p, double eps = 1e-12) const {
    const Face& f = faces[face_id];
    const Vec3& a = vertices[f.v[0]];
    const Vec3& b = vertices[f.v[1]];
    const Vec3& c = vertices[f.v[2]];
    return dot(cross(a, b), p) >= -eps && dot(cross(b, c), p) >= -eps && dot(cross(c, a), p) >= -eps;
  }

 private:
  std::vector<int64_t> ring_offsets_;
  std::vector<int32_t> ring_faces_;
};

namespace detail {

struct MidpointCache {
  std::unordered_map<uint64_t, int32_t> map;
  std::vector<Vec3>* vertices;

  int32_t midpoint(int32_t a, int32_t b) {
    const uint64_t key = (static_cast<uint64_t>(std::min(a, b)) << 32) | static_cast<uint32_t>(std::max(a, b));
    auto it = map.find(key);
    if (it != map.end()) return it->second;
    const int32_t id = static_cast<int32_t>(vertices->size());
    vertices->push_back(normalized((*vertices)[a] + (*vertices)[b]));
    map.emplace(key, id);
    return id;
  }
};

struct LatticeCorner {
  int32_t u, w;
};

inline void subdivide(int depth, int level, int base, const std::array<int32_t, 3>& vids,
                      const std::array<LatticeCorner, 3>& lat, MidpointCache& mids,
                      std::vector<IcosphereGrid::Face>& out) {
  if (depth == level) {
    IcosphereGrid::Face f;
    f.base = base;
    int32_t i = std::min({lat[0].u, lat[1].u, lat[2].u});
    int32_t j = std::min({lat[0].w, lat[1].w, lat[2].w});
    f.cell_i = i;
    f.cell_j = j;
    bool up = false;
    for (const auto& c : lat) up = up || (c.u == i && c.w == j);
    f.up = up;
    // Rotate corners into canonical lattice order.
    auto role = [&](int32_t u, int32_t w) -> int {
      if (up) {
        if (u == i && w == j) return 0;
        if (u == i + 1 && w == j) return 1;
        return 2;
      }
      if (u == i + 1 && w == j) return 0;
      if (u == i + 1 && w == j + 1) return 1;
      return 2;
    };
    for (int k = 0; k < 3; ++k) f.v[role(lat[k].u, lat[k].w)] = vids[k];
    out.push_back(f);
    return;
  }
  const int32_t m01 = mids.midpoint(vids[0], vids[1]);
  const int32_t m12 = mids.midpoint(vids[1], vids[2]);
  const int32_t m02 = mids.midpoint(vids[0], vids[2]);
  auto mid = [](LatticeCorner a, LatticeCorner b) { return LatticeCorner{(a.u + b.u) / 2, (a.w + b.w) / 2}; };
  const LatticeCorner l01 = mid(lat[0], lat[1]), l12 = mid(lat[1], lat[2]), l02 = mid(lat[0], lat[2]);
  subdivide(depth + 1, level, base, {vids[0], m01, m02}, {lat[0], l01, l02}, mids, out);
  subdivide(depth + 1, level, base, {m01, vids[1], m12}, {l01, lat[1], l12}, mids, out);
  subdivide(depth + 1, level, base, {m02, m12, vids[2]}, {l02, l12, lat[2]}, mids, out);
  subdivide(depth + 1, level, base, {m01, m12, m02}, {l01, l12, l02}, mids, out);
}

}  // namespace detail

// Vertex ids of base face b on the original icosahedron (matches build()).
inline std::array<int32_t, 3> base_face_vertex_ids(int b) {
  const int k = b / 4;
  const int32_t Np = 0, Sp = 11;
  const int32_t Uk = 1 + k, Uk1 = 1 + (k + 1) % 5;
  const int32_t Lk = 6 + k, Lk1 = 6 + (k + 1) % 5;
  switch (b % 4) {
    case 0: return {Np, Uk, Uk1};
    case 1: return {Uk, Lk, Uk1};
    case 2: return {Uk1, Lk, Lk1};
    default: return {Lk, Sp, Lk1};
  }
}

inline IcosphereGrid IcosphereGrid::build(int level) {
  if (level < 0 || level > 10) throw BoundsError("icosphere level must be in [0, 10]");

  IcosphereGrid g;
  g.level = level;

  // Base icosahedron: poles plus two latitude-rings of five vertices.
  // Vertex ids: 0 = north pole, 1..5 upper ring, 6..10 lower ring, 11 = south pole.
  const double c = 2.0 / std::sqrt(5.0);
  const double h = 1.0 / std::sqrt(5.0);
  g.vertices.push_back({0.0, 0.0, 1.0});
  for (int k = 0; k < 5; ++k) {
    const double a = 2.0 * kPi * k / 5.0;
    g.vertices.push_back({c * std::cos(a), c * std::sin(a), h});
  }
  for (int k = 0; k < 5; ++k) {
    const double a = 2.0 * kPi * k / 5.0 + kPi / 5.0;
    g.vertices.push_back({c * std::cos(a), c * std::sin(a), -h});
  }
  g.vertices.push_back({0.0, 0.0, -1.0});

  const int32_t n = 1 << level;
  detail::MidpointCache mids;
  mids.vertices = &g.vertices;
  g.faces.reserve(static_cast<size_t>(20) << (2 * level));

  // Base faces per strip k, all CCW from outside, with rhombus-lattice corner
  // coordinates. 4k+0/4k+1 form the strip's top rhombus, 4k+2/4k+3 its bottom
  // rhombus.
  using LC = detail::LatticeCorner;
  const std::array<std::array<LC, 3>, 4> base_lattice = {
      {{LC{0, 0}, LC{n, 0}, LC{0, n}},   // up base face spanning the rhombus top half
       {LC{n, 0}, LC{n, n}, LC{0, n}},   // down base face, rhombus bottom half
       {LC{0, 0}, LC{n, 0}, LC{0, n}},
       {LC{n, 0}, LC{n, n}, LC{0, n}}}};
  for (int b = 0; b < 20; ++b)
    detail::subdivide(0, level, b, base_face_vertex_ids(b), base_lattice[b % 4], mids, g.faces);

  g.face_centers.resize(g.faces.size());
  double edge_sum = 0.0;
  for (size_t f = 0; f < g.faces.size(); ++f) {
    const auto& fv = g.faces[f].v;
    const Vec3& a = g.vertices[fv[0]];
    const Vec3& b = g.vertices[fv[1]];
    const Vec3& d = g.vertices[fv[2]];
    g.face_centers[f] = normalized(a + b + d);
    edge_sum += norm(b - a) + norm(d - b) + norm(a - d);
  }
  g.edge_length_scale = edge_sum / (3.0 * static_cast<double>(g.faces.size()));

  // Vertex -> incident faces, ordered clockwise from outside starting at the
  // lowest incident face id.
  const int V = g.vertex_count();
  std::vector<int> counts(V, 0);
  for (const auto& f : g.faces)
    for (int32_t vid : f.v) counts[vid]++;
  g.ring_offsets_.assign(V + 1, 0);
  for (int v = 0; v < V; ++v) g.ring_offsets_[v + 1] = g.ring_offsets_[v] + counts[v];
  g.ring_faces_.assign(g.ring_offsets_[V], -1);
  std::vector<int64_t> cursor(g.ring_offsets_.begin(), g.ring_offsets_.end() - 1);
  for (size_t f = 0; f < g.faces.size(); ++f)
    for (int32_t vid : g.faces[f].v) g.ring_faces_[cursor[vid]++] = static_cast<int32_t>(f);

  for (int v = 0; v < V; ++v) {
    int32_t* begin = g.ring_faces_.data() + g.ring_offsets_[v];
    int32_t* end = g.ring_faces_.data() + g.ring_offsets_[v + 1];
    std::sort(begin, end);
    const Vec3 vpos = g.vertices[v];
    const Vec3 c0 = g.face_centers[*begin];
    const Vec3 e1 = normalized(c0 - vpos * dot(vpos, c0));
    const Vec3 e2 = cross(vpos, e1);  // (e1, e2, v) right-handed; increasing angle = CCW from outside
    auto cw_key = [&](int32_t fid) {
      const Vec3& fc = g.face_centers[fid];
      const double ang = std::atan2(dot(fc, e2), dot(fc, e1));
      return ang <= 1e-15 ? -ang : 2.0 * kPi - ang;
    };
    std::sort(begin, end, [&](int32_t a, int32_t b) { return cw_key(a) < cw_key(b); });
  }
  return g;
}

inline int IcosphereGrid::face_of_point(const Vec3& p) const {
  if (std::abs(norm(p) - 1.0) > 1e-6) throw InvalidInputError("face_of_point: input is not unit-norm");

  auto min_edge_sign = [&](const Vec3& a, const Vec3& b, const Vec3& c) {
    return std::min({dot(cross(a, b), p), dot(cross(b, c), p), dot(cross(c, a), p)});
  };

  // Base-face selection by gnomonic (great-circle sign) containment; ascending
  // loop order gives the lowest-id tie-break for free.
  int base = 0;
  double base_best = -1e30;
  for (int b = 0; b < 20; ++b) {
    const auto ids = base_face_vertex_ids(b);
    const double m = min_edge_sign(vertices[ids[0]], vertices[ids[1]], vertices[ids[2]]);
    if (m >= -1e-12) {
      base = b;
      base_best = m;
      break;
    }
    if (m > base_best) {
      base_best = m;
      base = b;
    }
  }

  const auto ids = base_face_vertex_ids(base);
  std::array<Vec3, 3> tri = {vertices[ids[0]], vertices[ids[1]], vertices[ids[2]]};
  int id = base;
  for (int d = 0; d < level; ++d) {
    // Midpoints recomputed exactly as in build(), so the descent walks the
    // stored geometry bit for bit.
    const Vec3 m01 = normalized(tri[0] + tri[1]);
    const Vec3 m12 = normalized(tri[1] + tri[2]);
    const Vec3 m02 = normalized(tri[0] + tri[2]);
    const std::array<std::array<Vec3, 3>, 4> kids = {
        {{tri[0], m01, m02}, {m01, tri[1], m12}, {m02, m12, tri[2]}, {m01, m12, m02}}};
    int pick = -1;
    double pick_best = -1e30;
    int fallback = 0;
    for (int k = 0; k < 4; ++k) {
      const double m = min_edge_sign(kids[k][0], kids[k][1], kids[k][2]);
      if (m >= -1e-12) {
        pick = k;
        break;
      }
      if (m > pick_best) {
        pick_best = m;
        fallback = k;
      }
    }
    if (pick == -1) pick = fallback;
    tri = kids[pick];
    id = id * 4 + pick;
  }
  return id;
}

inline std::array<double, 3> IcosphereGrid::barycentric(int face_id, const Vec3& p) const {
  const Face& f = faces[face_id];
  const Vec3& a = vertices[f.v[0]];
  const Vec3& b = vertices[f.v[1]];
  const Vec3& c = vertices[f.v[2]];
  const Vec3 n = cross(b - a, c - a);
  const double denom = dot(p, n);
  if (std::abs(denom) < 1e-14) throw InvalidInputError("barycentric: point projects away from face plane");
  const double t = dot(a, n) / denom;
  const Vec3 q = p * t;  // central projection of p onto the chordal plane
  const double full = dot(n, n);
  double wa = dot(cross(b - q, c - q), n) / full;
  double wb = dot(cross(c - q, a - q), n) / full;
  double wc = dot(cross(a - q, b - q), n) / full;
  const double min_w = std::min({wa, wb, wc});
  if (min_w < -1e-9) throw InvalidInputError("barycentric: point outside face");
  wa = std::max(wa, 0.0);
  wb = std::max(wb, 0.0);
  wc = std::max(wc, 0.0);
  const double s = wa + wb + wc;
  return {wa / s, wb / s, wc / s};
}

inline std::array<int32_t, 6> IcosphereGrid::vertex_ring(int vertex_id, int start_face) const {
  const int n = ring_size(vertex_id);
  const int32_t* ring = ring_begin(vertex_id);
  int start = -1;
  for (int k = 0; k < n; ++k)
    if (ring[k] == start_face) start = k;
  if (start == -1) throw InvalidInputError("vertex_ring: start_face not incident to vertex");
  std::array<int32_t, 6> out{};
  for (int k = 0; k < n; ++k) out[k] = ring[(start + k) % n];
  if (n == 5) out[5] = ring[start];  // pentagonal vertex: pad with start_face
  return out;
}

}  // namespace icosr
