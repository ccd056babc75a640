#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <set>

#include "icosr/icosphere.hpp"

using namespace icosr;

namespace {

// Brute-force point location: test every face, lowest id wins.
int locate_brute_force(const IcosphereGrid& g, const Vec3& p) {
  for (int f = 0; f < g.face_count(); ++f)
    if (g.face_contains(f, p)) return f;
  return -1;
}

long count_edges(const IcosphereGrid& g) {
  std::set<std::pair<int, int>> edges;
  for (const auto& f : g.faces)
    for (int k = 0; k < 3; ++k) {
      const int a = f.v[k], b = f.v[(k + 1) % 3];
      edges.emplace(std::min(a, b), std::max(a, b));
    }
  return static_cast<long>(edges.size());
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec3 v{nd(rng), nd(rng), nd(rng)};
  return normalized(v);
}

}  // namespace

TEST_CASE("grid closed forms and Euler characteristic") {
  for (int L = 0; L <= 4; ++L) {
    const auto g = IcosphereGrid::build(L);
    const long F = 20L << (2 * L);
    const long V = (10L << (2 * L)) + 2;
    const long E = 30L << (2 * L);
    REQUIRE(g.face_count() == F);
    REQUIRE(g.vertex_count() == V);
    REQUIRE(g.edge_count() == E);
    REQUIRE(count_edges(g) == E);
    REQUIRE(V - E + F == 2);
  }
}

TEST_CASE("level 5 counts match the x8 working resolution") {
  const auto g = IcosphereGrid::build(5);
  REQUIRE(g.face_count() == 20480);
  REQUIRE(g.vertex_count() == 10242);
}

TEST_CASE("level bounds are enforced") {
  REQUIRE_THROWS_AS(IcosphereGrid::build(-1), BoundsError);
  REQUIRE_THROWS_AS(IcosphereGrid::build(11), BoundsError);
}

TEST_CASE("vertices are unit and valences split 12/rest") {
  const auto g = IcosphereGrid::build(3);
  for (const auto& v : g.vertices) REQUIRE(std::abs(norm(v) - 1.0) < 1e-12);
  int pent = 0;
  for (int v = 0; v < g.vertex_count(); ++v) {
    const int n = g.ring_size(v);
    if (n == 5)
      ++pent;
    else
      REQUIRE(n == 6);
  }
  REQUIRE(pent == 12);
  // The pentagonal vertices are exactly the 12 original ones.
  for (int v = 0; v < 12; ++v) REQUIRE(g.ring_size(v) == 5);
}

TEST_CASE("orientation flags alternate except along polar seams") {
  const int L = 2;
  const auto g = IcosphereGrid::build(L);
  // Map undirected edges to the faces sharing them.
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (int f = 0; f < g.face_count(); ++f)
    for (int k = 0; k < 3; ++k) {
      const int a = g.faces[f].v[k], b = g.faces[f].v[(k + 1) % 3];
      edge_faces[{std::min(a, b), std::max(a, b)}].push_back(f);
    }
  long violations = 0;
  for (const auto& [e, fs] : edge_faces) {
    REQUIRE(fs.size() == 2);
    if (g.faces[fs[0]].up == g.faces[fs[1]].up) ++violations;
  }
  // The face-adjacency graph is not bipartite (odd cycles at the 12 original
  // vertices), so alternation cannot hold globally. It fails exactly on the
  // 10 polar seam lines, 2^L adjacencies each.
  REQUIRE(violations == 10L << L);
}

TEST_CASE("face_of_point returns each face for its centroid") {
  const auto g = IcosphereGrid::build(3);
  for (int f = 0; f < g.face_count(); ++f) REQUIRE(g.face_of_point(g.face_centers[f]) == f);
}

TEST_CASE("face_of_point at the north pole picks the lowest incident face") {
  const auto g = IcosphereGrid::build(3);
  const Vec3 pole{0.0, 0.0, 1.0};
  const int got = g.face_of_point(pole);
  const int expect = locate_brute_force(g, pole);
  REQUIRE(got == expect);
  // And the result is one of the 5 faces around the original north vertex.
  bool incident = false;
  for (int k = 0; k < g.ring_size(0); ++k) incident = incident || (g.ring_begin(0)[k] == got);
  REQUIRE(incident);
}

TEST_CASE("face_of_point agrees with brute-force containment") {
  const auto g = IcosphereGrid::build(4);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p = random_unit(rng);
    REQUIRE(g.face_of_point(p) == locate_brute_force(g, p));
  }
}

TEST_CASE("face_of_point rejects non-unit input") {
  const auto g = IcosphereGrid::build(1);
  REQUIRE_THROWS_AS(g.face_of_point(Vec3{0.5, 0.0, 0.0}), InvalidInputError);
}

TEST_CASE("barycentric at vertices, centers and random interior points") {
  const auto g = IcosphereGrid::build(3);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ud(0.0, 1.0);

  const int f = 1234 % g.face_count();
  const auto& fv = g.faces[f].v;

  auto w_vertex = g.barycentric(f, g.vertices[fv[0]]);
  REQUIRE(w_vertex[0] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(w_vertex[1] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(w_vertex[2] == Catch::Approx(0.0).margin(1e-12));

  auto w_center = g.barycentric(f, g.face_centers[f]);
  for (double w : w_center) REQUIRE(w == Catch::Approx(1.0 / 3.0).margin(1e-12));

  for (int trial = 0; trial < 200; ++trial) {
    const int fid = static_cast<int>(rng() % g.face_count());
    const auto& v = g.faces[fid].v;
    double a = ud(rng), b = ud(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const double c = 1.0 - a - b;
    const Vec3 q = normalized(g.vertices[v[0]] * a + g.vertices[v[1]] * b + g.vertices[v[2]] * c);
    const auto w = g.barycentric(fid, q);
    REQUIRE(w[0] + w[1] + w[2] == Catch::Approx(1.0).margin(1e-12));

    // Independent oracle: planar sub-triangle areas from cross products, after
    // the same central projection.
    const Vec3 A = g.vertices[v[0]], B = g.vertices[v[1]], C = g.vertices[v[2]];
    const Vec3 n = cross(B - A, C - A);
    const Vec3 qq = q * (dot(A, n) / dot(q, n));
    const double full = norm(cross(B - A, C - A));
    const double wa = norm(cross(B - qq, C - qq)) / full;
    const double wb = norm(cross(C - qq, A - qq)) / full;
    const double wc = norm(cross(A - qq, B - qq)) / full;
    REQUIRE(w[0] == Catch::Approx(wa).margin(1e-10));
    REQUIRE(w[1] == Catch::Approx(wb).margin(1e-10));
    REQUIRE(w[2] == Catch::Approx(wc).margin(1e-10));
  }
}

TEST_CASE("barycentric rejects points outside the face") {
  const auto g = IcosphereGrid::build(2);
  REQUIRE_THROWS_AS(g.barycentric(0, g.face_centers[g.face_count() / 2]), InvalidInputError);
}

TEST_CASE("vertex_ring structure and rotation") {
  const auto g = IcosphereGrid::build(3);

  // A hexavalent vertex: 6 distinct faces, rotation of start rotates output.
  const int v = 100;  // beyond the 12 originals
  REQUIRE(g.ring_size(v) == 6);
  const int f0 = g.ring_begin(v)[0];
  const auto ring = g.vertex_ring(v, f0);
  std::set<int> uniq(ring.begin(), ring.end());
  REQUIRE(uniq.size() == 6);
  const auto rot = g.vertex_ring(v, ring[2]);
  for (int k = 0; k < 6; ++k) REQUIRE(rot[k] == ring[(2 + k) % 6]);

  // Pentagonal vertex: 5 distinct + start_face repeated in slot 6.
  const int pv = 0;
  const int pf = g.ring_begin(pv)[1];
  const auto pring = g.vertex_ring(pv, pf);
  REQUIRE(pring[0] == pf);
  REQUIRE(pring[5] == pf);
  std::set<int> puniq(pring.begin(), pring.end());
  REQUIRE(puniq.size() == 5);

  REQUIRE_THROWS_AS(g.vertex_ring(v, /*not incident*/ 0), InvalidInputError);
}

TEST_CASE("vertex_ring is clockwise seen from outside") {
  const auto g = IcosphereGrid::build(3);
  for (int v = 0; v < g.vertex_count(); ++v) {
    const int n = g.ring_size(v);
    const Vec3 vp = g.vertices[v];
    for (int k = 0; k < n; ++k) {
      const Vec3 c0 = g.face_centers[g.ring_begin(v)[k]];
      const Vec3 c1 = g.face_centers[g.ring_begin(v)[(k + 1) % n]];
      const Vec3 o0 = c0 - vp * dot(vp, c0);
      const Vec3 o1 = c1 - vp * dot(vp, c1);
      REQUIRE(dot(cross(o0, o1), vp) < 0.0);
    }
  }
}
