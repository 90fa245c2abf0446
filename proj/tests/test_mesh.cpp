#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "prstokes/mesh.hpp"

using namespace prstokes;

TEST_CASE("initial square combinatorics") {
    for (auto [lo, hi] : {std::pair{-1.0, 1.0}, std::pair{0.0, 1.0}}) {
        const Mesh m = unit_square_initial(lo, hi);
        CHECK(m.num_vertices() == 5);
        CHECK(m.num_elements() == 4);
        int boundary = 0, interior = 0;
        for (const Face& f : m.faces) (f.boundary ? boundary : interior)++;
        CHECK(boundary == 4);
        CHECK(interior == 4);
        CHECK(m.total_area() == Catch::Approx((hi - lo) * (hi - lo)).epsilon(1e-14));
        // planar Euler formula V - E + F = 1 (faces excluding the outer one)
        CHECK(m.num_vertices() - m.num_faces() + m.num_elements() == 1);
    }
}

TEST_CASE("uniform refinement element counts") {
    Mesh m = unit_square_initial(0.0, 1.0);
    m = refine_uniform(m, 2);
    CHECK(m.num_elements() == 16);
    for (int level = 0; level <= 4; ++level) {
        const Mesh mk = square_mesh(0.0, 1.0, level);
        CHECK(mk.num_elements() == 4 * (1 << (2 * level)));
        CHECK(mk.level == 2 * level);
        CHECK(mk.total_area() == Catch::Approx(1.0).epsilon(1e-13));
    }
    CHECK_THROWS_AS(refine_uniform(m, 0), std::invalid_argument);
}

TEST_CASE("h_max halves per level on the square family") {
    double prev = square_mesh(0.0, 1.0, 0).h_max();
    for (int level = 1; level <= 4; ++level) {
        const double cur = square_mesh(0.0, 1.0, level).h_max();
        CHECK(cur == Catch::Approx(0.5 * prev).epsilon(1e-13));
        prev = cur;
    }
}

TEST_CASE("refinement preserves existing vertices") {
    const Mesh coarse = square_mesh(0.0, 1.0, 1);
    const Mesh fine = refine_uniform(coarse, 2);
    std::set<std::pair<double, double>> fine_pts;
    for (const Vec2& v : fine.vertices) fine_pts.insert({v.x, v.y});
    for (const Vec2& v : coarse.vertices) CHECK(fine_pts.count({v.x, v.y}) == 1);
}

TEST_CASE("shape constant stays bounded under repeated bisection") {
    const double initial = unit_square_initial(0.0, 1.0).shape_constant();
    Mesh m = unit_square_initial(0.0, 1.0);
    m = refine_uniform(m, 12);
    // newest-vertex bisection cycles through finitely many similarity classes
    CHECK(m.shape_constant() <= 2.0 * initial + 1e-12);
    for (int k = 0; k < m.num_elements(); ++k) CHECK(m.area(k) > 0.0);
}

TEST_CASE("topology: conforming adjacency and unit normals") {
    const Mesh m = square_mesh(0.0, 1.0, 2);
    for (int fi = 0; fi < m.num_faces(); ++fi) {
        const Face& f = m.faces[fi];
        CHECK(std::abs(f.normal.norm() - 1.0) <= 1e-14);
        if (f.boundary) {
            CHECK(f.elem[0] >= 0);
            CHECK(f.elem[1] == -1);
        } else {
            CHECK(f.elem[0] >= 0);
            CHECK(f.elem[1] > f.elem[0]);
        }
        // adjacency symmetric: the elements referencing this face contain it
        for (int side = 0; side < 2; ++side) {
            const int k = f.elem[side];
            if (k < 0) continue;
            bool found = false;
            for (int i = 0; i < 3; ++i) found |= (m.element_faces[k][i] == fi);
            CHECK(found);
        }
    }
}

TEST_CASE("boundary normals point outward") {
    const Mesh m = square_mesh(0.0, 1.0, 1);
    for (const Face& f : m.faces) {
        if (!f.boundary) continue;
        const Vec2 mid = (m.vertices[f.a] + m.vertices[f.b]) * 0.5;
        const Vec2 c = m.centroid(f.elem[0]);
        CHECK(f.normal.dot(mid - c) > 0.0);
    }
}

TEST_CASE("hanging vertices are rejected") {
    // two large triangles on the left, two small ones on the right sharing a
    // hanging midpoint on the interface edge
    Mesh m;
    m.vertices = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {2, 0}, {2, 1}, {1, 0.5}};
    m.elements = {{0, 1, 2}, {0, 2, 3}, {1, 4, 6}, {4, 5, 6}};
    CHECK_THROWS(build_topology(m));
}

TEST_CASE("non-positive element areas are rejected") {
    Mesh m;
    m.vertices = {{0, 0}, {1, 0}, {0, 1}};
    m.elements = {{0, 2, 1}}; // clockwise: negative area
    CHECK_THROWS(build_topology(m));
}

TEST_CASE("neighborhoods contain the element and stay bounded") {
    int m0_max = 0;
    for (int level = 0; level <= 4; ++level) {
        const Mesh m = square_mesh(0.0, 1.0, level);
        const NeighborhoodStats stats = neighborhoods(m);
        for (const Neighborhood& nk : stats.patches) {
            CHECK(std::binary_search(nk.neighbors.begin(), nk.neighbors.end(), nk.element));
            CHECK(nk.patch_area >= m.area(nk.element));
        }
        m0_max = std::max(m0_max, stats.m0);
    }
    CHECK(m0_max <= 16); // uniformly bounded across levels
}

TEST_CASE("interior elements of a uniform mesh have about a dozen neighbors") {
    const Mesh m = square_mesh(0.0, 1.0, 2);
    const NeighborhoodStats stats = neighborhoods(m);
    int max_interior = 0;
    for (const Neighborhood& nk : stats.patches)
        max_interior = std::max(max_interior, static_cast<int>(nk.neighbors.size()));
    CHECK(max_interior >= 8);
    CHECK(max_interior <= 16);
}

TEST_CASE("alfeld split geometry") {
    const Mesh m = square_mesh(0.0, 1.0, 1);
    const AlfeldSplit split = alfeld_split(m);
    REQUIRE(static_cast<int>(split.splits.size()) == m.num_elements());
    for (int k = 0; k < m.num_elements(); ++k) {
        const auto& s = split.splits[k];
        const Vec2 avg = (m.vertex(k, 0) + m.vertex(k, 1) + m.vertex(k, 2)) * (1.0 / 3.0);
        CHECK((s.barycenter - avg).norm() <= 1e-15);
        double child_sum = 0.0;
        for (const auto& child : s.children) {
            const double a = triangle_area(child[0], child[1], child[2]);
            CHECK(a == Catch::Approx(m.area(k) / 3.0).epsilon(1e-12));
            child_sum += a;
        }
        CHECK(child_sum == Catch::Approx(m.area(k)).epsilon(1e-13));
    }
}

TEST_CASE("mesh dump format") {
    const Mesh m = unit_square_initial(0.0, 1.0);
    std::ostringstream os;
    m.dump(os);
    std::istringstream is(os.str());
    std::string w1, w2, w3;
    int nv = 0, ne = 0, nf = 0;
    is >> w1 >> nv >> w2 >> ne >> w3 >> nf;
    CHECK(w1 == "vertices");
    CHECK(w2 == "elements");
    CHECK(w3 == "faces");
    CHECK(nv == 5);
    CHECK(ne == 4);
    CHECK(nf == 8);
    int lines = 0;
    std::string line;
    std::getline(is, line); // rest of header
    while (std::getline(is, line))
        if (!line.empty()) ++lines;
    CHECK(lines == nv + ne + nf);
}

TEST_CASE("dump is deterministic across rebuilds") {
    std::ostringstream a, b;
    square_mesh(0.0, 1.0, 2).dump(a);
    square_mesh(0.0, 1.0, 2).dump(b);
    CHECK(a.str() == b.str());
}
