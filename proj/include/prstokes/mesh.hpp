#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "prstokes/geometry.hpp"

namespace prstokes {

/// Mesh face (edge). Interior faces store both adjacent elements with
/// elem[0] < elem[1]; the unit normal points from elem[0] to elem[1]
/// (outward for boundary faces). Jumps are signed accordingly.
struct Face {
    int a = -1, b = -1; // vertex indices, a < b
    int elem[2] = {-1, -1};
    Vec2 normal;
    double length = 0.0;
    bool boundary = false;
};

/// Conforming simplicial 2D mesh. Elements store their vertex triple with the
/// newest-vertex convention: the refinement edge is {v[0], v[1]}, v[2] is the
/// newest vertex. Immutable after construction; refinement returns a new mesh.
class Mesh {
  public:
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> elements;
    std::vector<Face> faces;
    std::vector<std::array<int, 3>> element_faces; // face opposite local vertex i
    int level = 0;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_elements() const { return static_cast<int>(elements.size()); }
    int num_faces() const { return static_cast<int>(faces.size()); }

    const Vec2& vertex(int k, int i) const { return vertices[elements[k][i]]; }

    double area(int k) const {
        return triangle_area(vertex(k, 0), vertex(k, 1), vertex(k, 2));
    }
    Vec2 centroid(int k) const {
        return (vertex(k, 0) + vertex(k, 1) + vertex(k, 2)) * (1.0 / 3.0);
    }
    double diameter(int k) const {
        return std::max({(vertex(k, 0) - vertex(k, 1)).norm(),
                         (vertex(k, 1) - vertex(k, 2)).norm(),
                         (vertex(k, 2) - vertex(k, 0)).norm()});
    }
    double inball_diameter(int k) const {
        const double per = (vertex(k, 0) - vertex(k, 1)).norm() +
                           (vertex(k, 1) - vertex(k, 2)).norm() +
                           (vertex(k, 2) - vertex(k, 0)).norm();
        return 4.0 * area(k) / per;
    }
    double h_max() const {
        double h = 0.0;
        for (int k = 0; k < num_elements(); ++k) h = std::max(h, diameter(k));
        return h;
    }
    double shape_constant() const {
        double s = 0.0;
        for (int k = 0; k < num_elements(); ++k) s = std::max(s, diameter(k) / inball_diameter(k));
        return s;
    }
    double total_area() const {
        double a = 0.0;
        for (int k = 0; k < num_elements(); ++k) a += area(k);
        return a;
    }

    /// Constant gradients of the three barycentric coordinates on element k.
    std::array<Vec2, 3> barycentric_gradients(int k) const {
        const Vec2& p0 = vertex(k, 0);
        const Vec2& p1 = vertex(k, 1);
        const Vec2& p2 = vertex(k, 2);
        const double twoA = 2.0 * area(k);
        return {Vec2{(p1.y - p2.y) / twoA, (p2.x - p1.x) / twoA},
                Vec2{(p2.y - p0.y) / twoA, (p0.x - p2.x) / twoA},
                Vec2{(p0.y - p1.y) / twoA, (p1.x - p0.x) / twoA}};
    }

    std::array<double, 3> barycentric(int k, const Vec2& p) const {
        const double a = area(k);
        return {triangle_area(p, vertex(k, 1), vertex(k, 2)) / a,
                triangle_area(vertex(k, 0), p, vertex(k, 2)) / a,
                triangle_area(vertex(k, 0), vertex(k, 1), p) / a};
    }

    void dump(std::ostream& os) const {
        os << "vertices " << num_vertices() << " elements " << num_elements() << " faces "
           << num_faces() << "\n";
        for (const auto& v : vertices) os << "v " << v.x << " " << v.y << "\n";
        for (const auto& e : elements) os << "e " << e[0] << " " << e[1] << " " << e[2] << "\n";
        for (const auto& f : faces)
            os << "f " << f.a << " " << f.b << " " << f.elem[0] << " " << f.elem[1] << " "
               << (f.boundary ? 1 : 0) << "\n";
    }
};

namespace detail {

inline std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

} // namespace detail

/// Populates faces, adjacency, normals and the element->face map.
/// Throws on non-conforming input (edge shared by >2 elements, or a vertex
/// hanging at the midpoint of a single-sided edge).
inline void build_topology(Mesh& mesh) {
    for (int k = 0; k < mesh.num_elements(); ++k)
        if (!(mesh.area(k) > 0.0))
            throw std::runtime_error("build_topology: non-positive element area at element " +
                                     std::to_string(k));

    std::unordered_map<std::uint64_t, std::array<int, 2>> edge2elems;
    edge2elems.reserve(mesh.elements.size() * 2);
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const auto& e = mesh.elements[k];
        for (int i = 0; i < 3; ++i) {
            const auto key = detail::edge_key(e[(i + 1) % 3], e[(i + 2) % 3]);
            auto [it, inserted] = edge2elems.try_emplace(key, std::array<int, 2>{k, -1});
            if (!inserted) {
                if (it->second[1] != -1)
                    throw std::runtime_error("build_topology: edge shared by >2 elements");
                it->second[1] = k;
            }
        }
    }

    // deterministic enumeration: sorted vertex pairs
    std::vector<std::uint64_t> keys;
    keys.reserve(edge2elems.size());
    for (const auto& kv : edge2elems) keys.push_back(kv.first);
    std::sort(keys.begin(), keys.end());

    std::unordered_map<std::uint64_t, int> vertex_lookup; // hanging-vertex detection
    vertex_lookup.reserve(mesh.vertices.size() * 2);
    const auto vkey = [](const Vec2& p) {
        const auto q = [](double x) {
            return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::llround(x * 1e12)));
        };
        return q(p.x) * 1000003u ^ q(p.y);
    };
    for (int i = 0; i < mesh.num_vertices(); ++i) vertex_lookup.emplace(vkey(mesh.vertices[i]), i);

    mesh.faces.clear();
    mesh.faces.reserve(keys.size());
    std::unordered_map<std::uint64_t, int> face_index;
    face_index.reserve(keys.size());
    for (const auto key : keys) {
        Face f;
        f.a = static_cast<int>(key >> 32);
        f.b = static_cast<int>(key & 0xffffffffu);
        auto adj = edge2elems[key];
        if (adj[1] != -1 && adj[0] > adj[1]) std::swap(adj[0], adj[1]);
        f.elem[0] = adj[0];
        f.elem[1] = adj[1];
        f.boundary = (adj[1] == -1);
        const Vec2 pa = mesh.vertices[f.a], pb = mesh.vertices[f.b];
        f.length = (pb - pa).norm();
        Vec2 n{(pb.y - pa.y) / f.length, (pa.x - pb.x) / f.length};
        const Vec2 mid = (pa + pb) * 0.5;
        const Vec2 away = f.boundary ? (mid - mesh.centroid(f.elem[0]))
                                     : (mesh.centroid(f.elem[1]) - mesh.centroid(f.elem[0]));
        if (n.dot(away) < 0.0) n = n * (-1.0);
        f.normal = n;
        if (f.boundary) {
            const auto it = vertex_lookup.find(vkey(mid));
            if (it != vertex_lookup.end())
                throw std::runtime_error("build_topology: hanging vertex on edge (" +
                                         std::to_string(f.a) + "," + std::to_string(f.b) + ")");
        }
        face_index.emplace(key, static_cast<int>(mesh.faces.size()));
        mesh.faces.push_back(f);
    }

    mesh.element_faces.assign(mesh.num_elements(), {-1, -1, -1});
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const auto& e = mesh.elements[k];
        for (int i = 0; i < 3; ++i)
            mesh.element_faces[k][i] = face_index.at(detail::edge_key(e[(i + 1) % 3], e[(i + 2) % 3]));
    }
}

/// Initial mesh of an axis-aligned square: the two main diagonals give four
/// triangles meeting at the center. Refinement edges are the boundary sides
/// (the hypotenuses), which is the compatible marking for which two bisection
/// sweeps exactly halve h; after one sweep the refinement edges are the
/// diagonal edges.
inline Mesh unit_square_initial(double lo, double hi) {
    Mesh mesh;
    mesh.vertices = {{lo, lo}, {hi, lo}, {hi, hi}, {lo, hi}, {0.5 * (lo + hi), 0.5 * (lo + hi)}};
    mesh.elements = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
    mesh.level = 0;
    build_topology(mesh);
    return mesh;
}

namespace detail {

class Bisector {
  public:
    explicit Bisector(const Mesh& mesh)
        : vertices_(mesh.vertices), elements_(mesh.elements) {
        for (int k = 0; k < static_cast<int>(elements_.size()); ++k) add_incidence(k);
    }

    void refine_all() {
        needs_.assign(elements_.size(), 1);
        const int n0 = static_cast<int>(elements_.size());
        for (int k = 0; k < n0; ++k)
            if (needs_[k]) bisect_pair(k);
    }

    Mesh finish(int level) const {
        Mesh out;
        out.vertices = vertices_;
        out.elements = elements_;
        out.level = level;
        build_topology(out);
        return out;
    }

  private:
    std::vector<Vec2> vertices_;
    std::vector<std::array<int, 3>> elements_;
    std::vector<char> needs_;
    std::unordered_map<std::uint64_t, std::array<int, 2>> edge2elems_;
    std::unordered_map<std::uint64_t, int> midpoints_;
    int depth_guard_ = 0;

    void add_incidence(int k) {
        const auto& e = elements_[k];
        for (int i = 0; i < 3; ++i) {
            const auto key = edge_key(e[(i + 1) % 3], e[(i + 2) % 3]);
            auto [it, inserted] = edge2elems_.try_emplace(key, std::array<int, 2>{k, -1});
            if (!inserted) {
                if (it->second[0] == -1)
                    it->second[0] = k;
                else
                    it->second[1] = k;
            }
        }
    }
    void remove_incidence(int k) {
        const auto& e = elements_[k];
        for (int i = 0; i < 3; ++i) {
            auto& adj = edge2elems_[edge_key(e[(i + 1) % 3], e[(i + 2) % 3])];
            if (adj[0] == k) adj[0] = -1;
            if (adj[1] == k) adj[1] = -1;
        }
    }
    int neighbor_across(int k, int a, int b) const {
        const auto it = edge2elems_.find(edge_key(a, b));
        if (it == edge2elems_.end()) return -1;
        if (it->second[0] != -1 && it->second[0] != k) return it->second[0];
        if (it->second[1] != -1 && it->second[1] != k) return it->second[1];
        return -1;
    }
    bool has_refinement_edge(int k, int a, int b) const {
        const auto& e = elements_[k];
        return edge_key(e[0], e[1]) == edge_key(a, b);
    }
    int midpoint(int a, int b) {
        const auto key = edge_key(a, b);
        const auto it = midpoints_.find(key);
        if (it != midpoints_.end()) return it->second;
        const int m = static_cast<int>(vertices_.size());
        vertices_.push_back((vertices_[a] + vertices_[b]) * 0.5);
        midpoints_.emplace(key, m);
        return m;
    }
    void split(int k, int m) {
        const auto e = elements_[k];
        remove_incidence(k);
        elements_[k] = {e[2], e[0], m};
        add_incidence(k);
        const int k2 = static_cast<int>(elements_.size());
        elements_.push_back({e[1], e[2], m});
        needs_.push_back(0);
        add_incidence(k2);
    }
    void bisect_pair(int k) {
        if (++depth_guard_ > 1 << 22)
            throw std::runtime_error("bisection closure does not terminate (incompatible marking)");
        needs_[k] = 0;
        const int a = elements_[k][0], b = elements_[k][1];
        int nb = neighbor_across(k, a, b);
        while (nb != -1 && !has_refinement_edge(nb, a, b)) {
            bisect_pair(nb);
            nb = neighbor_across(k, a, b);
        }
        const int m = midpoint(a, b);
        split(k, m);
        if (nb != -1) {
            needs_[nb] = 0;
            split(nb, m);
        }
        --depth_guard_;
    }
};

} // namespace detail

/// `times` sweeps of newest-vertex bisection of every element, with
/// conforming closure. Two sweeps halve h on the square family.
inline Mesh refine_uniform(const Mesh& mesh, int times) {
    if (times < 1) throw std::invalid_argument("refine_uniform: times >= 1");
    Mesh cur = mesh;
    for (int t = 0; t < times; ++t) {
        detail::Bisector bis(cur);
        bis.refine_all();
        cur = bis.finish(cur.level + 1);
    }
    return cur;
}

/// Criss-cross square refined by 2*level bisection sweeps, so h is halved per
/// level: 4 * 4^level elements.
inline Mesh square_mesh(double lo, double hi, int level) {
    Mesh m = unit_square_initial(lo, hi);
    if (level > 0) m = refine_uniform(m, 2 * level);
    return m;
}

/// Vertex-touching neighbor sets N_K (K included) and patch statistics.
struct Neighborhood {
    int element = -1;
    std::vector<int> neighbors; // sorted, contains `element`
    double patch_area = 0.0;
};

struct NeighborhoodStats {
    std::vector<Neighborhood> patches;
    int m0 = 0;               // max #N_K
    double max_area_ratio = 0; // max |omega_K| / |K|
};

inline NeighborhoodStats neighborhoods(const Mesh& mesh) {
    std::vector<std::vector<int>> vertex2elems(mesh.num_vertices());
    for (int k = 0; k < mesh.num_elements(); ++k)
        for (int i = 0; i < 3; ++i) vertex2elems[mesh.elements[k][i]].push_back(k);

    NeighborhoodStats stats;
    stats.patches.resize(mesh.num_elements());
    for (int k = 0; k < mesh.num_elements(); ++k) {
        auto& nk = stats.patches[k];
        nk.element = k;
        for (int i = 0; i < 3; ++i)
            for (int kk : vertex2elems[mesh.elements[k][i]]) nk.neighbors.push_back(kk);
        std::sort(nk.neighbors.begin(), nk.neighbors.end());
        nk.neighbors.erase(std::unique(nk.neighbors.begin(), nk.neighbors.end()),
                           nk.neighbors.end());
        for (int kk : nk.neighbors) nk.patch_area += mesh.area(kk);
        stats.m0 = std::max(stats.m0, static_cast<int>(nk.neighbors.size()));
        stats.max_area_ratio = std::max(stats.max_area_ratio, nk.patch_area / mesh.area(k));
    }
    return stats;
}

/// Barycentric (Alfeld) split: per element the barycenter and three child
/// triangles, child i opposite parent vertex i.
struct AlfeldSplit {
    struct ElementSplit {
        Vec2 barycenter;
        // child i = (parent vertex i+1, parent vertex i+2, barycenter)
        std::array<std::array<Vec2, 3>, 3> children;
    };
    std::vector<ElementSplit> splits;
};

inline AlfeldSplit alfeld_split(const Mesh& mesh) {
    AlfeldSplit out;
    out.splits.resize(mesh.num_elements());
    for (int k = 0; k < mesh.num_elements(); ++k) {
        auto& s = out.splits[k];
        s.barycenter = mesh.centroid(k);
        for (int i = 0; i < 3; ++i)
            s.children[i] = {mesh.vertex(k, (i + 1) % 3), mesh.vertex(k, (i + 2) % 3),
                             s.barycenter};
    }
    return out;
}

} // namespace prstokes
