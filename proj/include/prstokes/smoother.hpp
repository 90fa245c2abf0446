#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "prstokes/nfunction.hpp"
#include "prstokes/spaces.hpp"

namespace prstokes {

/// Smoothing operator E = A + B + C mapping CR fields to continuous piecewise
/// polynomials with matching face moments and pointwise divergence:
///   (A) vertex averaging into conforming P1,
///   (B) quadratic face bubbles restoring the face means,
///   (C) per-element continuous piecewise-P2 correction on the barycentric
///       split, vanishing on the element boundary, fixing the divergence.
/// With zero_boundary the result vanishes on the domain boundary (vertex
/// averages zeroed at boundary vertices, no boundary bubbles); this is the
/// variant for test functions and requires zero boundary face means of the
/// input for the moment identities. Without it, E preserves boundary data and
/// reproduces every conforming P1 field; used for trial fields with
/// inhomogeneous Dirichlet data.
///
/// Realized as a sparse matrix S from CR dofs to the composite smoothed basis:
/// [2 per vertex | 2 per face (bubbles) | 8 per element (split correction)].
class Smoother {
  public:
    const Mesh* mesh = nullptr;
    bool zero_boundary = true;
    Eigen::SparseMatrix<double> S;
    double max_local_residual = 0.0;
    std::vector<char> boundary_vertex;

    int num_smoothed_dofs() const {
        return 2 * mesh->num_vertices() + 2 * mesh->num_faces() + 8 * mesh->num_elements();
    }
    int vertex_dof(int v, int c) const { return 2 * v + c; }
    int bubble_dof(int f, int c) const { return 2 * mesh->num_vertices() + 2 * f + c; }
    int elem_dof(int k, int local) const {
        return 2 * mesh->num_vertices() + 2 * mesh->num_faces() + 8 * k + local;
    }
};

/// Values/gradients of the 10 element-local scalar shapes of the smoothed
/// space: 0-2 vertex hats, 3-5 face bubbles (bubble j on the face opposite
/// vertex j), 6 barycenter P2 node, 7-9 nodes at the midpoints of the
/// segments (vertex n, barycenter). The last four are piecewise polynomial on
/// the barycentric split (child i = subtriangle opposite vertex i).
struct SmoothedShapes {
    std::array<double, 10> val{};
    std::array<Vec2, 10> grad{};
};

inline SmoothedShapes smoothed_scalar_shapes(const Mesh& mesh, int k, const Vec2& p) {
    const auto l = mesh.barycentric(k, p);
    const auto g = mesh.barycentric_gradients(k);
    SmoothedShapes s;
    for (int i = 0; i < 3; ++i) {
        s.val[i] = l[i];
        s.grad[i] = g[i];
    }
    for (int j = 0; j < 3; ++j) {
        const int a = (j + 1) % 3, b = (j + 2) % 3;
        s.val[3 + j] = 6.0 * l[a] * l[b];
        s.grad[3 + j] = 6.0 * (l[a] * g[b] + l[b] * g[a]);
    }
    // child containing p: smallest barycentric coordinate
    int ci = 0;
    if (l[1] < l[ci]) ci = 1;
    if (l[2] < l[ci]) ci = 2;
    const int ia = (ci + 1) % 3, ib = (ci + 2) % 3;
    const double muC = 3.0 * l[ci], muA = l[ia] - l[ci], muB = l[ib] - l[ci];
    const Vec2 gC = 3.0 * g[ci], gA = g[ia] - g[ci], gB = g[ib] - g[ci];
    s.val[6] = muC * (2.0 * muC - 1.0);
    s.grad[6] = (4.0 * muC - 1.0) * gC;
    s.val[7 + ia] = 4.0 * muC * muA;
    s.grad[7 + ia] = 4.0 * (muC * gA + muA * gC);
    s.val[7 + ib] = 4.0 * muB * muC;
    s.grad[7 + ib] = 4.0 * (muB * gC + muC * gB);
    // shape 7 + ci is identically zero on child ci
    return s;
}

/// Global smoothed dof of local (shape, component) pair on element k.
inline std::array<int, 20> smoothed_local_dofs(const Smoother& op, int k) {
    const Mesh& mesh = *op.mesh;
    std::array<int, 20> d{};
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 3; ++i) d[2 * i + c] = op.vertex_dof(mesh.elements[k][i], c);
        for (int j = 0; j < 3; ++j) d[2 * (3 + j) + c] = op.bubble_dof(mesh.element_faces[k][j], c);
        for (int n = 0; n < 4; ++n) d[2 * (6 + n) + c] = op.elem_dof(k, 2 * n + c);
    }
    return d;
}

/// Smoothed field: coefficients in the composite basis (usually y = S * dofs).
struct SmoothedField {
    const Smoother* op = nullptr;
    Eigen::VectorXd y;

    Vec2 value(int k, const Vec2& p) const {
        const auto sh = smoothed_scalar_shapes(*op->mesh, k, p);
        const auto d = smoothed_local_dofs(*op, k);
        Vec2 v;
        for (int s = 0; s < 10; ++s) {
            v.x += y[d[2 * s + 0]] * sh.val[s];
            v.y += y[d[2 * s + 1]] * sh.val[s];
        }
        return v;
    }

    /// (grad)_{cj} = d(component c)/dx_j; piecewise per barycentric-split child.
    Mat2 gradient(int k, const Vec2& p) const {
        const auto sh = smoothed_scalar_shapes(*op->mesh, k, p);
        const auto d = smoothed_local_dofs(*op, k);
        Mat2 G;
        for (int s = 0; s < 10; ++s) {
            for (int c = 0; c < 2; ++c) {
                const double w = y[d[2 * s + c]];
                G(c, 0) += w * sh.grad[s].x;
                G(c, 1) += w * sh.grad[s].y;
            }
        }
        return G;
    }

    double divergence(int k, const Vec2& p) const { return gradient(k, p).trace(); }
};

namespace detail {

using ScalarRow = std::unordered_map<int, double>; // scalar face dof -> weight

} // namespace detail

inline Smoother build_smoother(const Mesh& mesh, bool zero_boundary = true) {
    Smoother op;
    op.mesh = &mesh;
    op.zero_boundary = zero_boundary;

    op.boundary_vertex.assign(mesh.num_vertices(), 0);
    for (const auto& f : mesh.faces)
        if (f.boundary) op.boundary_vertex[f.a] = op.boundary_vertex[f.b] = 1;

    std::vector<std::vector<int>> vertex2elems(mesh.num_vertices());
    for (int k = 0; k < mesh.num_elements(); ++k)
        for (int i = 0; i < 3; ++i) vertex2elems[mesh.elements[k][i]].push_back(k);

    // stage A: scalar averaging rows per vertex (identical for both components)
    std::vector<detail::ScalarRow> rowsA(mesh.num_vertices());
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        if (zero_boundary && op.boundary_vertex[v]) continue;
        const auto& patch = vertex2elems[v];
        const double w = 1.0 / static_cast<double>(patch.size());
        for (int k : patch) {
            int loc = 0;
            while (mesh.elements[k][loc] != v) ++loc;
            // one-sided vertex value of a CR function: -u_{F_loc} + sum of others
            for (int j = 0; j < 3; ++j)
                rowsA[v][mesh.element_faces[k][j]] += (j == loc ? -w : w);
        }
    }

    // stage B: bubble coefficient c_F = face mean of (v - Av)
    std::vector<detail::ScalarRow> rowsB(mesh.num_faces());
    for (int f = 0; f < mesh.num_faces(); ++f) {
        if (zero_boundary && mesh.faces[f].boundary) continue;
        auto& row = rowsB[f];
        row[f] += 1.0;
        for (int v : {mesh.faces[f].a, mesh.faces[f].b})
            for (const auto& [col, w] : rowsA[v]) row[col] -= 0.5 * w;
    }

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(40 * static_cast<std::size_t>(mesh.num_elements()));
    for (int v = 0; v < mesh.num_vertices(); ++v)
        for (const auto& [col, w] : rowsA[v])
            for (int c = 0; c < 2; ++c)
                trip.emplace_back(op.vertex_dof(v, c), cr_dof(col, c), w);
    for (int f = 0; f < mesh.num_faces(); ++f)
        for (const auto& [col, w] : rowsB[f])
            for (int c = 0; c < 2; ++c)
                trip.emplace_back(op.bubble_dof(f, c), cr_dof(col, c), w);

    // stage C: per element, continuous piecewise-P2 correction w on the
    // barycentric split with w = 0 on the element boundary and
    // div w = g_K := div_h v - div((A+B)v) pointwise (g_K is linear on K,
    // with zero mean because the element boundary fluxes already agree).
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const auto g = mesh.barycentric_gradients(k);
        const auto& ef = mesh.element_faces[k];
        const auto& ev = mesh.elements[k];

        // 9 evaluation points: per child i, the child vertices and barycenter;
        // div w is linear per child, g_K is linear on K.
        Eigen::Matrix<double, 9, 8> D = Eigen::Matrix<double, 9, 8>::Zero();
        std::array<std::array<double, 3>, 9> lam{}; // barycentric coords of the points
        for (int ci = 0; ci < 3; ++ci) {
            const int ia = (ci + 1) % 3, ib = (ci + 2) % 3;
            const Vec2 gC = 3.0 * g[ci], gA = g[ia] - g[ci], gB = g[ib] - g[ci];
            // unknown layout: [z | m0 | m1 | m2] x [x, y]; shape gradients of
            // N_z, N_{m_ia}, N_{m_ib} at child barycentric (1,0,0),(0,1,0),(0,0,1)
            const Vec2 gz[3] = {-1.0 * gC, -1.0 * gC, 3.0 * gC};
            const Vec2 ga[3] = {4.0 * gC, Vec2{}, 4.0 * gA};
            const Vec2 gb[3] = {Vec2{}, 4.0 * gC, 4.0 * gB};
            for (int t = 0; t < 3; ++t) {
                const int row = 3 * ci + t;
                for (int c = 0; c < 2; ++c) {
                    D(row, 0 + c) = (c == 0 ? gz[t].x : gz[t].y);
                    D(row, 2 * (1 + ia) + c) = (c == 0 ? ga[t].x : ga[t].y);
                    D(row, 2 * (1 + ib) + c) = (c == 0 ? gb[t].x : gb[t].y);
                }
                if (t == 0)
                    lam[row][ia] = 1.0;
                else if (t == 1)
                    lam[row][ib] = 1.0;
                else
                    lam[row] = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
            }
        }

        // right-hand side rows g_K(p_e) as linear maps on the CR dofs
        std::unordered_map<int, int> colmap; // global CR dof -> local column
        std::vector<int> cols;
        const auto col_of = [&](int dof) {
            auto [it, inserted] = colmap.try_emplace(dof, static_cast<int>(cols.size()));
            if (inserted) cols.push_back(dof);
            return it->second;
        };
        std::vector<std::array<double, 9>> G; // per local column, the 9 values
        const auto add = [&](int dof, int row, double w) {
            // zero-trace inputs have zero dofs on boundary faces; their columns
            // would spoil the zero-mean structure of the deficit, so drop them
            if (zero_boundary && mesh.faces[dof / 2].boundary) return;
            const int c = col_of(dof);
            if (c == static_cast<int>(G.size())) G.push_back({});
            G[c][row] += w;
        };

        for (int row = 0; row < 9; ++row) {
            // div_h v (constant): basis gradient of face-j shape is -2 grad(lambda_j)
            for (int j = 0; j < 3; ++j) {
                add(cr_dof(ef[j], 0), row, -2.0 * g[j].x);
                add(cr_dof(ef[j], 1), row, -2.0 * g[j].y);
            }
            // minus div(Av) (constant): Av = sum_t (Av)(vertex t) lambda_t
            for (int t = 0; t < 3; ++t)
                for (const auto& [fcol, w] : rowsA[ev[t]]) {
                    add(cr_dof(fcol, 0), row, -w * g[t].x);
                    add(cr_dof(fcol, 1), row, -w * g[t].y);
                }
            // minus div(Bv)(p): grad b_j(p) = 6 (l_a grad l_b + l_b grad l_a)
            for (int j = 0; j < 3; ++j) {
                const int a = (j + 1) % 3, b = (j + 2) % 3;
                const Vec2 gb = 6.0 * (lam[row][a] * g[b] + lam[row][b] * g[a]);
                for (const auto& [fcol, w] : rowsB[ef[j]]) {
                    add(cr_dof(fcol, 0), row, -w * gb.x);
                    add(cr_dof(fcol, 1), row, -w * gb.y);
                }
            }
        }

        Eigen::MatrixXd Gm(9, static_cast<int>(G.size()));
        for (int c = 0; c < Gm.cols(); ++c)
            for (int row = 0; row < 9; ++row) Gm(row, c) = G[c][row];

        const Eigen::ColPivHouseholderQR<Eigen::Matrix<double, 9, 8>> qr(D);
        const Eigen::MatrixXd W = qr.solve(Gm);
        const double res = (D * W - Gm).norm() / (1.0 + Gm.norm());
        op.max_local_residual = std::max(op.max_local_residual, res);
        if (res > 1e-10)
            throw std::runtime_error("build_smoother: divergence correction residual " +
                                     std::to_string(res) + " on element " + std::to_string(k));
        for (int lc = 0; lc < W.cols(); ++lc)
            for (int lr = 0; lr < 8; ++lr)
                if (W(lr, lc) != 0.0) trip.emplace_back(op.elem_dof(k, lr), cols[lc], W(lr, lc));
    }

    op.S.resize(op.num_smoothed_dofs(), 2 * mesh.num_faces());
    op.S.setFromTriplets(trip.begin(), trip.end());
    op.S.makeCompressed();
    return op;
}

inline SmoothedField apply_smoother(const Smoother& op, const CRFunction& v) {
    SmoothedField f;
    f.op = &op;
    f.y = op.S * v.dofs;
    return f;
}

/// |∫ Q_h : (grad E v - grad_h v)| / scale for a piecewise-constant tensor
/// field Q_h; an exact identity of the smoother (face moments match).
inline double gradient_pairing_residual(const Smoother& op, const CRFunction& v,
                                        const std::vector<Mat2>& Q) {
    const Mesh& mesh = *op.mesh;
    const SmoothedField ev = apply_smoother(op, v);
    const QuadratureRule rule = triangle_rule(2);
    double mismatch = 0.0, scale = 0.0;
    for (int k = 0; k < mesh.num_elements(); ++k) {
        const Mat2 gh = v.gradient(k);
        Mat2 ge_mean;
        const Vec2 z = mesh.centroid(k);
        for (int ci = 0; ci < 3; ++ci) {
            const Vec2 a = mesh.vertex(k, (ci + 1) % 3);
            const Vec2 b = mesh.vertex(k, (ci + 2) % 3);
            const ElementQuadrature eq = element_quadrature(a, b, z, rule);
            for (std::size_t q = 0; q < eq.points.size(); ++q)
                ge_mean += eq.weights[q] * ev.gradient(k, eq.points[q]);
        }
        mismatch += Q[k].frobenius(ge_mean - mesh.area(k) * gh);
        scale += mesh.area(k) * Q[k].norm() * (1.0 + gh.norm());
    }
    return std::abs(mismatch) / std::max(scale, 1e-300);
}

/// Measured local stability ratios of the smoother over sample fields.
struct StabilityReport {
    double max_grad_ratio = 0.0;      // ||grad Ev||_{L1(K)} / ||grad_h v||_{L1(patch)}
    double max_jump_ratio = 0.0;      // ||D(v - Ev)||_{L1(K)} / sum_F int_F |jump|
    double max_phi_ratio_r15 = 0.0;   // mean_K phi(|grad Ev|) / mean_patch phi(|grad_h v|)
    double max_phi_ratio_r3 = 0.0;
};

inline StabilityReport stability_report(const Smoother& op,
                                        const std::vector<CRFunction>& samples) {
    const Mesh& mesh = *op.mesh;
    const NeighborhoodStats nbh = neighborhoods(mesh);
    const NFunctionRE nf15(1.5, 0.0), nf3(3.0, 0.0);
    const QuadratureRule rule = triangle_rule(4);
    const QuadratureRule erule = edge_rule(4);

    StabilityReport rep;
    for (const auto& v : samples) {
        const SmoothedField ev = apply_smoother(op, v);
        for (int k = 0; k < mesh.num_elements(); ++k) {
            double grad_e_l1 = 0.0, dev_l1 = 0.0, phi_e_15 = 0.0, phi_e_3 = 0.0;
            const Vec2 z = mesh.centroid(k);
            const Mat2 gh = v.gradient(k);
            for (int ci = 0; ci < 3; ++ci) {
                const Vec2 a = mesh.vertex(k, (ci + 1) % 3);
                const Vec2 b = mesh.vertex(k, (ci + 2) % 3);
                const ElementQuadrature eq = element_quadrature(a, b, z, rule);
                for (std::size_t q = 0; q < eq.points.size(); ++q) {
                    const Mat2 ge = ev.gradient(k, eq.points[q]);
                    grad_e_l1 += eq.weights[q] * ge.norm();
                    dev_l1 += eq.weights[q] * (gh - ge).sym().norm();
                    phi_e_15 += eq.weights[q] * nf15.value(ge.norm());
                    phi_e_3 += eq.weights[q] * nf3.value(ge.norm());
                }
            }
            double grad_h_patch = 0.0, phi_h_15 = 0.0, phi_h_3 = 0.0, patch_area = 0.0;
            for (int kk : nbh.patches[k].neighbors) {
                const double akk = mesh.area(kk);
                const double gn = v.gradient(kk).norm();
                grad_h_patch += akk * gn;
                phi_h_15 += akk * nf15.value(gn);
                phi_h_3 += akk * nf3.value(gn);
                patch_area += akk;
            }
            double jump_l1 = 0.0;
            for (int kk : nbh.patches[k].neighbors) {
                for (int j = 0; j < 3; ++j) {
                    const int fi = mesh.element_faces[kk][j];
                    const Face& fc = mesh.faces[fi];
                    // faces touching the closure of K only
                    bool touches = false;
                    for (int t = 0; t < 3; ++t)
                        if (mesh.elements[k][t] == fc.a || mesh.elements[k][t] == fc.b)
                            touches = true;
                    if (!touches || fc.elem[0] != kk) continue; // count each face once
                    const Vec2 pa = mesh.vertices[fc.a], pb = mesh.vertices[fc.b];
                    for (std::size_t q = 0; q < erule.size(); ++q) {
                        const Vec2 x = pa + (pb - pa) * erule.points[q][1];
                        const Vec2 jump = fc.boundary
                                              ? v.value(fc.elem[0], x)
                                              : v.value(fc.elem[0], x) - v.value(fc.elem[1], x);
                        jump_l1 += erule.weights[q] * fc.length * jump.norm();
                    }
                }
            }
            const double tiny = 1e-14;
            if (grad_h_patch > tiny)
                rep.max_grad_ratio = std::max(rep.max_grad_ratio, grad_e_l1 / grad_h_patch);
            if (jump_l1 > tiny)
                rep.max_jump_ratio = std::max(rep.max_jump_ratio, dev_l1 / jump_l1);
            const double area_k = mesh.area(k);
            if (phi_h_15 > tiny)
                rep.max_phi_ratio_r15 = std::max(rep.max_phi_ratio_r15,
                                                 (phi_e_15 / area_k) / (phi_h_15 / patch_area));
            if (phi_h_3 > tiny)
                rep.max_phi_ratio_r3 =
                    std::max(rep.max_phi_ratio_r3, (phi_e_3 / area_k) / (phi_h_3 / patch_area));
        }
    }
    return rep;
}

} // namespace prstokes
