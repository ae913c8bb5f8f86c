#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "parec/fem.hpp"
#include "parec/quadrature.hpp"

namespace parec::fem {

namespace {

std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

// Local edge numbering shared by P2 dof layout and basis evaluation:
// pairs (i,j), i<j, in lexicographic order after the d+1 vertices.
constexpr int kEdgePairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};

int edge_count(int dim) { return dim * (dim + 1) / 2; }

// enumerate the local edges actually present in dimension `dim`
void local_edges(int dim, int out[6][2], int& n) {
    n = 0;
    for (int e = 0; e < 6; ++e) {
        if (kEdgePairs[e][0] <= dim && kEdgePairs[e][1] <= dim) {
            out[n][0] = kEdgePairs[e][0];
            out[n][1] = kEdgePairs[e][1];
            ++n;
        }
    }
    assert(n == edge_count(dim));
}

}  // namespace

int basis_count(int dim, Family family) {
    return family == Family::P1 ? dim + 1 : dim + 1 + edge_count(dim);
}

FESpace make_space(const mesh::SimplicialMesh& m, Family family, int components) {
    if (components < 1 || components > 3)
        throw std::invalid_argument("make_space: components must be 1..3");
    FESpace s;
    s.msh = &m;
    s.family = family;
    s.components = components;
    s.nloc = basis_count(m.dim, family);
    s.cell_dofs.resize(static_cast<std::size_t>(m.n_cells()) * s.nloc);

    if (family == Family::P1) {
        s.n_scalar = m.n_vertices();
        s.dof_points = m.vertices;
        for (int c = 0; c < m.n_cells(); ++c)
            for (int i = 0; i <= m.dim; ++i)
                s.cell_dofs[static_cast<std::size_t>(c) * s.nloc + i] = m.cells[c][i];
        return s;
    }

    // P2: vertex dofs first, then one dof per geometric edge
    s.dof_points = m.vertices;
    std::unordered_map<std::uint64_t, int> edge_ids;
    int pairs[6][2];
    int n_pairs = 0;
    local_edges(m.dim, pairs, n_pairs);

    for (int c = 0; c < m.n_cells(); ++c) {
        for (int i = 0; i <= m.dim; ++i)
            s.cell_dofs[static_cast<std::size_t>(c) * s.nloc + i] = m.cells[c][i];
        for (int e = 0; e < n_pairs; ++e) {
            int a = m.cells[c][pairs[e][0]];
            int b = m.cells[c][pairs[e][1]];
            auto [it, fresh] = edge_ids.try_emplace(edge_key(a, b), 0);
            if (fresh) {
                it->second = m.n_vertices() + static_cast<int>(edge_ids.size()) - 1;
                const auto& pa = m.vertices[a];
                const auto& pb = m.vertices[b];
                s.dof_points.push_back({(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0,
                                        (pa[2] + pb[2]) / 2.0});
            }
            s.cell_dofs[static_cast<std::size_t>(c) * s.nloc + m.dim + 1 + e] = it->second;
        }
    }
    s.n_scalar = static_cast<int>(s.dof_points.size());
    return s;
}

std::vector<char> boundary_scalar_dofs(const FESpace& s, const std::set<std::string>& tags) {
    const auto& m = *s.msh;
    std::vector<char> mask(static_cast<std::size_t>(s.n_scalar), 0);

    std::unordered_map<std::uint64_t, int> edge_ids;
    if (s.family == Family::P2) {
        // rebuild the edge ids exactly as make_space assigned them
        int pairs[6][2];
        int n_pairs = 0;
        local_edges(m.dim, pairs, n_pairs);
        for (int c = 0; c < m.n_cells(); ++c)
            for (int e = 0; e < n_pairs; ++e) {
                int dof = s.dof(c, m.dim + 1 + e);
                edge_ids.try_emplace(edge_key(m.cells[c][pairs[e][0]], m.cells[c][pairs[e][1]]),
                                     dof);
            }
    }

    for (const auto& f : m.boundary) {
        if (!tags.count(f.tag)) continue;
        for (int i = 0; i < m.dim; ++i) mask[f.v[i]] = 1;
        if (s.family == Family::P2 && m.dim >= 2) {
            for (int i = 0; i < m.dim; ++i)
                for (int j = i + 1; j < m.dim; ++j) {
                    auto it = edge_ids.find(edge_key(f.v[i], f.v[j]));
                    if (it != edge_ids.end()) mask[it->second] = 1;
                }
        }
    }
    return mask;
}

CellGeom cell_geometry(const mesh::SimplicialMesh& m, int cell) {
    CellGeom g;
    g.dim = m.dim;
    for (int i = 0; i <= m.dim; ++i) g.vertex[i] = m.vertices[m.cells[cell][i]];

    // J columns are edge vectors p_i - p_0; grad lambda_i are rows of J^{-1}
    double j[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int i = 1; i <= m.dim; ++i)
        for (int c = 0; c < m.dim; ++c) j[c][i - 1] = g.vertex[i][c] - g.vertex[0][c];

    double det = 0.0;
    double inv[3][3] = {{0}};
    switch (m.dim) {
        case 1:
            det = j[0][0];
            inv[0][0] = 1.0 / det;
            break;
        case 2:
            det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            inv[0][0] = j[1][1] / det;
            inv[0][1] = -j[0][1] / det;
            inv[1][0] = -j[1][0] / det;
            inv[1][1] = j[0][0] / det;
            break;
        default:
            det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) -
                  j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0]) +
                  j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
            inv[0][0] = (j[1][1] * j[2][2] - j[1][2] * j[2][1]) / det;
            inv[0][1] = (j[0][2] * j[2][1] - j[0][1] * j[2][2]) / det;
            inv[0][2] = (j[0][1] * j[1][2] - j[0][2] * j[1][1]) / det;
            inv[1][0] = (j[1][2] * j[2][0] - j[1][0] * j[2][2]) / det;
            inv[1][1] = (j[0][0] * j[2][2] - j[0][2] * j[2][0]) / det;
            inv[1][2] = (j[0][2] * j[1][0] - j[0][0] * j[1][2]) / det;
            inv[2][0] = (j[1][0] * j[2][1] - j[1][1] * j[2][0]) / det;
            inv[2][1] = (j[0][1] * j[2][0] - j[0][0] * j[2][1]) / det;
            inv[2][2] = (j[0][0] * j[1][1] - j[0][1] * j[1][0]) / det;
            break;
    }

    double fact = 1.0;
    for (int k = 2; k <= m.dim; ++k) fact *= k;
    g.measure = std::fabs(det) / fact;

    for (int i = 1; i <= m.dim; ++i)
        for (int c = 0; c < m.dim; ++c) g.grad_lambda[i][c] = inv[i - 1][c];
    for (int c = 0; c < m.dim; ++c) {
        double acc = 0.0;
        for (int i = 1; i <= m.dim; ++i) acc += g.grad_lambda[i][c];
        g.grad_lambda[0][c] = -acc;
    }
    return g;
}

void eval_basis(int dim, Family family, const double* lambda, double* n_out) {
    for (int i = 0; i <= dim; ++i) n_out[i] = lambda[i];
    if (family == Family::P1) return;
    for (int i = 0; i <= dim; ++i) n_out[i] = lambda[i] * (2.0 * lambda[i] - 1.0);
    int pairs[6][2];
    int n_pairs = 0;
    local_edges(dim, pairs, n_pairs);
    for (int e = 0; e < n_pairs; ++e)
        n_out[dim + 1 + e] = 4.0 * lambda[pairs[e][0]] * lambda[pairs[e][1]];
}

void eval_basis_lambda_coeffs(int dim, Family family, const double* lambda, double* coeff_out) {
    const int nloc = basis_count(dim, family);
    const int stride = dim + 1;
    for (int k = 0; k < nloc * stride; ++k) coeff_out[k] = 0.0;

    if (family == Family::P1) {
        for (int i = 0; i <= dim; ++i) coeff_out[i * stride + i] = 1.0;
        return;
    }
    for (int i = 0; i <= dim; ++i) coeff_out[i * stride + i] = 4.0 * lambda[i] - 1.0;
    int pairs[6][2];
    int n_pairs = 0;
    local_edges(dim, pairs, n_pairs);
    for (int e = 0; e < n_pairs; ++e) {
        const int a = pairs[e][0], b = pairs[e][1];
        coeff_out[(dim + 1 + e) * stride + a] = 4.0 * lambda[b];
        coeff_out[(dim + 1 + e) * stride + b] = 4.0 * lambda[a];
    }
}

DiscreteField zero_field(const FESpace& s) {
    DiscreteField f;
    f.space = &s;
    f.dofs.assign(static_cast<std::size_t>(s.n_dofs()), 0.0);
    return f;
}

DiscreteField interpolate(const expr::ExprFn& f, const FESpace& s, double t) {
    return interpolate_vector(&f, s, t);
}

DiscreteField interpolate_vector(const expr::ExprFn* f_comp, const FESpace& s, double t) {
    DiscreteField u = zero_field(s);
    const int d = s.dim();
    for (int comp = 0; comp < s.components; ++comp)
        for (int i = 0; i < s.n_scalar; ++i)
            u.dofs[s.gdof(i, comp)] = f_comp[comp].eval(s.dof_points[i].data(), d, t);
    return u;
}

double eval_scalar(const DiscreteField& u, int cell, const double* lambda) {
    const FESpace& s = *u.space;
    double n[10];
    eval_basis(s.dim(), s.family, lambda, n);
    double acc = 0.0;
    for (int k = 0; k < s.nloc; ++k) acc += u.dofs[s.dof(cell, k)] * n[k];
    return acc;
}

void eval_vector(const DiscreteField& u, int cell, const double* lambda, double* out) {
    const FESpace& s = *u.space;
    double n[10];
    eval_basis(s.dim(), s.family, lambda, n);
    for (int comp = 0; comp < s.components; ++comp) {
        double acc = 0.0;
        for (int k = 0; k < s.nloc; ++k) acc += u.dofs[s.gdof(s.dof(cell, k), comp)] * n[k];
        out[comp] = acc;
    }
}

void eval_scalar_grad(const DiscreteField& u, const CellGeom& g, int cell, const double* lambda,
                      double* grad_out) {
    const FESpace& s = *u.space;
    const int d = s.dim();
    const int stride = d + 1;
    double coeff[10 * 4];
    eval_basis_lambda_coeffs(d, s.family, lambda, coeff);
    for (int c = 0; c < 3; ++c) grad_out[c] = 0.0;
    for (int k = 0; k < s.nloc; ++k) {
        const double w = u.dofs[s.dof(cell, k)];
        if (w == 0.0) continue;
        for (int i = 0; i <= d; ++i) {
            const double ci = coeff[k * stride + i];
            if (ci == 0.0) continue;
            for (int c = 0; c < d; ++c) grad_out[c] += w * ci * g.grad_lambda[i][c];
        }
    }
}

double eval_vector_div(const DiscreteField& u, const CellGeom& g, int cell, const double* lambda,
                       int n_div_components) {
    const FESpace& s = *u.space;
    const int d = s.dim();
    const int stride = d + 1;
    double coeff[10 * 4];
    eval_basis_lambda_coeffs(d, s.family, lambda, coeff);
    double acc = 0.0;
    for (int comp = 0; comp < n_div_components; ++comp)
        for (int k = 0; k < s.nloc; ++k) {
            const double w = u.dofs[s.gdof(s.dof(cell, k), comp)];
            if (w == 0.0) continue;
            for (int i = 0; i <= d; ++i)
                acc += w * coeff[k * stride + i] * g.grad_lambda[i][comp];
        }
    return acc;
}

void for_each_boundary_qp(const mesh::SimplicialMesh& m, const std::set<std::string>& tags,
                          int degree, const std::function<void(const BoundaryQuadPoint&)>& fn) {
    const int d = m.dim;

    // facet key (sorted vertices) -> owning cell
    auto key_of = [d](const int* v) {
        std::array<int, 3> k{-1, -1, -1};
        for (int i = 0; i < d; ++i) k[i] = v[i];
        std::sort(k.begin(), k.begin() + d);
        return k;
    };
    std::map<std::array<int, 3>, int> owner;
    std::array<int, 3> fv{};
    for (int c = 0; c < m.n_cells(); ++c)
        for (int skip = 0; skip <= d; ++skip) {
            int n = 0;
            for (int i = 0; i <= d; ++i)
                if (i != skip) fv[n++] = m.cells[c][i];
            owner.emplace(key_of(fv.data()), c);
        }

    for (const auto& facet : m.boundary) {
        if (!tags.count(facet.tag)) continue;
        auto it = owner.find(key_of(facet.v.data()));
        if (it == owner.end()) throw mesh::MeshError("boundary facet has no owning cell");
        const int cell = it->second;

        // local slot of each facet vertex within the owning cell
        std::array<int, 3> slot{};
        for (int i = 0; i < d; ++i) {
            slot[i] = -1;
            for (int j = 0; j <= d; ++j)
                if (m.cells[cell][j] == facet.v[i]) slot[i] = j;
            if (slot[i] < 0) throw mesh::MeshError("boundary facet vertex not in owning cell");
        }

        // measure of the facet as a (d-1)-simplex embedded in d dimensions
        double measure = 1.0;
        if (d >= 2) {
            double e[2][3];
            for (int i = 1; i < d; ++i)
                for (int c2 = 0; c2 < 3; ++c2)
                    e[i - 1][c2] = m.vertices[facet.v[i]][c2] - m.vertices[facet.v[0]][c2];
            if (d == 2) {
                measure = std::sqrt(e[0][0] * e[0][0] + e[0][1] * e[0][1] + e[0][2] * e[0][2]);
            } else {
                double g00 = 0, g01 = 0, g11 = 0;
                for (int c2 = 0; c2 < 3; ++c2) {
                    g00 += e[0][c2] * e[0][c2];
                    g01 += e[0][c2] * e[1][c2];
                    g11 += e[1][c2] * e[1][c2];
                }
                measure = std::sqrt(std::max(0.0, g00 * g11 - g01 * g01)) / 2.0;
            }
        }

        BoundaryQuadPoint qp;
        qp.cell = cell;
        if (d == 1) {
            qp.lambda = {0, 0, 0, 0};
            qp.lambda[slot[0]] = 1.0;
            qp.x = m.vertices[facet.v[0]];
            qp.weight = 1.0;
            fn(qp);
            continue;
        }

        const QuadRule& rule = simplex_rule(d - 1, degree);
        double facet_fact = 1.0;
        for (int k = 2; k <= d - 1; ++k) facet_fact *= k;
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            qp.lambda = {0, 0, 0, 0};
            qp.x = {0, 0, 0};
            for (int i = 0; i < d; ++i) {
                const double mu = rule.points[q][i];
                qp.lambda[slot[i]] = mu;
                for (int c2 = 0; c2 < 3; ++c2) qp.x[c2] += mu * m.vertices[facet.v[i]][c2];
            }
            qp.weight = rule.weights[q] * facet_fact * measure;
            fn(qp);
        }
    }
}

void barycentric(const CellGeom& g, const double* x, double* lambda_out) {
    // lambda_i(x) = lambda_i(p0) + grad_lambda_i . (x - p0); affine, so
    // evaluating the gradient form directly is exact
    double acc0 = 1.0;
    for (int i = 1; i <= g.dim; ++i) {
        double v = 0.0;
        for (int c = 0; c < g.dim; ++c) v += g.grad_lambda[i][c] * (x[c] - g.vertex[0][c]);
        lambda_out[i] = v;
        acc0 -= v;
    }
    lambda_out[0] = acc0;
}

}  // namespace parec::fem
