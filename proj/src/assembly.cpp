#include "parec/assembly.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

#include "parec/quadrature.hpp"

namespace parec::fem {

namespace {

double factorial(int n) {
    double acc = 1.0;
    for (int k = 2; k <= n; ++k) acc *= k;
    return acc;
}

// Basis values and barycentric-gradient coefficients tabulated at the points
// of one quadrature rule.
struct BasisTable {
    int nloc = 0;
    int stride = 0;
    std::vector<double> n;      // nq x nloc
    std::vector<double> coeff;  // nq x nloc x (dim+1)

    BasisTable(int dim, Family family, const QuadRule& rule) {
        nloc = basis_count(dim, family);
        stride = dim + 1;
        const std::size_t nq = rule.points.size();
        n.resize(nq * nloc);
        coeff.resize(nq * nloc * stride);
        for (std::size_t q = 0; q < nq; ++q) {
            eval_basis(dim, family, rule.points[q].data(), &n[q * nloc]);
            eval_basis_lambda_coeffs(dim, family, rule.points[q].data(),
                                     &coeff[q * nloc * stride]);
        }
    }

    const double* values(std::size_t q) const { return &n[q * nloc]; }
    const double* coeffs(std::size_t q, int k) const {
        return &coeff[(q * nloc + k) * stride];
    }
};

// physical gradient of basis function k at rule point q
void basis_grad(const BasisTable& tab, const CellGeom& g, std::size_t q, int k, double* out) {
    out[0] = out[1] = out[2] = 0.0;
    const double* c = tab.coeffs(q, k);
    for (int i = 0; i <= g.dim; ++i) {
        if (c[i] == 0.0) continue;
        for (int d = 0; d < g.dim; ++d) out[d] += c[i] * g.grad_lambda[i][d];
    }
}

int default_degree(const FESpace& s) {
    return 2 * (s.family == Family::P1 ? 1 : 2) + 2;
}

void invert_sym(int dim, const double in[3][3], double out[3][3]) {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out[i][j] = (i == j) ? 1.0 : 0.0;
    switch (dim) {
        case 1: {
            if (in[0][0] == 0.0) throw std::domain_error("coefficient matrix is singular");
            out[0][0] = 1.0 / in[0][0];
            return;
        }
        case 2: {
            double det = in[0][0] * in[1][1] - in[0][1] * in[1][0];
            if (det == 0.0) throw std::domain_error("coefficient matrix is singular");
            out[0][0] = in[1][1] / det;
            out[0][1] = -in[0][1] / det;
            out[1][0] = -in[1][0] / det;
            out[1][1] = in[0][0] / det;
            return;
        }
        default: {
            double det = in[0][0] * (in[1][1] * in[2][2] - in[1][2] * in[2][1]) -
                         in[0][1] * (in[1][0] * in[2][2] - in[1][2] * in[2][0]) +
                         in[0][2] * (in[1][0] * in[2][1] - in[1][1] * in[2][0]);
            if (det == 0.0) throw std::domain_error("coefficient matrix is singular");
            out[0][0] = (in[1][1] * in[2][2] - in[1][2] * in[2][1]) / det;
            out[0][1] = (in[0][2] * in[2][1] - in[0][1] * in[2][2]) / det;
            out[0][2] = (in[0][1] * in[1][2] - in[0][2] * in[1][1]) / det;
            out[1][0] = out[0][1];
            out[1][1] = (in[0][0] * in[2][2] - in[0][2] * in[2][0]) / det;
            out[1][2] = (in[0][2] * in[1][0] - in[0][0] * in[1][2]) / det;
            out[2][0] = out[0][2];
            out[2][1] = out[1][2];
            out[2][2] = (in[0][0] * in[1][1] - in[0][1] * in[1][0]) / det;
            return;
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// MatrixExpr

MatrixExpr::MatrixExpr() {
    for (int i = 0; i < 3; ++i) a_[i][i] = expr::ExprFn::constant(1.0);
}

MatrixExpr MatrixExpr::identity() { return MatrixExpr(); }

MatrixExpr MatrixExpr::scalar(expr::ExprFn a) {
    MatrixExpr m;
    for (int i = 0; i < 3; ++i) m.a_[i][i] = a;
    return m;
}

MatrixExpr MatrixExpr::diag(expr::ExprFn a00, expr::ExprFn a11, expr::ExprFn a22) {
    MatrixExpr m;
    m.a_[0][0] = std::move(a00);
    m.a_[1][1] = std::move(a11);
    m.a_[2][2] = std::move(a22);
    return m;
}

void MatrixExpr::set(int i, int j, expr::ExprFn a) {
    assert(i >= 0 && i < 3 && j >= 0 && j < 3);
    a_[i][j] = a;
    if (i != j) a_[j][i] = std::move(a);
}

void MatrixExpr::eval(const double* x, int dim, double t, double out[3][3]) const {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out[i][j] = (i == j) ? 1.0 : 0.0;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) out[i][j] = a_[i][j].eval(x, dim, t);
}

void MatrixExpr::eval_inverse(const double* x, int dim, double t, double out[3][3]) const {
    double m[3][3];
    eval(x, dim, t, m);
    invert_sym(dim, m, out);
}

namespace {

// eigenvalue extremum of a symmetric matrix already evaluated into m
double sym_eigen_extremum(double m[3][3], int dim, bool want_max) {
    switch (dim) {
        case 1:
            return m[0][0];
        case 2: {
            double tr = m[0][0] + m[1][1];
            double det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
            return want_max ? tr / 2.0 + disc : tr / 2.0 - disc;
        }
        default: {
            // Jacobi sweeps; a 3x3 symmetric matrix converges very quickly
            for (int sweep = 0; sweep < 12; ++sweep) {
                int p = 0, q = 1;
                double off = std::fabs(m[0][1]);
                if (std::fabs(m[0][2]) > off) {
                    off = std::fabs(m[0][2]);
                    p = 0;
                    q = 2;
                }
                if (std::fabs(m[1][2]) > off) {
                    off = std::fabs(m[1][2]);
                    p = 1;
                    q = 2;
                }
                if (off < 1e-14 * (std::fabs(m[0][0]) + std::fabs(m[1][1]) + std::fabs(m[2][2])))
                    break;
                double theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                double sign = theta >= 0.0 ? 1.0 : -1.0;
                double tt = sign / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(tt * tt + 1.0), s = tt * c;
                double mpp = m[p][p], mqq = m[q][q], mpq = m[p][q];
                m[p][p] = c * c * mpp - 2.0 * s * c * mpq + s * s * mqq;
                m[q][q] = s * s * mpp + 2.0 * s * c * mpq + c * c * mqq;
                m[p][q] = m[q][p] = 0.0;
                int r = 3 - p - q;
                double mrp = m[r][p], mrq = m[r][q];
                m[r][p] = m[p][r] = c * mrp - s * mrq;
                m[r][q] = m[q][r] = s * mrp + c * mrq;
            }
            if (want_max) return std::max(m[0][0], std::max(m[1][1], m[2][2]));
            return std::min(m[0][0], std::min(m[1][1], m[2][2]));
        }
    }
}

}  // namespace

double MatrixExpr::min_eigenvalue(const double* x, int dim, double t) const {
    double m[3][3];
    eval(x, dim, t, m);
    return sym_eigen_extremum(m, dim, false);
}

double MatrixExpr::max_eigenvalue(const double* x, int dim, double t) const {
    double m[3][3];
    eval(x, dim, t, m);
    return sym_eigen_extremum(m, dim, true);
}

// ---------------------------------------------------------------------------
// Scalar-space matrices

lin::SparseMatrix assemble_stiffness(const FESpace& s, const MatrixExpr& a, double t) {
    const auto& m = *s.msh;
    const int d = m.dim;
    const QuadRule& rule = simplex_rule(d, default_degree(s));
    const BasisTable tab(d, s.family, rule);
    const double dfact = factorial(d);

    lin::SparseMatrix mat(s.n_dofs());
    std::vector<double> grads(static_cast<std::size_t>(tab.nloc) * 3);
    double acoef[3][3];
    double x[3];

    for (int c = 0; c < m.n_cells(); ++c) {
        const CellGeom g = cell_geometry(m, c);
        std::vector<double> local(static_cast<std::size_t>(tab.nloc) * tab.nloc, 0.0);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double wq = rule.weights[q] * dfact * g.measure;
            g.point(rule.points[q].data(), x);
            a.eval(x, d, t, acoef);
            for (int k = 0; k < tab.nloc; ++k) basis_grad(tab, g, q, k, &grads[3 * k]);
            for (int i = 0; i < tab.nloc; ++i) {
                double agi[3] = {0, 0, 0};
                for (int r = 0; r < d; ++r)
                    for (int ccol = 0; ccol < d; ++ccol)
                        agi[r] += acoef[r][ccol] * grads[3 * i + ccol];
                for (int j = i; j < tab.nloc; ++j) {
                    double v = 0.0;
                    for (int r = 0; r < d; ++r) v += agi[r] * grads[3 * j + r];
                    local[static_cast<std::size_t>(i) * tab.nloc + j] += wq * v;
                }
            }
        }
        for (int i = 0; i < tab.nloc; ++i)
            for (int j = i; j < tab.nloc; ++j) {
                const double v = local[static_cast<std::size_t>(i) * tab.nloc + j];
                mat.add(s.dof(c, i), s.dof(c, j), v);
                if (j != i) mat.add(s.dof(c, j), s.dof(c, i), v);
            }
    }
    mat.finalize();
    return mat;
}

lin::SparseMatrix assemble_mass(const FESpace& s, const expr::ExprFn* weight, double t) {
    const auto& m = *s.msh;
    const int d = m.dim;
    const QuadRule& rule = simplex_rule(d, default_degree(s));
    const BasisTable tab(d, s.family, rule);
    const double dfact = factorial(d);

    lin::SparseMatrix mat(s.n_dofs());
    double x[3];
    for (int c = 0; c < m.n_cells(); ++c) {
        const CellGeom g = cell_geometry(m, c);
        std::vector<double> local(static_cast<std::size_t>(tab.nloc) * tab.nloc, 0.0);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            double wq = rule.weights[q] * dfact * g.measure;
            if (weight) {
                g.point(rule.points[q].data(), x);
                wq *= weight->eval(x, d, t);
            }
            const double* n = tab.values(q);
            for (int i = 0; i < tab.nloc; ++i)
                for (int j = i; j < tab.nloc; ++j)
                    local[static_cast<std::size_t>(i) * tab.nloc + j] += wq * n[i] * n[j];
        }
        for (int i = 0; i < tab.nloc; ++i)
            for (int j = i; j < tab.nloc; ++j) {
                const double v = local[static_cast<std::size_t>(i) * tab.nloc + j];
                mat.add(s.dof(c, i), s.dof(c, j), v);
                if (j != i) mat.add(s.dof(c, j), s.dof(c, i), v);
            }
    }
    mat.finalize();
    return mat;
}

lin::SparseMatrix assemble_convection(const FESpace& s, const std::array<expr::ExprFn, 3>& b,
                                      double t) {
    const auto& m = *s.msh;
    const int d = m.dim;
    const QuadRule& rule = simplex_rule(d, default_degree(s));
    const BasisTable tab(d, s.family, rule);
    const double dfact = factorial(d);

    lin::SparseMatrix mat(s.n_dofs());
    std::vector<double> grads(static_cast<std::size_t>(tab.nloc) * 3);
    double x[3];
    for (int c = 0; c < m.n_cells(); ++c) {
        const CellGeom g = cell_geometry(m, c);
        std::vector<double> local(static_cast<std::size_t>(tab.nloc) * tab.nloc, 0.0);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double wq = rule.weights[q] * dfact * g.measure;
            g.point(rule.points[q].data(), x);
            double bv[3] = {0, 0, 0};
            for (int r = 0; r < d; ++r) bv[r] = b[r].eval(x, d, t);
            for (int k = 0; k < tab.nloc; ++k) basis_grad(tab, g, q, k, &grads[3 * k]);
            const double* n = tab.values(q);
            for (int j = 0; j < tab.nloc; ++j) {
                double bg = 0.0;
                for (int r = 0; r < d; ++r) bg += bv[r] * grads[3 * j + r];
                for (int i = 0; i < tab.nloc; ++i)
                    local[static_cast<std::size_t>(i) * tab.nloc + j] += wq * n[i] * bg;
            }
        }
        for (int i = 0; i < tab.nloc; ++i)
            for (int j = 0; j < tab.nloc; ++j)
                mat.add(s.dof(c, i), s.dof(c, j),
                        local[static_cast<std::size_t>(i) * tab.nloc + j]);
    }
    mat.finalize();
    return mat;
}

std::vector<double> assemble_load(const FESpace& s, const expr::ExprFn& f, double t,
                                  int extra_degree) {
    const auto& m = *s.msh;
    const int d = m.dim;
    const QuadRule& rule = simplex_rule(d, default_degree(s) + extra_degree);
    const BasisTable tab(d, s.family, rule);
    const double dfact = factorial(d);

    std::vector<double> rhs(static_cast<std::size_t>(s.n_dofs()), 0.0);
    double x[3];
    for (int c = 0; c < m.n_cells(); ++c) {
        const CellGeom g = cell_geometry(m, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double wq = rule.weights[q] * dfact * g.measure;
            g.point(rule.points[q].data(), x);
            const double fv = f.eval(x, d, t);
            const double* n = tab.values(q);
            for (int k = 0; k < tab.nloc; ++k) rhs[s.dof(c, k)] += wq * fv * n[k];
        }
    }
    return rhs;
}

// ---------------------------------------------------------------------------
// Flux-space matrices

lin::SparseMatrix assemble_div_div(const FESpace& flux) {
    const auto& m = *flux.msh;
    const int d = m.dim;
    const int nc = flux.components;
    const QuadRule& rule = simplex_rule(d, default_degree(flux));
    const BasisTable tab(d, flux.family, rule);
    const double dfact = factorial(d);

    lin::SparseMatrix mat(flux.n_dofs());
    std::vector<double> grads(static_cast<std::size_t>(tab.nloc) * 3);
    const int nl = tab.nloc * nc;

    for (int c = 0; c < m.n_cells(); ++c) {
        const CellGeom g = cell_geometry(m, c);
        std::vector<double> local(static_cast<std::size_t>(nl) * nl, 0.0);
        std::vector<double> divk(static_cast<std::size_t>(nl));
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double wq = rule.weights[q] * dfact * g.measure;
            for (int k = 0; k < tab.nloc; ++k) basis_grad(tab, g, q, k, &grads[3 * k]);
            // div of basis k placed in component comp is d(N_k)/dx_comp
            for (int comp = 0; comp < nc; ++comp)
                for (int k = 0; k < tab.nloc; ++k)
                    divk[static_cast<std::size_t>(comp) * tab.nloc + k] = grads[3 * k + comp];
            for (int i = 0; i < nl; ++i)
                for (int j = i; j < nl; ++j)
                    local[static_cast<std::size_t>(i) * nl + j] += wq * divk[i] * divk[j];
        }
        for (int i = 0; i < nl; ++i) {
            const int gi = flux.gdof(flux.dof(c, i % tab.nloc), i / tab.nloc);
            for (int j = i; j < nl; ++j) {
                const int gj = flux.gdof(flux.dof(c, j % tab.nloc), j / tab.nloc);
                const double v = local[static_cast<std::size_t>(i) * nl + j];
                mat.add(gi, gj, v);
                if (j != i) mat.add(gj, gi, v);
            }
        }
    }
    mat.finalize();
    return mat;
}

lin::SparseMatrix assemble_vector_mass(const FESpace& flux, const MatrixExpr& a,
                                       bool invert_coefficient, double t_spatial) {
    const auto& m = *flux.msh;
    const int d = m.dim;
    const int nc = flux.components;
    const QuadRule& rule = simplex_rule(d, default_degree(flux));
    const BasisTable tab(d, flux.family, rule);
    const double dfact = factorial(d);

    lin::SparseMatrix mat(flux.n_dofs());
    const int nl = tab.nloc * nc;
    double w[3][3];
    double x[3];

    // On a space-time mesh the flux has one component per spatial axis and
    // the last mesh coordinate is time, so the coefficient is an nc-by-nc
    // spatial matrix evaluated at (x_spatial, t = last coordinate).
    const bool time_is_last = nc < d;

    for (int c = 0; c < m.n_cells(); ++c) {
        const CellGeom g = cell_geometry(m, c);
        std::vector<double> local(static_cast<std::size_t>(nl) * nl, 0.0);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double wq = rule.weights[q] * dfact * g.measure;
            g.point(rule.points[q].data(), x);
            const double tq = time_is_last ? x[nc] : t_spatial;
            if (invert_coefficient)
                a.eval_inverse(x, nc, tq, w);
            else
                a.eval(x, nc, tq, w);
            const double* n = tab.values(q);
            // basis (k, comp) has value n[k] in slot comp; the weighted dot is
            // W[ci][cj] * n_i * n_j
            for (int ci = 0; ci < nc; ++ci)
                for (int cj = 0; cj < nc; ++cj) {
                    const double wcc = w[ci][cj];
                    if (wcc == 0.0) continue;
                    for (int i = 0; i < tab.nloc; ++i)
                        for (int j = 0; j < tab.nloc; ++j) {
                            const int li = ci * tab.nloc + i;
                            const int lj = cj * tab.nloc + j;
                            if (lj < li) continue;
                            local[static_cast<std::size_t>(li) * nl + lj] +=
                                wq * wcc * n[i] * n[j];
                        }
                }
        }
        for (int i = 0; i < nl; ++i) {
            const int gi = flux.gdof(flux.dof(c, i % tab.nloc), i / tab.nloc);
            for (int j = i; j < nl; ++j) {
                const int gj = flux.gdof(flux.dof(c, j % tab.nloc), j / tab.nloc);
                const double v = local[static_cast<std::size_t>(i) * nl + j];
                mat.add(gi, gj, v);
                if (j != i) mat.add(gj, gi, v);
            }
        }
    }
    mat.finalize();
    return mat;
}

// ---------------------------------------------------------------------------
// Flux right hand sides

DiscreteField time_moment_F(const expr::ExprFn& f, const FESpace& scalar_space, double t_k,
                            double tau) {
    assert(scalar_space.components == 1);
    const GaussRule& gr = gauss_rule(4);
    DiscreteField out = zero_field(scalar_space);
    const int d = scalar_space.dim();
    for (int i = 0; i < scalar_space.n_scalar; ++i) {
        double acc = 0.0;
        for (std::size_t q = 0; q < gr.x.size(); ++q)
            acc += gr.w[q] * gr.x[q] *
                   f.eval(scalar_space.dof_points[i].data(), d, t_k + gr.x[q] * tau);
        out.dofs[i] = acc * tau * tau;
    }
    return out;
}

std::vector<double> assemble_div_rhs(const FESpace& flux, const ScalarPointFn& qfn, int degree) {
    const auto& m = *flux.msh;
    const int d = m.dim;
    const int nc = flux.components;
    const QuadRule& rule = simplex_rule(d, degree);
    const BasisTable tab(d, flux.family, rule);
    const double dfact = factorial(d);

    std::vector<double> rhs(static_cast<std::size_t>(flux.n_dofs()), 0.0);
    std::vector<double> grads(static_cast<std::size_t>(tab.nloc) * 3);
    double x[3];
    for (int c = 0; c < m.n_cells(); ++c) {
        const CellGeom g = cell_geometry(m, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double wq = rule.weights[q] * dfact * g.measure;
            g.point(rule.points[q].data(), x);
            const double qv = qfn(c, x, rule.points[q].data());
            if (qv == 0.0) continue;
            for (int k = 0; k < tab.nloc; ++k) basis_grad(tab, g, q, k, &grads[3 * k]);
            for (int comp = 0; comp < nc; ++comp)
                for (int k = 0; k < tab.nloc; ++k)
                    rhs[flux.gdof(flux.dof(c, k), comp)] += wq * qv * grads[3 * k + comp];
        }
    }
    return rhs;
}

std::vector<double> assemble_vec_rhs(const FESpace& flux, const VectorPointFn& qfn, int degree) {
    const auto& m = *flux.msh;
    const int d = m.dim;
    const int nc = flux.components;
    const QuadRule& rule = simplex_rule(d, degree);
    const BasisTable tab(d, flux.family, rule);
    const double dfact = factorial(d);

    std::vector<double> rhs(static_cast<std::size_t>(flux.n_dofs()), 0.0);
    double x[3];
    double vec[3];
    for (int c = 0; c < m.n_cells(); ++c) {
        const CellGeom g = cell_geometry(m, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double wq = rule.weights[q] * dfact * g.measure;
            g.point(rule.points[q].data(), x);
            vec[0] = vec[1] = vec[2] = 0.0;
            qfn(c, x, rule.points[q].data(), vec);
            const double* n = tab.values(q);
            for (int comp = 0; comp < nc; ++comp) {
                if (vec[comp] == 0.0) continue;
                for (int k = 0; k < tab.nloc; ++k)
                    rhs[flux.gdof(flux.dof(c, k), comp)] += wq * vec[comp] * n[k];
            }
        }
    }
    return rhs;
}

std::vector<double> assemble_z(const FESpace& flux, const DiscreteField& f_moment,
                               const DiscreteField& v0, const DiscreteField& v1, double tau,
                               double sigma) {
    const double half_tau_sigma = sigma * tau / 2.0;
    return assemble_div_rhs(
        flux,
        [&](int cell, const double*, const double* lambda) {
            const double fm = eval_scalar(f_moment, cell, lambda);
            const double dv = eval_scalar(v0, cell, lambda) - eval_scalar(v1, cell, lambda);
            return fm + half_tau_sigma * dv;
        },
        default_degree(flux));
}

std::vector<double> assemble_g(const FESpace& flux, const DiscreteField& v0,
                               const DiscreteField& v1) {
    return assemble_vec_rhs(
        flux,
        [&](int cell, const double*, const double* lambda, double* out) {
            const CellGeom g = cell_geometry(*flux.msh, cell);
            double g0[3], g1[3];
            eval_scalar_grad(v0, g, cell, lambda, g0);
            eval_scalar_grad(v1, g, cell, lambda, g1);
            for (int c = 0; c < 3; ++c) out[c] = g1[c] + 0.5 * g0[c];
        },
        default_degree(flux));
}

}  // namespace parec::fem
