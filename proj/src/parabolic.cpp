#include "parec/parabolic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "parec/linsolve.hpp"
#include "parec/quadrature.hpp"

namespace parec::prob {

namespace {

constexpr double kBlowUpGuard = 1e100;

bool is_zero_expr(const expr::ExprFn& e) {
    const double origin[3] = {0.0, 0.0, 0.0};
    return e.is_constant() && e.eval(origin, 3, 0.0) == 0.0;
}

bool has_convection(const ProblemSpec& spec) {
    for (int i = 0; i < spec.dim; ++i)
        if (!is_zero_expr(spec.b[i])) return true;
    return false;
}

bool has_reaction(const ProblemSpec& spec) { return !is_zero_expr(spec.c); }

int error_degree(const fem::FESpace& s) {
    // 2p + 6 keeps squared errors of quartic manufactured solutions exact
    const int p = s.family == fem::Family::P1 ? 1 : 2;
    const int cap = s.dim() == 3 ? 13 : 14;
    return std::min(2 * p + 6, cap);
}

// spatial operator stiffness + convection + reaction at time t
lin::SparseMatrix spatial_operator(const ProblemSpec& spec, const fem::FESpace& space, double t) {
    lin::SparseMatrix op = fem::assemble_stiffness(space, spec.A, t);
    if (has_convection(spec)) {
        auto conv = fem::assemble_convection(space, spec.b, t);
        op = lin::scaled_sum({{1.0, &op}, {1.0, &conv}});
    }
    if (has_reaction(spec)) {
        auto react = fem::assemble_mass(space, &spec.c, t);
        op = lin::scaled_sum({{1.0, &op}, {1.0, &react}});
    }
    return op;
}

std::vector<double> dirichlet_values(const ProblemSpec& spec, const fem::FESpace& space,
                                     double t) {
    std::vector<double> vals(static_cast<std::size_t>(space.n_scalar), 0.0);
    for (int i = 0; i < space.n_scalar; ++i)
        vals[i] = spec.u_D.eval(space.dof_points[i].data(), spec.dim, t);
    return vals;
}

bool finite_field(const fem::DiscreteField& v) {
    for (double x : v.dofs)
        if (!std::isfinite(x) || std::fabs(x) > kBlowUpGuard) return false;
    return true;
}

}  // namespace

void validate(const ProblemSpec& spec, const mesh::SimplicialMesh& m) {
    if (spec.dim != m.dim) throw std::invalid_argument("problem and mesh dimension differ");
    if (spec.sigma <= 0.0) throw std::invalid_argument("sigma must be positive");
    if (spec.T <= 0.0) throw std::invalid_argument("final time must be positive");
    if (spec.C_F <= 0.0) throw std::invalid_argument("Friedrichs constant must be positive");
    if (spec.nu_lower_A <= 0.0) throw std::invalid_argument("ellipticity floor must be positive");
    if (spec.nu_upper_A < spec.nu_lower_A)
        throw std::invalid_argument("ellipticity bounds are inverted");

    // sample A and the reaction weight at vertices and centroids at a few times
    const double times[3] = {0.0, spec.T / 2.0, spec.T};
    const double tol = 1e-9 * std::max(1.0, spec.nu_upper_A);
    auto check_point = [&](const double* x) {
        for (double t : times) {
            const double lo = spec.A.min_eigenvalue(x, spec.dim, t);
            const double hi = spec.A.max_eigenvalue(x, spec.dim, t);
            if (lo < spec.nu_lower_A - tol || hi > spec.nu_upper_A + tol)
                throw std::invalid_argument("diffusion matrix leaves its ellipticity bounds");
            const double ds = spec.delta_sq.eval(x, spec.dim, t);
            if (ds < -1e-12 || ds + 1e-12 < spec.delta0)
                throw std::invalid_argument("reaction weight falls below its floor");
        }
    };
    for (const auto& v : m.vertices) check_point(v.data());
    for (int c = 0; c < m.n_cells(); ++c) {
        auto mid = m.cell_centroid(c);
        check_point(mid.data());
    }
}

TimeGrid TimeGrid::uniform(double T, int n_slabs) {
    if (n_slabs < 1 || T <= 0.0) throw std::invalid_argument("bad time grid request");
    TimeGrid g;
    g.t.resize(static_cast<std::size_t>(n_slabs) + 1);
    for (int k = 0; k <= n_slabs; ++k) g.t[k] = T * static_cast<double>(k) / n_slabs;
    g.t.back() = T;
    return g;
}

void TimeGrid::check() const {
    if (t.size() < 2 || t.front() != 0.0)
        throw std::invalid_argument("time grid must start at zero with at least one slab");
    for (std::size_t k = 1; k < t.size(); ++k)
        if (t[k] <= t[k - 1]) throw std::invalid_argument("time grid is not increasing");
}

fem::DiscreteField step_implicit(const ProblemSpec& spec, const fem::FESpace& space,
                                 const fem::DiscreteField& v_k, double t_k, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("step size must be positive");
    const double t1 = t_k + tau;

    auto mass = fem::assemble_mass(space);
    auto op = spatial_operator(spec, space, t1);
    auto sys = lin::scaled_sum({{spec.sigma / tau, &mass}, {1.0, &op}});

    auto rhs = fem::assemble_load(space, spec.f, t_k + tau / 2.0);
    auto mv = mass.mul(v_k.dofs);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += spec.sigma / tau * mv[i];

    auto mask = fem::boundary_scalar_dofs(space, spec.dirichlet_tags);
    sys.eliminate_dirichlet(mask, dirichlet_values(spec, space, t1), rhs);

    fem::DiscreteField v1 = fem::zero_field(space);
    v1.dofs = has_convection(spec) ? lin::solve_nonsym(sys, rhs) : lin::solve_spd(sys, rhs);
    return v1;
}

ExplicitStep step_explicit(const ProblemSpec& spec, const fem::FESpace& space,
                           const fem::DiscreteField& v_k, double t_k, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("step size must be positive");
    if (space.family != fem::Family::P1)
        throw std::invalid_argument("explicit stepping requires a degree-1 space");

    auto mass = fem::assemble_mass(space);
    std::vector<double> lump(static_cast<std::size_t>(space.n_dofs()), 0.0);
    mass.for_each([&](int i, int, double v) { lump[i] += v; });

    auto op = spatial_operator(spec, space, t_k);
    auto rhs = fem::assemble_load(space, spec.f, t_k);
    auto lv = op.mul(v_k.dofs);

    auto mask = fem::boundary_scalar_dofs(space, spec.dirichlet_tags);
    auto bc = dirichlet_values(spec, space, t_k + tau);

    ExplicitStep out;
    out.v = fem::zero_field(space);
    for (int i = 0; i < space.n_dofs(); ++i) {
        out.v.dofs[i] = mask[i] ? bc[i]
                                : v_k.dofs[i] + tau / (spec.sigma * lump[i]) * (rhs[i] - lv[i]);
    }
    out.blew_up = !finite_field(out.v);
    return out;
}

double explicit_stability_limit(const ProblemSpec& spec, const fem::FESpace& space) {
    auto mass = fem::assemble_mass(space);
    std::vector<double> lump(static_cast<std::size_t>(space.n_dofs()), 0.0);
    mass.for_each([&](int i, int, double v) { lump[i] += v; });
    auto op = spatial_operator(spec, space, 0.0);
    auto mask = fem::boundary_scalar_dofs(space, spec.dirichlet_tags);

    std::mt19937 rng(42);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> x(static_cast<std::size_t>(space.n_dofs()));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = mask[i] ? 0.0 : dist(rng);

    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
        auto y = op.mul(x);
        double norm = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] = mask[i] ? 0.0 : y[i] / lump[i];
            norm = std::max(norm, std::fabs(y[i]));
        }
        if (norm == 0.0) break;
        lambda = norm;
        for (std::size_t i = 0; i < y.size(); ++i) x[i] = y[i] / norm;
    }
    if (lambda == 0.0) throw std::runtime_error("stability estimate degenerated");
    return 2.0 * spec.sigma / lambda;
}

TimesteppingResult run_timestepping(const ProblemSpec& spec, const fem::FESpace& space,
                                    const TimeGrid& grid, bool explicit_scheme) {
    grid.check();
    TimesteppingResult out;
    out.v.space = &space;
    out.v.times.push_back(grid.t[0]);
    out.v.fields.push_back(fem::interpolate(spec.u_0, space, 0.0));

    for (int k = 0; k < grid.n_slabs(); ++k) {
        const auto& prev = out.v.fields.back();
        if (explicit_scheme) {
            auto step = step_explicit(spec, space, prev, grid.t[k], grid.tau(k));
            out.v.times.push_back(grid.t[k + 1]);
            out.v.fields.push_back(std::move(step.v));
            if (step.blew_up) {
                out.blew_up = true;
                out.blown_slab = k;
                break;
            }
        } else {
            out.v.times.push_back(grid.t[k + 1]);
            out.v.fields.push_back(step_implicit(spec, space, prev, grid.t[k], grid.tau(k)));
        }
    }
    return out;
}

// --- space-time --------------------------------------------------------------

mesh::SimplicialMesh make_spacetime_box(int spatial_dim, const mesh::Box& spatial_box, double T,
                                        const std::array<int, 3>& spatial_divisions,
                                        int time_divisions) {
    if (spatial_dim < 1 || spatial_dim > 2)
        throw std::invalid_argument("space-time meshes support 1 or 2 spatial dimensions");
    mesh::Box full = spatial_box;
    full.lo[spatial_dim] = 0.0;
    full.hi[spatial_dim] = T;
    std::array<int, 3> divisions = spatial_divisions;
    divisions[spatial_dim] = time_divisions;
    auto m = mesh::build_box_mesh(spatial_dim + 1, full, divisions);

    const double eps = 1e-9 * std::max(1.0, T);
    mesh::retag_boundary(m, [&](const std::array<double, 3>* verts, int n) -> std::string {
        bool all_zero = true, all_final = true;
        for (int i = 0; i < n; ++i) {
            if (std::fabs(verts[i][spatial_dim]) > eps) all_zero = false;
            if (std::fabs(verts[i][spatial_dim] - T) > eps) all_final = false;
        }
        if (all_zero) return kTagInitial;
        if (all_final) return kTagFinal;
        return kTagLateral;
    });
    return m;
}

double eval_st(const expr::ExprFn& e, const double* x, int spatial_dim) {
    return e.eval(x, spatial_dim, x[spatial_dim]);
}

fem::DiscreteField interpolate_spacetime(const expr::ExprFn& e, const fem::FESpace& space) {
    const int sd = space.dim() - 1;
    fem::DiscreteField u = fem::zero_field(space);
    for (int comp = 0; comp < space.components; ++comp)
        for (int i = 0; i < space.n_scalar; ++i)
            u.dofs[space.gdof(i, comp)] = eval_st(e, space.dof_points[i].data(), sd);
    return u;
}

fem::DiscreteField solve_spacetime(const ProblemSpec& spec, const mesh::SimplicialMesh& st_mesh) {
    const int D = st_mesh.dim;
    const int sd = D - 1;
    if (sd != spec.dim) throw std::invalid_argument("space-time mesh dimension mismatch");

    auto owned = std::make_shared<fem::FESpace>(fem::make_space(st_mesh, fem::Family::P1));
    const fem::FESpace& space = *owned;

    const fem::QuadRule& rule = fem::simplex_rule(D, 4);
    double dfact = 1.0;
    for (int k = 2; k <= D; ++k) dfact *= k;

    lin::SparseMatrix sys(space.n_dofs());
    std::vector<double> rhs(static_cast<std::size_t>(space.n_dofs()), 0.0);

    double acoef[3][3];
    double x[4];
    for (int cidx = 0; cidx < st_mesh.n_cells(); ++cidx) {
        const fem::CellGeom g = fem::cell_geometry(st_mesh, cidx);
        // Streamline parameter blending the advective scale h_t/(2*sigma) with
        // the diffusive limit h_x^2/(4*nu). The pure advective choice adds an
        // O(tau)*div(A grad u) consistency error that does not shrink relative
        // to v_t under refinement; the blend decays like h^2 once diffusion
        // dominates, so the time derivative keeps its full convergence order.
        double t_lo = g.vertex[0][sd], t_hi = g.vertex[0][sd];
        double hx = 0.0;
        for (int r = 0; r < sd; ++r) {
            double lo = g.vertex[0][r], hi = g.vertex[0][r];
            for (int i = 1; i <= D; ++i) {
                lo = std::min(lo, g.vertex[i][r]);
                hi = std::max(hi, g.vertex[i][r]);
            }
            hx = std::max(hx, hi - lo);
        }
        for (int i = 1; i <= D; ++i) {
            t_lo = std::min(t_lo, g.vertex[i][sd]);
            t_hi = std::max(t_hi, g.vertex[i][sd]);
        }
        const double ht = t_hi - t_lo;
        const double tau_c =
            ht > 0.0 ? 1.0 / (2.0 * spec.sigma / ht + 4.0 * spec.nu_upper_A / (hx * hx)) : 0.0;
        const int nloc = D + 1;
        std::vector<double> local(static_cast<std::size_t>(nloc) * nloc, 0.0);
        std::vector<double> local_rhs(static_cast<std::size_t>(nloc), 0.0);

        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double wq = rule.weights[q] * dfact * g.measure;
            const double* lambda = rule.points[q].data();
            double px[3] = {0, 0, 0};
            for (int i = 0; i <= D; ++i)
                for (int c2 = 0; c2 < 3; ++c2) px[c2] += lambda[i] * g.vertex[i][c2];
            for (int c2 = 0; c2 < 3; ++c2) x[c2] = px[c2];
            const double t = x[sd];

            spec.A.eval(x, sd, t, acoef);
            double bv[3] = {0, 0, 0};
            for (int r = 0; r < sd; ++r) bv[r] = spec.b[r].eval(x, sd, t);
            const double cval = spec.c.eval(x, sd, t);
            const double fval = spec.f.eval(x, sd, t);

            // P1 in space-time: basis value lambda_i, gradient grad_lambda_i
            for (int i = 0; i <= D; ++i) {
                const double* gi = g.grad_lambda[i].data();
                const double wtest = lambda[i] + tau_c * spec.sigma * gi[sd];
                for (int j = 0; j <= D; ++j) {
                    const double* gj = g.grad_lambda[j].data();
                    double diff = 0.0;
                    for (int r = 0; r < sd; ++r) {
                        double ag = 0.0;
                        for (int c2 = 0; c2 < sd; ++c2) ag += acoef[r][c2] * gj[c2];
                        diff += ag * gi[r];
                    }
                    double transport = spec.sigma * gj[sd] + cval * lambda[j];
                    for (int r = 0; r < sd; ++r) transport += bv[r] * gj[r];
                    local[static_cast<std::size_t>(i) * nloc + j] +=
                        wq * (diff + transport * wtest);
                }
                local_rhs[i] += wq * fval * wtest;
            }
        }
        for (int i = 0; i <= D; ++i) {
            const int gi2 = space.dof(cidx, i);
            for (int j = 0; j <= D; ++j)
                sys.add(gi2, space.dof(cidx, j), local[static_cast<std::size_t>(i) * nloc + j]);
            rhs[gi2] += local_rhs[i];
        }
    }
    sys.finalize();

    // Dirichlet: lateral data first, the initial face wins at shared corners
    auto mask_init = fem::boundary_scalar_dofs(space, {kTagInitial});
    auto mask_lat = fem::boundary_scalar_dofs(space, {kTagLateral});
    std::vector<char> mask(static_cast<std::size_t>(space.n_dofs()), 0);
    std::vector<double> bc(static_cast<std::size_t>(space.n_dofs()), 0.0);
    for (int i = 0; i < space.n_dofs(); ++i) {
        if (mask_lat[i]) {
            mask[i] = 1;
            bc[i] = eval_st(spec.u_D, space.dof_points[i].data(), sd);
        }
        if (mask_init[i]) {
            mask[i] = 1;
            bc[i] = spec.u_0.eval(space.dof_points[i].data(), sd, 0.0);
        }
    }
    sys.eliminate_dirichlet(mask, bc, rhs);

    fem::DiscreteField v;
    v.space = owned.get();
    v.owned_space = std::move(owned);
    v.dofs = lin::solve_nonsym(sys, rhs);
    return v;
}

// --- error measures ----------------------------------------------------------

namespace {

struct SlabQuadContext {
    const ProblemSpec* spec;
    const fem::FESpace* space;
    int degree;
};

// visit(cell, x, t, time_weight*space_weight, s, lambda, geom)
template <typename F>
void for_each_slab_qp(const fem::FESpace& space, double t0, double t1, int degree, F&& visit) {
    const auto& m = *space.msh;
    const int d = m.dim;
    const fem::QuadRule& rule = fem::simplex_rule(d, degree);
    const fem::GaussRule& time_rule = fem::gauss_rule(4);
    double dfact = 1.0;
    for (int k = 2; k <= d; ++k) dfact *= k;
    const double tau = t1 - t0;

    double x[3];
    for (int c = 0; c < m.n_cells(); ++c) {
        const fem::CellGeom g = fem::cell_geometry(m, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double wq = rule.weights[q] * dfact * g.measure;
            g.point(rule.points[q].data(), x);
            for (std::size_t ti = 0; ti < time_rule.x.size(); ++ti) {
                const double s = time_rule.x[ti];
                visit(c, x, t0 + s * tau, wq * time_rule.w[ti] * tau, s,
                      rule.points[q].data(), g);
            }
        }
    }
}

void require_exact(const ProblemSpec& spec) {
    if (!spec.has_exact) throw std::invalid_argument("error measure needs the exact solution");
}

}  // namespace

EnergyError energy_error(const ProblemSpec& spec, const FieldSequence& v,
                         const ErrorWeights& w) {
    require_exact(spec);
    const fem::FESpace& space = *v.space;
    const int d = spec.dim;
    const int degree = error_degree(space);

    EnergyError err;
    double acoef[3][3];
    for (int k = 0; k < v.n_slabs(); ++k) {
        const auto& v0 = v.fields[k];
        const auto& v1 = v.fields[k + 1];
        for_each_slab_qp(space, v.times[k], v.times[k + 1], degree,
                         [&](int c, const double* x, double t, double weight, double s,
                             const double* lambda, const fem::CellGeom& g) {
                             const double uex = spec.exact_u.eval(x, d, t);
                             const double vh = (1.0 - s) * fem::eval_scalar(v0, c, lambda) +
                                               s * fem::eval_scalar(v1, c, lambda);
                             double g0[3], g1[3], ge[3];
                             fem::eval_scalar_grad(v0, g, c, lambda, g0);
                             fem::eval_scalar_grad(v1, g, c, lambda, g1);
                             for (int r = 0; r < d; ++r)
                                 ge[r] = spec.exact_grad[r].eval(x, d, t) -
                                         ((1.0 - s) * g0[r] + s * g1[r]);
                             spec.A.eval(x, d, t, acoef);
                             double quad = 0.0;
                             for (int r = 0; r < d; ++r)
                                 for (int c2 = 0; c2 < d; ++c2)
                                     quad += ge[r] * acoef[r][c2] * ge[c2];
                             err.e_d += weight * quad;
                             const double e = uex - vh;
                             err.e_delta += weight * spec.delta_sq.eval(x, d, t) * e * e;
                         });
    }
    err.e_T = l2_difference(spec.exact_u, v.fields.back(), v.times.back(), degree);
    err.combined = w.nu * err.e_d + w.theta * err.e_delta + w.zeta * err.e_T;
    return err;
}

std::vector<double> per_cell_gradient_error(const ProblemSpec& spec, const FieldSequence& v) {
    require_exact(spec);
    const fem::FESpace& space = *v.space;
    const int d = spec.dim;
    std::vector<double> cells(static_cast<std::size_t>(space.msh->n_cells()), 0.0);
    double acoef[3][3];
    for (int k = 0; k < v.n_slabs(); ++k) {
        const auto& v0 = v.fields[k];
        const auto& v1 = v.fields[k + 1];
        for_each_slab_qp(space, v.times[k], v.times[k + 1], error_degree(space),
                         [&](int c, const double* x, double t, double weight, double s,
                             const double* lambda, const fem::CellGeom& g) {
                             double g0[3], g1[3], ge[3];
                             fem::eval_scalar_grad(v0, g, c, lambda, g0);
                             fem::eval_scalar_grad(v1, g, c, lambda, g1);
                             for (int r = 0; r < d; ++r)
                                 ge[r] = spec.exact_grad[r].eval(x, d, t) -
                                         ((1.0 - s) * g0[r] + s * g1[r]);
                             spec.A.eval(x, d, t, acoef);
                             double quad = 0.0;
                             for (int r = 0; r < d; ++r)
                                 for (int c2 = 0; c2 < d; ++c2)
                                     quad += ge[r] * acoef[r][c2] * ge[c2];
                             cells[c] += weight * quad;
                         });
    }
    return cells;
}

EnergyError energy_error_spacetime(const ProblemSpec& spec, const fem::DiscreteField& v,
                                   const ErrorWeights& w) {
    require_exact(spec);
    const fem::FESpace& space = *v.space;
    const auto& m = *space.msh;
    const int sd = spec.dim;
    const int degree = error_degree(space);
    const fem::QuadRule& rule = fem::simplex_rule(m.dim, degree);
    double dfact = 1.0;
    for (int k = 2; k <= m.dim; ++k) dfact *= k;

    EnergyError err;
    double acoef[3][3];
    double x[4];
    for (int c = 0; c < m.n_cells(); ++c) {
        const fem::CellGeom g = fem::cell_geometry(m, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double weight = rule.weights[q] * dfact * g.measure;
            g.point(rule.points[q].data(), x);
            const double t = x[sd];
            const double e = spec.exact_u.eval(x, sd, t) -
                             fem::eval_scalar(v, c, rule.points[q].data());
            double gv[3], ge[3];
            fem::eval_scalar_grad(v, g, c, rule.points[q].data(), gv);
            for (int r = 0; r < sd; ++r)
                ge[r] = spec.exact_grad[r].eval(x, sd, t) - gv[r];
            spec.A.eval(x, sd, t, acoef);
            double quad = 0.0;
            for (int r = 0; r < sd; ++r)
                for (int c2 = 0; c2 < sd; ++c2) quad += ge[r] * acoef[r][c2] * ge[c2];
            err.e_d += weight * quad;
            err.e_delta += weight * spec.delta_sq.eval(x, sd, t) * e * e;
        }
    }

    fem::for_each_boundary_qp(m, {kTagFinal}, degree, [&](const fem::BoundaryQuadPoint& qp) {
        const double e = spec.exact_u.eval(qp.x.data(), sd, spec.T) -
                         fem::eval_scalar(v, qp.cell, qp.lambda.data());
        err.e_T += qp.weight * e * e;
    });
    err.combined = w.nu * err.e_d + w.theta * err.e_delta + w.zeta * err.e_T;
    return err;
}

std::vector<double> per_cell_gradient_error_spacetime(const ProblemSpec& spec,
                                                      const fem::DiscreteField& v) {
    require_exact(spec);
    const fem::FESpace& space = *v.space;
    const auto& m = *space.msh;
    const int sd = spec.dim;
    const fem::QuadRule& rule = fem::simplex_rule(m.dim, error_degree(space));
    double dfact = 1.0;
    for (int k = 2; k <= m.dim; ++k) dfact *= k;

    std::vector<double> cells(static_cast<std::size_t>(m.n_cells()), 0.0);
    double acoef[3][3];
    double x[4];
    for (int c = 0; c < m.n_cells(); ++c) {
        const fem::CellGeom g = fem::cell_geometry(m, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double weight = rule.weights[q] * dfact * g.measure;
            g.point(rule.points[q].data(), x);
            const double t = x[sd];
            double gv[3], ge[3];
            fem::eval_scalar_grad(v, g, c, rule.points[q].data(), gv);
            for (int r = 0; r < sd; ++r)
                ge[r] = spec.exact_grad[r].eval(x, sd, t) - gv[r];
            spec.A.eval(x, sd, t, acoef);
            double quad = 0.0;
            for (int r = 0; r < sd; ++r)
                for (int c2 = 0; c2 < sd; ++c2) quad += ge[r] * acoef[r][c2] * ge[c2];
            cells[c] += weight * quad;
        }
    }
    return cells;
}

std::pair<double, double> error_identity_sides(const ProblemSpec& spec, const FieldSequence& v) {
    require_exact(spec);
    const fem::FESpace& space = *v.space;
    const int d = spec.dim;
    const int degree = error_degree(space);

    double lhs_grad = 0.0, lhs_delta = 0.0;
    double rhs_pairing = 0.0;
    double acoef[3][3];
    for (int k = 0; k < v.n_slabs(); ++k) {
        const auto& v0 = v.fields[k];
        const auto& v1 = v.fields[k + 1];
        const double tau = v.times[k + 1] - v.times[k];
        for_each_slab_qp(
            space, v.times[k], v.times[k + 1], degree,
            [&](int c, const double* x, double t, double weight, double s,
                const double* lambda, const fem::CellGeom& g) {
                const double uex = spec.exact_u.eval(x, d, t);
                const double vv0 = fem::eval_scalar(v0, c, lambda);
                const double vv1 = fem::eval_scalar(v1, c, lambda);
                const double vh = (1.0 - s) * vv0 + s * vv1;
                const double vt = (vv1 - vv0) / tau;
                double g0[3], g1[3], gv[3], ge[3];
                fem::eval_scalar_grad(v0, g, c, lambda, g0);
                fem::eval_scalar_grad(v1, g, c, lambda, g1);
                for (int r = 0; r < d; ++r) {
                    gv[r] = (1.0 - s) * g0[r] + s * g1[r];
                    ge[r] = spec.exact_grad[r].eval(x, d, t) - gv[r];
                }
                const double e = uex - vh;
                spec.A.eval(x, d, t, acoef);
                double a_ge_ge = 0.0, a_gv_ge = 0.0;
                for (int r = 0; r < d; ++r)
                    for (int c2 = 0; c2 < d; ++c2) {
                        a_ge_ge += ge[r] * acoef[r][c2] * ge[c2];
                        a_gv_ge += gv[c2] * acoef[c2][r] * ge[r];
                    }
                lhs_grad += weight * a_ge_ge;
                lhs_delta += weight * spec.delta_sq.eval(x, d, t) * e * e;

                double bgv = 0.0;
                for (int r = 0; r < d; ++r) bgv += spec.b[r].eval(x, d, t) * gv[r];
                const double resid = spec.f.eval(x, d, t) - spec.sigma * vt -
                                     spec.c.eval(x, d, t) * vh - bgv;
                rhs_pairing += weight * (resid * e) - weight * a_gv_ge;
            });
    }
    const double e_T = l2_difference(spec.exact_u, v.fields.back(), v.times.back(), degree);
    const double e_0 = l2_difference(spec.u_0, v.fields.front(), 0.0, degree);

    const double lhs = lhs_grad + lhs_delta + spec.sigma / 2.0 * e_T;
    const double rhs = spec.sigma / 2.0 * e_0 + rhs_pairing;
    return {lhs, rhs};
}

double l2_difference(const expr::ExprFn& gfn, const fem::DiscreteField& v, double t,
                     int degree) {
    const fem::FESpace& space = *v.space;
    const auto& m = *space.msh;
    const fem::QuadRule& rule = fem::simplex_rule(m.dim, degree);
    double dfact = 1.0;
    for (int k = 2; k <= m.dim; ++k) dfact *= k;

    double acc = 0.0;
    double x[3];
    for (int c = 0; c < m.n_cells(); ++c) {
        const fem::CellGeom g = fem::cell_geometry(m, c);
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const double weight = rule.weights[q] * dfact * g.measure;
            g.point(rule.points[q].data(), x);
            const double e = gfn.eval(x, m.dim, t) - fem::eval_scalar(v, c, rule.points[q].data());
            acc += weight * e * e;
        }
    }
    return acc;
}

}  // namespace parec::prob
