// The parabolic initial-boundary value problem
//
//   sigma u_t - div_x(A grad_x u) + b . grad_x u + c u = f   in Omega x (0,T)
//   u = u_D on the Dirichlet boundary, u = u_0 at t = 0
//
// together with its two approximation engines: incremental backward-Euler /
// forward-Euler time stepping on a spatial mesh, and a stabilized Galerkin
// solve on a space-time mesh where t is the last mesh coordinate. Error
// measures are weighted combinations of the gradient, reaction and terminal
// terms so every consumer (tables, bound checks) can pick its convention.

#pragma once

#include <array>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "parec/assembly.hpp"
#include "parec/expr.hpp"
#include "parec/fem.hpp"
#include "parec/mesh.hpp"

namespace parec::prob {

struct ProblemSpec {
    int dim = 2;  // spatial dimension
    double sigma = 1.0;
    fem::MatrixExpr A;
    std::array<expr::ExprFn, 3> b{};
    expr::ExprFn c;
    // c - (div b)/2 in closed form; the reaction weight of the error norm.
    // Supplied explicitly so no symbolic differentiation of b is needed.
    expr::ExprFn delta_sq;
    double delta0 = 0.0;  // positive floor required by the weighted residual split
    expr::ExprFn f;
    expr::ExprFn u_D;
    expr::ExprFn u_0;
    double T = 1.0;
    double C_F = 1.0;         // Friedrichs constant of the domain
    double nu_lower_A = 1.0;  // ellipticity bounds of A
    double nu_upper_A = 1.0;
    bool has_exact = false;
    expr::ExprFn exact_u;
    std::array<expr::ExprFn, 3> exact_grad{};
    std::set<std::string> dirichlet_tags{"dirichlet"};
};

// Sanity-checks the coefficient data against a mesh: ellipticity bounds hold
// at sampled points, the reaction weight respects its floor, and the scalar
// parameters are positive. Throws std::invalid_argument on violation.
void validate(const ProblemSpec& spec, const mesh::SimplicialMesh& m);

struct TimeGrid {
    std::vector<double> t;  // breakpoints 0 = t[0] < ... < t[K] = T

    static TimeGrid uniform(double T, int n_slabs);
    int n_slabs() const { return static_cast<int>(t.size()) - 1; }
    double tau(int k) const { return t[k + 1] - t[k]; }
    void check() const;  // throws std::invalid_argument when not increasing
};

// Fields at consecutive breakpoints over one space, understood as linear in
// time on every slab. Used for both the scalar solution and the flux.
struct FieldSequence {
    const fem::FESpace* space = nullptr;
    std::vector<double> times;
    std::vector<fem::DiscreteField> fields;

    int n_slabs() const { return static_cast<int>(times.size()) - 1; }
};

// One backward-Euler step: (sigma/tau) M (v1 - v0) + L v1 = load(t_mid),
// with Dirichlet elimination at the new time level.
fem::DiscreteField step_implicit(const ProblemSpec& spec, const fem::FESpace& space,
                                 const fem::DiscreteField& v_k, double t_k, double tau);

struct ExplicitStep {
    fem::DiscreteField v;
    bool blew_up = false;  // non-finite values or magnitudes beyond 1e100
};

// One forward-Euler step with row-sum lumped mass; degree-1 spaces only.
ExplicitStep step_explicit(const ProblemSpec& spec, const fem::FESpace& space,
                           const fem::DiscreteField& v_k, double t_k, double tau);

// Largest stable forward-Euler step, estimated by power iteration on the
// lumped-mass-preconditioned spatial operator restricted to free dofs.
double explicit_stability_limit(const ProblemSpec& spec, const fem::FESpace& space);

struct TimesteppingResult {
    FieldSequence v;
    bool blew_up = false;
    int blown_slab = -1;  // first slab whose step blew up
};

// Runs the grid start to finish. Explicit runs stop early on blow-up; the
// sequence then ends at the last finite field.
TimesteppingResult run_timestepping(const ProblemSpec& spec, const fem::FESpace& space,
                                    const TimeGrid& grid, bool explicit_scheme = false);

// --- space-time discretization --------------------------------------------

inline constexpr const char* kTagInitial = "initial";  // t = 0 face
inline constexpr const char* kTagFinal = "final";      // t = T face
inline constexpr const char* kTagLateral = "lateral";  // spatial boundary

// Box mesh over spatial_box x (0,T) with the boundary tagged as above.
mesh::SimplicialMesh make_spacetime_box(int spatial_dim, const mesh::Box& spatial_box, double T,
                                        const std::array<int, 3>& spatial_divisions,
                                        int time_divisions);

// Evaluates an expression at a space-time mesh point: leading coordinates are
// spatial, the last one feeds the t variable.
double eval_st(const expr::ExprFn& e, const double* x, int spatial_dim);

fem::DiscreteField interpolate_spacetime(const expr::ExprFn& e, const fem::FESpace& space);

// Stabilized P1 Galerkin solve on the space-time mesh; Dirichlet data on the
// initial and lateral faces, the final face left free.
fem::DiscreteField solve_spacetime(const ProblemSpec& spec, const mesh::SimplicialMesh& st_mesh);

// --- error measures ---------------------------------------------------------

struct ErrorWeights {
    double nu = 1.0;    // gradient term
    double theta = 1.0; // reaction term
    double zeta = 1.0;  // terminal term
};

struct EnergyError {
    double e_d = 0.0;      // |grad_x e|^2 weighted by A, over the cylinder
    double e_delta = 0.0;  // |e|^2 weighted by the reaction coefficient
    double e_T = 0.0;      // |e(T)|^2 over the spatial domain
    double combined = 0.0; // nu*e_d + theta*e_delta + zeta*e_T
};

EnergyError energy_error(const ProblemSpec& spec, const FieldSequence& v, const ErrorWeights& w);
EnergyError energy_error_spacetime(const ProblemSpec& spec, const fem::DiscreteField& v,
                                   const ErrorWeights& w);

// Per-cell contribution of e_d over the whole run (summed across slabs);
// feeds refinement statistics.
std::vector<double> per_cell_gradient_error(const ProblemSpec& spec, const FieldSequence& v);
std::vector<double> per_cell_gradient_error_spacetime(const ProblemSpec& spec,
                                                      const fem::DiscreteField& v);

// Both sides of the integral identity the exact solution satisfies:
//   |grad_x e|^2_A + |delta e|^2 + (sigma/2)|e(T)|^2
//     = (sigma/2)|e(0)|^2 + (f - sigma v_t - c v - b.grad v, e) - (A grad v, grad e).
// Agreement of the two values is a strong consistency check of the whole
// quadrature and evaluation stack.
std::pair<double, double> error_identity_sides(const ProblemSpec& spec, const FieldSequence& v);

// Integral of (g(., t) - v)^2 over the spatial mesh of v.
double l2_difference(const expr::ExprFn& g, const fem::DiscreteField& v, double t, int degree);

}  // namespace parec::prob
