// Guaranteed a-posteriori error control for the parabolic problem. For any
// conforming approximation v and any flux field y, the weighted error norm is
// bounded by a computable functional of the two residuals
//
//   R_eq = f + div_x y - sigma v_t - c v - b . grad_x v,
//   R_d  = y - A grad_x v,
//
// plus the initial mismatch sigma ||v(0) - u_0||^2. The bound holds for every
// y, so the flux is a free optimization variable: minimizing the bound over a
// vector finite element space tightens it without ever invalidating it. Two
// optimizers are provided, one working slab by slab with linear-in-time
// reconstructions, one over a space-time mesh in a single sweep. Both
// alternate an exact flux solve with the closed-form optimal weight beta and
// only ever accept strictly improving iterates.

#pragma once

#include <utility>
#include <vector>

#include "parec/expr.hpp"
#include "parec/fem.hpp"
#include "parec/parabolic.hpp"

namespace parec::maj {

struct MajorantParams {
    double nu = 1.0;     // in (0, 2]; splits weight between the two residuals
    double gamma = 1.0;  // in [0.5, inf); weight of the mu-scaled reaction term
    expr::ExprFn mu;     // pointwise split of R_eq into [0,1]; default 0
    double beta = 1.0;   // initial weight of the flux/equation balance
    int max_rounds = 3;  // flux-solve / beta-update alternations
    double beta_lo = 1e-6;
    double beta_hi = 1e6;
    int flux_degree = 2;       // polynomial degree of the flux space
    double solver_tol = 1e-10; // relative tolerance of the flux solves

    MajorantParams();

    double alpha1() const { return (1.0 + beta) / nu; }
    double alpha2() const { return (1.0 + 1.0 / beta) / nu; }
    void check() const;  // throws std::invalid_argument outside the ranges
};

struct MajorantReport {
    double m_d = 0.0;          // ||R_d||^2 in the A^{-1} norm over Q
    double m_eq = 0.0;         // ||R_eq||^2 over Q
    double sigma0_term = 0.0;  // sigma ||v(0) - u_0||^2
    double total = 0.0;
    std::vector<double> per_cell_md;   // spatial element split of m_d
    std::vector<double> per_cell_meq;  // spatial element split of m_eq
    double beta_final = 1.0;
    // Honest totals of the accepted optimization rounds, strictly decreasing.
    std::vector<double> round_totals;
    // Set when a candidate round failed to improve and was discarded.
    bool warning_nonmonotone = false;
    // Filled by drivers that know the exact solution; NaN otherwise.
    double error_combined;
    double i_eff_sqrt;
    double i_eff_ratio;

    MajorantReport();
};

// --- residual quadrature -----------------------------------------------------

// One slab of the incremental scheme: scalar fields v0, v1 at the ends,
// flux fields y0, y1 on a vector space over the same mesh, both linear in
// time across (t_k, t_k + tau).
struct SlabSolution {
    const fem::DiscreteField* v0 = nullptr;
    const fem::DiscreteField* v1 = nullptr;
    const fem::DiscreteField* y0 = nullptr;
    const fem::DiscreteField* y1 = nullptr;
    double t_k = 0.0;
    double tau = 0.0;
};

// Per-cell integrals over the slab cylinder, elevated space rule and 4-point
// Gauss in time.
std::vector<double> residual_eq(const prob::ProblemSpec& spec, const SlabSolution& slab);
std::vector<double> residual_d(const prob::ProblemSpec& spec, const SlabSolution& slab);

// Space-time analogues: v scalar P1 on the mesh, y a spatial-vector field
// over the same mesh (div taken in x only, v_t from the t-component of the
// gradient).
std::vector<double> residual_eq_spacetime(const prob::ProblemSpec& spec,
                                          const fem::DiscreteField& v,
                                          const fem::DiscreteField& y);
std::vector<double> residual_d_spacetime(const prob::ProblemSpec& spec,
                                         const fem::DiscreteField& v,
                                         const fem::DiscreteField& y);

// --- the bound ---------------------------------------------------------------

// General three-term majorant over the whole cylinder:
//   total = sigma||v(0)-u_0||^2
//         + gamma ||(mu/delta) R_eq||^2 + alpha1 ||R_d||^2_{A^{-1}}
//         + alpha2 (C_F^2/nu_lower_A) ||(1-mu) R_eq||^2,
// which bounds (2-nu)||grad e||^2_A + (2-1/gamma)||delta e||^2 + sigma||e(T)||^2.
// mu > 0 anywhere requires delta_sq >= delta0 > 0 there (division guard).
// v and y are slab sequences sharing time breakpoints.
MajorantReport majorant_general(const prob::ProblemSpec& spec, const prob::FieldSequence& v,
                                const prob::FieldSequence& y, const MajorantParams& params);
MajorantReport majorant_general_spacetime(const prob::ProblemSpec& spec,
                                          const fem::DiscreteField& v,
                                          const fem::DiscreteField& y,
                                          const MajorantParams& params);

// Weights of the error norm the general majorant bounds, ready to feed the
// energy error measure: (2 - nu) on the flux part, (2 - 1/gamma) on the
// reaction part, sigma on the final trace.
prob::ErrorWeights bound_weights(const MajorantParams& params, double sigma);

// Minimizer of (1+b) m_d + (1+1/b) (C_F^2/nu_lower) m_eq over b, clamped.
double optimal_beta(double m_d, double m_eq, double C_F, double nu_lower_A, double beta_lo,
                    double beta_hi);

// sigma ||v(0) - u_0||^2 by elevated quadrature; the space-time variant
// integrates over the facets tagged "initial".
double initial_mismatch(const prob::ProblemSpec& spec, const fem::DiscreteField& v0);
double initial_mismatch_spacetime(const prob::ProblemSpec& spec, const fem::DiscreteField& v);

// --- flux optimization -------------------------------------------------------

struct SlabFluxResult {
    fem::DiscreteField y1;
    MajorantReport report;  // simplified two-term majorant of this slab,
                            // sigma0_term deliberately zero
};

// Algorithm: with y0 fixed from the previous slab, solve the linear
// stationarity system of the slab majorant for y1, re-evaluate the residuals
// honestly, update beta, and repeat while the total improves.
SlabFluxResult optimize_flux_slab(const prob::ProblemSpec& spec, const SlabSolution& slab,
                                  const MajorantParams& params);

// L^2 projection of A grad v into the flux space at time t; the slab driver
// seeds y(0) with it.
fem::DiscreteField project_flux(const prob::ProblemSpec& spec, const fem::DiscreteField& v,
                                const fem::FESpace& flux, double t);

struct SpacetimeFluxResult {
    fem::DiscreteField y;  // owns its space
    MajorantReport report;
};

// Space-time sweep: a single linear solve per round over the whole cylinder,
// sigma0_term included in the report total.
SpacetimeFluxResult optimize_flux_spacetime(const prob::ProblemSpec& spec,
                                            const fem::DiscreteField& v,
                                            const MajorantParams& params);

// --- the slab driver ----------------------------------------------------------

struct MajorantRun {
    prob::TimesteppingResult stepping;
    prob::FieldSequence y;  // flux breakpoints matching stepping.v
    std::vector<MajorantReport> slab_reports;
    double sigma0_term = 0.0;
    // accumulated[k] = sigma0 + sum of slab totals through slab k: the bound
    // for the cylinder truncated at t^{k+1}
    std::vector<double> accumulated_total;
    std::vector<double> per_cell_md;  // summed over slabs
    bool blew_up = false;
    int blown_slab = -1;
};

MajorantRun run_timestepping_with_majorant(const prob::ProblemSpec& spec,
                                           const fem::FESpace& space,
                                           const prob::TimeGrid& grid,
                                           const MajorantParams& params,
                                           bool explicit_scheme = false);

// (sqrt(M/e), M/e); {NaN, NaN} when the error is not positive.
std::pair<double, double> efficiency_index(double total_majorant, double error_combined);

}  // namespace parec::maj
