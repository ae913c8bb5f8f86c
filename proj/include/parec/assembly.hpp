// Matrix and vector assembly over FESpaces: the parabolic building blocks
// (stiffness, mass, convection, loads) and the flux-side blocks used by the
// error majorant (div-div matrix, weighted vector mass, and the right hand
// sides coupling a flux space to scalar fields).

#pragma once

#include <array>
#include <functional>

#include "parec/fem.hpp"
#include "parec/linsolve.hpp"

namespace parec::fem {

// Symmetric spatially varying coefficient matrix. Defaults to the identity.
class MatrixExpr {
public:
    MatrixExpr();
    static MatrixExpr identity();
    static MatrixExpr scalar(expr::ExprFn a);  // a(x,t) * I
    static MatrixExpr diag(expr::ExprFn a00, expr::ExprFn a11, expr::ExprFn a22);

    void set(int i, int j, expr::ExprFn a);  // sets (i,j) and (j,i)

    void eval(const double* x, int dim, double t, double out[3][3]) const;
    void eval_inverse(const double* x, int dim, double t, double out[3][3]) const;
    double min_eigenvalue(const double* x, int dim, double t) const;
    double max_eigenvalue(const double* x, int dim, double t) const;

private:
    std::array<std::array<expr::ExprFn, 3>, 3> a_;
};

// (A grad u, grad v); symmetric.
lin::SparseMatrix assemble_stiffness(const FESpace& s, const MatrixExpr& a, double t = 0.0);

// (w u, v); weight null means 1. Symmetric.
lin::SparseMatrix assemble_mass(const FESpace& s, const expr::ExprFn* weight = nullptr,
                                double t = 0.0);

// (b . grad u, v); not symmetric.
lin::SparseMatrix assemble_convection(const FESpace& s, const std::array<expr::ExprFn, 3>& b,
                                      double t = 0.0);

// (f, v) with a slightly elevated default quadrature for non-polynomial data.
std::vector<double> assemble_load(const FESpace& s, const expr::ExprFn& f, double t,
                                  int extra_degree = 2);

// (div y_i, div y_j) over all components of a vector space.
lin::SparseMatrix assemble_div_div(const FESpace& flux);

// (W y_i, y_j) with W = a or a^{-1}. On space-time meshes (components < mesh
// dimension) the coefficient takes t from the last coordinate; on spatial
// meshes it is evaluated at t_spatial.
lin::SparseMatrix assemble_vector_mass(const FESpace& flux, const MatrixExpr& a,
                                       bool invert_coefficient, double t_spatial = 0.0);

// Nodal time moment: F_i = integral over (t_k, t_k+tau) of f(x_i, t)(t - t_k) dt,
// evaluated with the fixed 4-point Gauss rule in time.
DiscreteField time_moment_F(const expr::ExprFn& f, const FESpace& scalar_space, double t_k,
                            double tau);

// z_j = (F + sigma * (v0 - v1) * tau / 2, div y_j); F, v0, v1 scalar fields.
std::vector<double> assemble_z(const FESpace& flux, const DiscreteField& f_moment,
                               const DiscreteField& v0, const DiscreteField& v1, double tau,
                               double sigma);

// g_j = (grad v1 + grad v0 / 2, y_j).
std::vector<double> assemble_g(const FESpace& flux, const DiscreteField& v0,
                               const DiscreteField& v1);

// Generic right hand sides against div y_j and y_j; the callbacks see the
// cell, physical point and barycentric coordinates of each quadrature point.
using ScalarPointFn = std::function<double(int cell, const double* x, const double* lambda)>;
using VectorPointFn =
    std::function<void(int cell, const double* x, const double* lambda, double* out)>;

std::vector<double> assemble_div_rhs(const FESpace& flux, const ScalarPointFn& q, int degree);
std::vector<double> assemble_vec_rhs(const FESpace& flux, const VectorPointFn& q, int degree);

}  // namespace parec::fem
