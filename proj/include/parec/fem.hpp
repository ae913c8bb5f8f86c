// Lagrange finite element spaces (P1 and P2, scalar or vector-valued) over
// simplicial meshes, plus the cell geometry and field evaluation helpers the
// assembly and error layers share. Vector spaces store dofs component-major:
// global dof = component * n_scalar + scalar dof, so every component reuses
// the scalar connectivity.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "parec/expr.hpp"
#include "parec/mesh.hpp"

namespace parec::fem {

enum class Family : std::uint8_t { P1, P2 };

struct FESpace {
    const mesh::SimplicialMesh* msh = nullptr;
    Family family = Family::P1;
    int components = 1;
    int n_scalar = 0;
    int nloc = 0;  // scalar basis functions per cell

    std::vector<int> cell_dofs;  // nloc scalar dofs per cell, flattened
    std::vector<std::array<double, 3>> dof_points;

    int n_dofs() const { return components * n_scalar; }
    int dof(int cell, int k) const { return cell_dofs[static_cast<std::size_t>(cell) * nloc + k]; }
    int gdof(int scalar_dof, int component) const { return component * n_scalar + scalar_dof; }
    int dim() const { return msh->dim; }
};

FESpace make_space(const mesh::SimplicialMesh& m, Family family, int components = 1);

// Scalar dofs lying on boundary facets whose tag is in `tags` (P2 edge dofs
// included when their edge is part of such a facet).
std::vector<char> boundary_scalar_dofs(const FESpace& s, const std::set<std::string>& tags);

// Affine geometry of one cell: barycentric gradients, measure, and the
// barycentric-to-physical map.
struct CellGeom {
    int dim = 0;
    double measure = 0.0;
    std::array<std::array<double, 3>, 4> vertex{};       // physical corners
    std::array<std::array<double, 3>, 4> grad_lambda{};  // d+1 gradients

    void point(const double* lambda, double* x) const {
        for (int c = 0; c < 3; ++c) x[c] = 0.0;
        for (int i = 0; i <= dim; ++i)
            for (int c = 0; c < 3; ++c) x[c] += lambda[i] * vertex[i][c];
    }
};

CellGeom cell_geometry(const mesh::SimplicialMesh& m, int cell);

// Reference basis: values and barycentric-gradient coefficients at one point.
int basis_count(int dim, Family family);
void eval_basis(int dim, Family family, const double* lambda, double* n_out);
// grad N_k = sum_i coeff(k,i) * grad_lambda_i; writes nloc x (dim+1) coeffs
void eval_basis_lambda_coeffs(int dim, Family family, const double* lambda, double* coeff_out);

struct DiscreteField {
    const FESpace* space = nullptr;
    std::vector<double> dofs;
    // Set when the field owns its space (spaces built inside a solver); the
    // pointer above then aliases this holder. Copies share ownership.
    std::shared_ptr<const FESpace> owned_space;

    bool empty() const { return space == nullptr; }
};

DiscreteField zero_field(const FESpace& s);

// Nodal Lagrange interpolation; vector spaces take one expression per component.
DiscreteField interpolate(const expr::ExprFn& f, const FESpace& s, double t);
DiscreteField interpolate_vector(const expr::ExprFn* f_comp, const FESpace& s, double t);

// Point evaluation inside one cell (barycentric coordinates supplied by the
// caller). grad_out has `components` rows of length 3; unused entries zeroed.
double eval_scalar(const DiscreteField& u, int cell, const double* lambda);
void eval_vector(const DiscreteField& u, int cell, const double* lambda, double* out);
void eval_scalar_grad(const DiscreteField& u, const CellGeom& g, int cell, const double* lambda,
                      double* grad_out);
// divergence over the leading `n_div_components` components
double eval_vector_div(const DiscreteField& u, const CellGeom& g, int cell, const double* lambda,
                       int n_div_components);

// Barycentric coordinates of a physical point with respect to a cell.
void barycentric(const CellGeom& g, const double* x, double* lambda_out);

// Quadrature point on a boundary facet, expressed in the owning cell's
// barycentric coordinates so fields can be evaluated right at the surface.
struct BoundaryQuadPoint {
    int cell = 0;
    std::array<double, 4> lambda{};  // cell barycentric, zero off the facet
    std::array<double, 3> x{};
    double weight = 0.0;  // includes the facet measure
};

// Visits every quadrature point of the boundary facets carrying one of the
// given tags, with a rule of the requested polynomial degree per facet.
void for_each_boundary_qp(const mesh::SimplicialMesh& m, const std::set<std::string>& tags,
                          int degree, const std::function<void(const BoundaryQuadPoint&)>& fn);

}  // namespace parec::fem
