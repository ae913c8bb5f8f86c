// Quadrature on reference simplices and the unit interval. Simplex rules come
// from the Grundmann-Moller construction (arbitrary odd exactness, any
// dimension); interval rules are Gauss-Legendre with nodes found by Newton
// iteration at first use. Nothing here is hand-typed from a table, so the
// exactness tests pin correctness against closed-form monomial integrals.

#pragma once

#include <array>
#include <vector>

namespace parec::fem {

// Points are barycentric (dim+1 leading entries used); weights are absolute,
// i.e. they sum to the reference simplex measure 1/dim!.
struct QuadRule {
    int dim = 1;
    int degree = 1;  // declared polynomial exactness
    std::vector<std::array<double, 4>> points;
    std::vector<double> weights;
};

// Cached rule integrating polynomials up to `degree` exactly. dim in 1..3,
// degree capped where double-precision factorials stay exact (>= 12 always
// available).
const QuadRule& simplex_rule(int dim, int degree);

// n-point Gauss-Legendre on (0,1); weights sum to 1, exact to degree 2n-1.
struct GaussRule {
    std::vector<double> x;
    std::vector<double> w;
};
const GaussRule& gauss_rule(int n);

}  // namespace parec::fem
