// Quadrature, finite element spaces and assembly. The quadrature rules and
// element matrices are pinned against closed-form integrals (monomial moments
// on the simplex, hand-computed element matrices, integration identities that
// hold for any conforming discretization).

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "parec/assembly.hpp"
#include "parec/expr.hpp"
#include "parec/fem.hpp"
#include "parec/mesh.hpp"
#include "parec/quadrature.hpp"

using namespace parec;
using fem::Family;

namespace {

double factorial(int n) {
    double acc = 1.0;
    for (int k = 2; k <= n; ++k) acc *= k;
    return acc;
}

// integral of prod lambda_i^{a_i} over the reference d-simplex
double monomial_moment(const std::vector<int>& a, int dim) {
    int total = 0;
    double num = 1.0;
    for (int i = 0; i <= dim; ++i) {
        num *= factorial(a[i]);
        total += a[i];
    }
    return num / factorial(total + dim);
}

void enumerate_exponents(int slots, int degree, std::vector<int>& a,
                         const std::function<void(const std::vector<int>&)>& visit, int slot = 0,
                         int used = 0) {
    if (slot == slots - 1) {
        a[slot] = degree - used;
        visit(a);
        return;
    }
    for (int e = 0; e + used <= degree; ++e) {
        a[slot] = e;
        enumerate_exponents(slots, degree, a, visit, slot + 1, used + e);
    }
}

mesh::SimplicialMesh reference_triangle() {
    mesh::SimplicialMesh m;
    m.dim = 2;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.cells = {{0, 1, 2, -1}};
    m.bisect_tag = {2};
    m.boundary = {{{0, 1, -1}, "dirichlet"}, {{1, 2, -1}, "dirichlet"}, {{0, 2, -1}, "dirichlet"}};
    return m;
}

double matrix_total(const lin::SparseMatrix& m) {
    double acc = 0.0;
    m.for_each([&](int, int, double v) { acc += v; });
    return acc;
}

std::set<std::string> all_tags(const mesh::SimplicialMesh& m) {
    std::set<std::string> tags;
    for (const auto& f : m.boundary) tags.insert(f.tag);
    return tags;
}

}  // namespace

TEST_SUITE_BEGIN("fem");

TEST_CASE("simplex rules reproduce monomial moments exactly") {
    for (int dim = 1; dim <= 3; ++dim) {
        const int max_degree = dim == 3 ? 13 : 14;
        for (int degree = 1; degree <= max_degree; ++degree) {
            const auto& rule = fem::simplex_rule(dim, degree);
            REQUIRE(rule.degree >= degree);

            double wsum = 0.0;
            for (double w : rule.weights) wsum += w;
            CHECK(wsum == doctest::Approx(1.0 / factorial(dim)).epsilon(1e-13));

            std::vector<int> a(dim + 1, 0);
            enumerate_exponents(dim + 1, degree, a, [&](const std::vector<int>& exps) {
                double got = 0.0;
                for (std::size_t q = 0; q < rule.points.size(); ++q) {
                    double term = rule.weights[q];
                    for (int i = 0; i <= dim; ++i)
                        term *= std::pow(rule.points[q][i], exps[i]);
                    got += term;
                }
                const double want = monomial_moment(exps, dim);
                CHECK(got == doctest::Approx(want).epsilon(5e-12));
            });
        }
    }
    CHECK_THROWS_AS(fem::simplex_rule(4, 2), std::invalid_argument);
    CHECK_THROWS_AS(fem::simplex_rule(2, 40), std::invalid_argument);
}

TEST_CASE("interval rules integrate powers exactly up to 2n-1") {
    for (int n = 1; n <= 12; ++n) {
        const auto& g = fem::gauss_rule(n);
        REQUIRE(g.x.size() == static_cast<std::size_t>(n));
        for (int k = 0; k <= 2 * n - 1; ++k) {
            double got = 0.0;
            for (int q = 0; q < n; ++q) got += g.w[q] * std::pow(g.x[q], k);
            CHECK(got == doctest::Approx(1.0 / (k + 1)).epsilon(1e-13));
        }
        // nodes stay inside the interval and mirror around the midpoint
        for (int q = 0; q < n; ++q) {
            CHECK(g.x[q] > 0.0);
            CHECK(g.x[q] < 1.0);
            CHECK(g.x[q] + g.x[n - 1 - q] == doctest::Approx(1.0).epsilon(1e-14));
        }
    }
}

TEST_CASE("dof counts and boundary masks on a 3x3 square grid") {
    auto m = mesh::build_box_mesh(2, {}, {3, 3, 1});
    REQUIRE(m.n_vertices() == 16);
    REQUIRE(m.n_cells() == 18);

    auto p1 = fem::make_space(m, Family::P1);
    CHECK(p1.n_dofs() == 16);

    // edges: 12 horizontal + 12 vertical + 9 diagonals
    auto p2 = fem::make_space(m, Family::P2);
    CHECK(p2.n_scalar == 16 + 33);

    auto v2 = fem::make_space(m, Family::P1, 2);
    CHECK(v2.n_dofs() == 32);
    CHECK(v2.gdof(5, 1) == 16 + 5);

    auto mask1 = fem::boundary_scalar_dofs(p1, all_tags(m));
    int count1 = 0;
    for (char c : mask1) count1 += c;
    CHECK(count1 == 12);

    auto mask2 = fem::boundary_scalar_dofs(p2, all_tags(m));
    int count2 = 0;
    for (char c : mask2) count2 += c;
    CHECK(count2 == 24);  // 12 corner/edge vertices plus 12 boundary edge midpoints

    // restricting to one side picks out that side only
    mesh::retag_boundary(m, [](const std::array<double, 3>* v, int n) {
        for (int i = 0; i < n; ++i)
            if (v[i][0] > 1e-12) return "rest";
        return "left";
    });
    auto left = fem::boundary_scalar_dofs(p1, {"left"});
    int nleft = 0;
    for (char c : left) nleft += c;
    CHECK(nleft == 4);
}

TEST_CASE("hand-computed element matrices in one dimension") {
    auto m2 = mesh::build_box_mesh(1, {}, {2, 1, 1});
    auto s2 = fem::make_space(m2, Family::P1);
    auto k = fem::assemble_stiffness(s2, fem::MatrixExpr::identity());

    // vertices of the 2-cell interval mesh are 0, 0.5, 1 in some order; find
    // each by coordinate so the check does not assume an ordering
    int id0 = -1, idm = -1, id1 = -1;
    for (int i = 0; i < m2.n_vertices(); ++i) {
        if (m2.vertices[i][0] == 0.0) id0 = i;
        if (m2.vertices[i][0] == 0.5) idm = i;
        if (m2.vertices[i][0] == 1.0) id1 = i;
    }
    REQUIRE(id0 >= 0);
    REQUIRE(idm >= 0);
    REQUIRE(id1 >= 0);
    CHECK(k.coeff(id0, id0) == doctest::Approx(2.0));
    CHECK(k.coeff(idm, idm) == doctest::Approx(4.0));
    CHECK(k.coeff(id1, id1) == doctest::Approx(2.0));
    CHECK(k.coeff(id0, idm) == doctest::Approx(-2.0));
    CHECK(k.coeff(idm, id1) == doctest::Approx(-2.0));
    CHECK(k.coeff(id0, id1) == doctest::Approx(0.0));

    auto m1 = mesh::build_box_mesh(1, {}, {1, 1, 1});
    auto s1 = fem::make_space(m1, Family::P1);
    auto mm = fem::assemble_mass(s1);
    CHECK(mm.coeff(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
    CHECK(mm.coeff(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
    CHECK(mm.coeff(0, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-13));
}

TEST_CASE("anisotropic stiffness on the reference triangle") {
    auto m = reference_triangle();
    auto s = fem::make_space(m, Family::P1);

    fem::MatrixExpr a;
    a.set(0, 0, expr::parse_expr("2"));
    a.set(0, 1, expr::parse_expr("1"));
    a.set(1, 1, expr::parse_expr("3"));
    auto k = fem::assemble_stiffness(s, a);

    // K_ij = |T| (grad l_i)^T A (grad l_j) with |T| = 1/2 and gradients
    // (-1,-1), (1,0), (0,1)
    const double want[3][3] = {{3.5, -1.5, -2.0}, {-1.5, 1.0, 0.5}, {-2.0, 0.5, 1.5}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(k.coeff(i, j) == doctest::Approx(want[i][j]).epsilon(1e-13));
}

TEST_CASE("stiffness annihilates constants, weighted mass sums to the weight integral") {
    fem::MatrixExpr a3;
    a3.set(0, 0, expr::parse_expr("2"));
    a3.set(0, 1, expr::parse_expr("1"));
    a3.set(1, 1, expr::parse_expr("3"));
    a3.set(1, 2, expr::parse_expr("1"));
    a3.set(2, 2, expr::parse_expr("4"));

    for (int dim = 2; dim <= 3; ++dim) {
        auto m = mesh::build_box_mesh(dim, {}, {2, 2, 2});
        for (auto family : {Family::P1, Family::P2}) {
            auto s = fem::make_space(m, family);
            auto k = fem::assemble_stiffness(s, a3);
            std::vector<double> ones(static_cast<std::size_t>(s.n_dofs()), 1.0);
            auto ku = k.mul(ones);
            double norm = 0.0;
            k.for_each([&](int, int, double v) { norm = std::max(norm, std::fabs(v)); });
            for (double v : ku) CHECK(std::fabs(v) <= 1e-12 * norm);
        }
    }

    auto m = mesh::build_box_mesh(2, {}, {4, 4, 1});
    auto s = fem::make_space(m, Family::P2);
    auto w = expr::parse_expr("1 + x");
    auto mw = fem::assemble_mass(s, &w);
    CHECK(matrix_total(mw) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("convection matrix reproduces the integral of b.grad u") {
    auto m = mesh::build_box_mesh(2, {}, {4, 4, 1});
    std::array<expr::ExprFn, 3> b = {expr::parse_expr("2"), expr::parse_expr("3"),
                                     expr::ExprFn::constant(0.0)};
    auto u_expr = expr::parse_expr("x + y");
    for (auto family : {Family::P1, Family::P2}) {
        auto s = fem::make_space(m, family);
        auto c = fem::assemble_convection(s, b);
        auto u = fem::interpolate(u_expr, s, 0.0);
        auto cu = c.mul(u.dofs);
        // sum_i (C u)_i = integral of 1 * (b . grad u) = (2 + 3) * area
        double acc = 0.0;
        for (double v : cu) acc += v;
        CHECK(acc == doctest::Approx(5.0).epsilon(1e-12));
        // constants are transported nowhere: C * 1 = 0
        std::vector<double> ones(static_cast<std::size_t>(s.n_dofs()), 1.0);
        auto c1 = c.mul(ones);
        for (double v : c1) CHECK(std::fabs(v) <= 1e-12);
    }
}

TEST_CASE("load vector matches closed-form moments") {
    auto m = mesh::build_box_mesh(2, {}, {3, 3, 1});
    auto s = fem::make_space(m, Family::P1);
    auto f = expr::parse_expr("6*x");
    auto rhs = fem::assemble_load(s, f, 0.0);
    // sum_i (f, N_i) = integral of f = 3
    double acc = 0.0;
    for (double v : rhs) acc += v;
    CHECK(acc == doctest::Approx(3.0).epsilon(1e-12));

    // time enters through the expression
    auto ft = expr::parse_expr("6*x*t");
    auto rhs_t = fem::assemble_load(s, ft, 0.5);
    for (std::size_t i = 0; i < rhs.size(); ++i)
        CHECK(rhs_t[i] == doctest::Approx(0.5 * rhs[i]).epsilon(1e-13));
}

TEST_CASE("interpolation and point evaluation are exact for polynomial fields") {
    std::mt19937 rng(20240811);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto m = mesh::build_box_mesh(2, {}, {3, 3, 1});
    auto lin_expr = expr::parse_expr("2*x - y + 0.5");
    auto quad_expr = expr::parse_expr("x^2 + 3*x*y - y + 2");

    auto p1 = fem::make_space(m, Family::P1);
    auto p2 = fem::make_space(m, Family::P2);
    auto u1 = fem::interpolate(lin_expr, p1, 0.0);
    auto u2 = fem::interpolate(quad_expr, p2, 0.0);

    for (int trial = 0; trial < 200; ++trial) {
        const int c = static_cast<int>(unit(rng) * m.n_cells()) % m.n_cells();
        double l[3] = {unit(rng), unit(rng), unit(rng)};
        const double tot = l[0] + l[1] + l[2];
        for (double& v : l) v /= tot;
        auto g = fem::cell_geometry(m, c);
        double x[3];
        g.point(l, x);

        CHECK(fem::eval_scalar(u1, c, l) ==
              doctest::Approx(2 * x[0] - x[1] + 0.5).epsilon(1e-12));
        CHECK(fem::eval_scalar(u2, c, l) ==
              doctest::Approx(x[0] * x[0] + 3 * x[0] * x[1] - x[1] + 2).epsilon(1e-12));

        double grad[3];
        fem::eval_scalar_grad(u2, g, c, l, grad);
        CHECK(grad[0] == doctest::Approx(2 * x[0] + 3 * x[1]).epsilon(1e-11));
        CHECK(grad[1] == doctest::Approx(3 * x[0] - 1.0).epsilon(1e-11));

        // physical point maps back to the same barycentric coordinates
        double lb[4];
        fem::barycentric(g, x, lb);
        for (int i = 0; i < 3; ++i) CHECK(lb[i] == doctest::Approx(l[i]).epsilon(1e-11));
    }
}

TEST_CASE("vector fields, divergence and the div-div form") {
    auto m = mesh::build_box_mesh(2, {}, {3, 3, 1});
    auto vs = fem::make_space(m, Family::P1, 2);

    std::array<expr::ExprFn, 2> comps = {expr::parse_expr("2*x + y"),
                                         expr::parse_expr("x - 3*y")};
    auto y = fem::interpolate_vector(comps.data(), vs, 0.0);

    double l[3] = {0.2, 0.3, 0.5};
    for (int c = 0; c < m.n_cells(); ++c) {
        auto g = fem::cell_geometry(m, c);
        double x[3], val[3];
        g.point(l, x);
        fem::eval_vector(y, c, l, val);
        CHECK(val[0] == doctest::Approx(2 * x[0] + x[1]).epsilon(1e-12));
        CHECK(val[1] == doctest::Approx(x[0] - 3 * x[1]).epsilon(1e-12));
        CHECK(fem::eval_vector_div(y, g, c, l, 2) == doctest::Approx(-1.0).epsilon(1e-12));
        // divergence restricted to the first component only
        CHECK(fem::eval_vector_div(y, g, c, l, 1) == doctest::Approx(2.0).epsilon(1e-12));
    }

    auto sdiv = fem::assemble_div_div(vs);
    // (x, y) has divergence 2, so the quadratic form gives 4 * area
    std::array<expr::ExprFn, 2> radial = {expr::parse_expr("x"), expr::parse_expr("y")};
    auto yr = fem::interpolate_vector(radial.data(), vs, 0.0);
    auto tmp = sdiv.mul(yr.dofs);
    double quad = 0.0;
    for (std::size_t i = 0; i < tmp.size(); ++i) quad += tmp[i] * yr.dofs[i];
    CHECK(quad == doctest::Approx(4.0).epsilon(1e-12));

    // a rotation is divergence free
    std::array<expr::ExprFn, 2> rot = {expr::parse_expr("-y"), expr::parse_expr("x")};
    auto yrot = fem::interpolate_vector(rot.data(), vs, 0.0);
    tmp = sdiv.mul(yrot.dofs);
    quad = 0.0;
    for (std::size_t i = 0; i < tmp.size(); ++i) quad += tmp[i] * yrot.dofs[i];
    CHECK(std::fabs(quad) <= 1e-12);
}

TEST_CASE("weighted vector mass blocks scale like the coefficient") {
    auto m = mesh::build_box_mesh(2, {}, {2, 2, 1});
    auto ss = fem::make_space(m, Family::P1);
    auto vs = fem::make_space(m, Family::P1, 2);

    auto mass = fem::assemble_mass(ss);
    auto a = fem::MatrixExpr::diag(expr::ExprFn::constant(1.0), expr::ExprFn::constant(10.0),
                                   expr::ExprFn::constant(1.0));

    auto plain = fem::assemble_vector_mass(vs, a, false);
    auto inverted = fem::assemble_vector_mass(vs, a, true);
    for (int i = 0; i < ss.n_scalar; ++i)
        for (int j = 0; j < ss.n_scalar; ++j) {
            const double mij = mass.coeff(i, j);
            CHECK(plain.coeff(vs.gdof(i, 0), vs.gdof(j, 0)) == doctest::Approx(mij));
            CHECK(plain.coeff(vs.gdof(i, 1), vs.gdof(j, 1)) == doctest::Approx(10.0 * mij));
            CHECK(inverted.coeff(vs.gdof(i, 1), vs.gdof(j, 1)) ==
                  doctest::Approx(mij / 10.0));
            CHECK(plain.coeff(vs.gdof(i, 0), vs.gdof(j, 1)) == doctest::Approx(0.0));
        }

    // dense coefficient: block sums equal the inverse matrix entries times
    // the domain area, because the basis sums to one in every component
    fem::MatrixExpr full;
    full.set(0, 0, expr::parse_expr("2"));
    full.set(0, 1, expr::parse_expr("1"));
    full.set(1, 1, expr::parse_expr("3"));
    auto minv = fem::assemble_vector_mass(vs, full, true);
    const double inv[2][2] = {{3.0 / 5.0, -1.0 / 5.0}, {-1.0 / 5.0, 2.0 / 5.0}};
    double block[2][2] = {{0, 0}, {0, 0}};
    minv.for_each([&](int i, int j, double v) {
        block[i / vs.n_scalar][j / vs.n_scalar] += v;
    });
    for (int ci = 0; ci < 2; ++ci)
        for (int cj = 0; cj < 2; ++cj)
            CHECK(block[ci][cj] == doctest::Approx(inv[ci][cj]).epsilon(1e-12));
}

TEST_CASE("nodal time moments of the load") {
    auto m = mesh::build_box_mesh(2, {}, {2, 2, 1});
    auto s = fem::make_space(m, Family::P1);
    const double tau = 0.5;

    // constant in time: moment is f(x) * tau^2 / 2
    auto f1 = expr::parse_expr("3*x + 1");
    auto mom1 = fem::time_moment_F(f1, s, 0.25, tau);
    for (int i = 0; i < s.n_scalar; ++i) {
        const double fx = 3 * s.dof_points[i][0] + 1;
        CHECK(mom1.dofs[i] == doctest::Approx(fx * tau * tau / 2.0).epsilon(1e-13));
    }

    // linear in time from t_k = 0: moment is f(x) * tau^3 / 3
    auto f2 = expr::parse_expr("(2*x + 1)*t");
    auto mom2 = fem::time_moment_F(f2, s, 0.0, tau);
    for (int i = 0; i < s.n_scalar; ++i) {
        const double fx = 2 * s.dof_points[i][0] + 1;
        CHECK(mom2.dofs[i] == doctest::Approx(fx * tau * tau * tau / 3.0).epsilon(1e-13));
    }

    // offset start: integral of (t - t_k) * t over (1, 1.5)
    auto f3 = expr::parse_expr("t");
    auto mom3 = fem::time_moment_F(f3, s, 1.0, tau);
    const double want = tau * tau * tau / 3.0 + 1.0 * tau * tau / 2.0;
    for (int i = 0; i < s.n_scalar; ++i)
        CHECK(mom3.dofs[i] == doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("flux right hand sides reduce to known forms") {
    auto m = mesh::build_box_mesh(2, {}, {3, 3, 1});
    auto ss = fem::make_space(m, Family::P1);
    auto vs = fem::make_space(m, Family::P1, 2);
    const double tau = 0.25, sigma = 2.0;

    auto zero = fem::zero_field(ss);
    auto z0 = fem::assemble_z(vs, zero, zero, zero, tau, sigma);
    for (double v : z0) CHECK(v == 0.0);

    // constant moment and equal velocities: z_j = C * integral of div y_j
    auto cfield = fem::interpolate(expr::ExprFn::constant(3.0), ss, 0.0);
    auto zc = fem::assemble_z(vs, cfield, zero, zero, tau, sigma);
    auto div1 = fem::assemble_div_rhs(
        vs, [](int, const double*, const double*) { return 1.0; }, 2);
    for (std::size_t i = 0; i < zc.size(); ++i)
        CHECK(zc[i] == doctest::Approx(3.0 * div1[i]).epsilon(1e-12));

    // the velocity jump enters scaled by sigma * tau / 2
    auto vjump = fem::interpolate(expr::ExprFn::constant(4.0), ss, 0.0);
    auto zj = fem::assemble_z(vs, zero, vjump, zero, tau, sigma);
    for (std::size_t i = 0; i < zj.size(); ++i)
        CHECK(zj[i] == doctest::Approx(sigma * tau / 2.0 * 4.0 * div1[i]).epsilon(1e-12));

    // g against a linear field picks out one component of the basis moments
    auto vx = fem::interpolate(expr::parse_expr("x"), ss, 0.0);
    auto g1 = fem::assemble_g(vs, zero, vx);
    auto mass = fem::assemble_mass(ss);
    for (int k = 0; k < ss.n_scalar; ++k) {
        double row = 0.0;
        for (int j = 0; j < ss.n_scalar; ++j) row += mass.coeff(k, j);
        CHECK(g1[vs.gdof(k, 0)] == doctest::Approx(row).epsilon(1e-12));
        CHECK(g1[vs.gdof(k, 1)] == doctest::Approx(0.0));
    }

    // the older field contributes half its gradient
    auto vy = fem::interpolate(expr::parse_expr("2*y"), ss, 0.0);
    auto g2 = fem::assemble_g(vs, vy, zero);
    for (int k = 0; k < ss.n_scalar; ++k) {
        double row = 0.0;
        for (int j = 0; j < ss.n_scalar; ++j) row += mass.coeff(k, j);
        CHECK(g2[vs.gdof(k, 1)] == doctest::Approx(row).epsilon(1e-12));
        CHECK(g2[vs.gdof(k, 0)] == doctest::Approx(0.0));
    }
}

TEST_CASE("coefficient matrices evaluate, invert and expose eigenvalue bounds") {
    fem::MatrixExpr a;
    a.set(0, 0, expr::parse_expr("2"));
    a.set(0, 1, expr::parse_expr("1"));
    a.set(1, 1, expr::parse_expr("2"));
    const double x[3] = {0.3, 0.7, 0.1};
    CHECK(a.min_eigenvalue(x, 2, 0.0) == doctest::Approx(1.0).epsilon(1e-12));

    auto d = fem::MatrixExpr::diag(expr::ExprFn::constant(1.0), expr::ExprFn::constant(10.0),
                                   expr::ExprFn::constant(5.0));
    CHECK(d.min_eigenvalue(x, 2, 0.0) == doctest::Approx(1.0));
    CHECK(d.min_eigenvalue(x, 3, 0.0) == doctest::Approx(1.0));

    fem::MatrixExpr f3;
    f3.set(0, 0, expr::parse_expr("2"));
    f3.set(0, 1, expr::parse_expr("1"));
    f3.set(1, 1, expr::parse_expr("3"));
    f3.set(1, 2, expr::parse_expr("1"));
    f3.set(2, 2, expr::parse_expr("4"));
    double mat[3][3], inv[3][3];
    f3.eval(x, 3, 0.0, mat);
    f3.eval_inverse(x, 3, 0.0, inv);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += mat[i][k] * inv[k][j];
            CHECK(acc == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
        }

    // spatially varying scalar coefficient
    auto sv = fem::MatrixExpr::scalar(expr::parse_expr("1 + x*t"));
    CHECK(sv.min_eigenvalue(x, 2, 2.0) == doctest::Approx(1.6).epsilon(1e-13));
}

TEST_CASE("boundary quadrature integrates over tagged facets") {
    // weights sum to the boundary measure; first moments match line integrals
    mesh::Box box;
    for (int dim : {1, 2, 3}) {
        auto m = mesh::build_box_mesh(dim, box, {2, 2, 2});
        const double expect = dim == 1 ? 2.0 : (dim == 2 ? 4.0 : 6.0);
        double total = 0.0;
        fem::for_each_boundary_qp(m, all_tags(m), 3,
                                  [&](const fem::BoundaryQuadPoint& qp) { total += qp.weight; });
        CHECK(total == doctest::Approx(expect).epsilon(1e-12));
    }

    // integral of x*y over the top edge y=1 of the unit square is 1/2; the
    // barycentric coordinates must reproduce the physical point
    auto m = mesh::build_box_mesh(2, box, {3, 3, 3});
    mesh::retag_boundary(m, [](const std::array<double, 3>* verts, int n) -> std::string {
        for (int i = 0; i < n; ++i)
            if (std::fabs(verts[i][1] - 1.0) > 1e-12) return "rest";
        return "top";
    });
    double moment = 0.0;
    fem::for_each_boundary_qp(m, {"top"}, 4, [&](const fem::BoundaryQuadPoint& qp) {
        const fem::CellGeom g = fem::cell_geometry(m, qp.cell);
        double x[3];
        g.point(qp.lambda.data(), x);
        CHECK(std::fabs(x[0] - qp.x[0]) < 1e-13);
        CHECK(std::fabs(x[1] - 1.0) < 1e-13);
        moment += qp.weight * qp.x[0] * qp.x[1];
    });
    CHECK(moment == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_SUITE_END();
