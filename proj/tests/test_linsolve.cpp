#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "parec/linsolve.hpp"

using namespace parec::lin;

namespace {

// Dense random SPD matrix B*B^T + n*I as both sparse and row-major dense.
void random_spd(int n, unsigned seed, SparseMatrix& sp, std::vector<double>& dense) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> b(static_cast<std::size_t>(n) * n);
    for (double& v : b) v = dist(rng);
    dense.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = (i == j) ? static_cast<double>(n) : 0.0;
            for (int k = 0; k < n; ++k) acc += b[i * n + k] * b[j * n + k];
            dense[static_cast<std::size_t>(i) * n + j] = acc;
            sp.add(i, j, acc);
        }
    sp.finalize();
}

double residual_inf(const SparseMatrix& a, const std::vector<double>& x,
                    const std::vector<double>& rhs) {
    std::vector<double> ax = a.mul(x);
    double worst = 0.0;
    for (std::size_t i = 0; i < rhs.size(); ++i)
        worst = std::max(worst, std::fabs(ax[i] - rhs[i]));
    return worst;
}

}  // namespace

TEST_SUITE("linsolve") {

TEST_CASE("identity system returns the rhs") {
    SparseMatrix a(3);
    for (int i = 0; i < 3; ++i) a.add(i, i, 1.0);
    a.finalize();
    std::vector<double> rhs = {1.5, -2.0, 0.25};
    auto x = solve_spd(a, rhs);
    for (int i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(rhs[i]).epsilon(1e-12));
}

TEST_CASE("2x2 example") {
    SparseMatrix a(2);
    a.add(0, 0, 2.0);
    a.add(0, 1, 1.0);
    a.add(1, 0, 1.0);
    a.add(1, 1, 2.0);
    a.finalize();
    auto x = solve_spd(a, {3.0, 3.0});
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("repeated add() entries accumulate") {
    SparseMatrix a(2);
    a.add(0, 0, 1.0);
    a.add(0, 0, 1.0);
    a.add(1, 1, 3.0);
    a.add(0, 1, 0.5);
    a.add(0, 1, -0.5);
    a.finalize();
    CHECK(a.coeff(0, 0) == 2.0);
    CHECK(a.coeff(0, 1) == 0.0);
    CHECK(a.coeff(1, 0) == 0.0);
    CHECK(a.coeff(1, 1) == 3.0);
    CHECK(a.diagonal() == std::vector<double>{2.0, 3.0});
}

TEST_CASE("random SPD system solved to tight residual") {
    SparseMatrix a(50);
    std::vector<double> dense;
    random_spd(50, 901, a, dense);
    std::vector<double> rhs(50);
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& v : rhs) v = dist(rng);

    SolveStats stats;
    auto x = solve_spd(a, rhs, {}, &stats);
    double bnorm = 0.0;
    for (double v : rhs) bnorm = std::max(bnorm, std::fabs(v));
    CHECK(residual_inf(a, x, rhs) <= 1e-8 * bnorm);
    CHECK(stats.iterations <= 500);

    // cross-check against the dense LU path
    auto x_lu = solve_dense(dense, rhs);
    for (int i = 0; i < 50; ++i) CHECK(x[i] == doctest::Approx(x_lu[i]).epsilon(1e-7));
}

TEST_CASE("nonsymmetric system via bicgstab matches dense LU") {
    const int n = 40;
    SparseMatrix a(n);
    std::vector<double> dense(static_cast<std::size_t>(n) * n, 0.0);
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double v = dist(rng) + (i == j ? 2.0 * n : 0.0);  // diagonally dominant
            dense[static_cast<std::size_t>(i) * n + j] = v;
            a.add(i, j, v);
        }
    a.finalize();
    std::vector<double> rhs(n);
    for (double& v : rhs) v = dist(rng);

    auto x = solve_nonsym(a, rhs);
    auto x_lu = solve_dense(dense, rhs);
    for (int i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(x_lu[i]).epsilon(1e-8));
}

TEST_CASE("zero rhs short-circuits to the zero vector") {
    SparseMatrix a(4);
    for (int i = 0; i < 4; ++i) a.add(i, i, 2.0);
    a.finalize();
    SolveStats stats{99, 99.0};
    auto x = solve_spd(a, std::vector<double>(4, 0.0), {}, &stats);
    for (double v : x) CHECK(v == 0.0);
    CHECK(stats.iterations == 0);
}

TEST_CASE("iteration cap raises SolveError with diagnostics") {
    SparseMatrix a(50);
    std::vector<double> dense;
    random_spd(50, 7, a, dense);
    std::vector<double> rhs(50, 1.0);
    SolveOptions opts;
    opts.max_iter = 3;  // far too few for a dense random system at tol 1e-10
    CHECK_THROWS_AS(solve_spd(a, rhs, opts), SolveError);
    try {
        solve_spd(a, rhs, opts);
    } catch (const SolveError& e) {
        CHECK(e.iterations() == 3);
        CHECK(e.residual() > 1e-10);
        CHECK(e.residual() < 1.0);  // it was making progress
    }
}

TEST_CASE("indefinite matrix is rejected by CG") {
    SparseMatrix a(2);
    a.add(0, 0, 1.0);
    a.add(1, 1, -1.0);
    a.finalize();
    CHECK_THROWS_AS(solve_spd(a, {1.0, 1.0}), SolveError);
}

TEST_CASE("dirichlet elimination keeps the system symmetric and consistent") {
    // 1D Laplace stencil on 4 dofs, constrain both ends.
    SparseMatrix a(4);
    std::vector<double> dense(16, 0.0);
    auto put = [&](int i, int j, double v) {
        a.add(i, j, v);
        dense[static_cast<std::size_t>(i) * 4 + j] += v;
    };
    for (int i = 0; i < 4; ++i) put(i, i, 2.0);
    for (int i = 0; i + 1 < 4; ++i) {
        put(i, i + 1, -1.0);
        put(i + 1, i, -1.0);
    }
    a.finalize();

    std::vector<double> rhs = {0.0, 1.0, 1.0, 0.0};
    const std::vector<double> rhs_orig = rhs;
    std::vector<char> constrained = {1, 0, 0, 1};
    std::vector<double> values = {2.0, 0.0, 0.0, 5.0};
    a.eliminate_dirichlet(constrained, values, rhs);

    CHECK(a.coeff(0, 0) == 1.0);
    CHECK(a.coeff(0, 1) == 0.0);
    CHECK(a.coeff(1, 0) == 0.0);
    CHECK(a.coeff(1, 2) == -1.0);  // interior coupling untouched

    auto x = solve_spd(a, rhs);
    CHECK(x[0] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(x[3] == doctest::Approx(5.0).epsilon(1e-10));
    // free rows of the original system hold with the constrained values in place
    for (int i = 1; i <= 2; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 4; ++j) acc += dense[static_cast<std::size_t>(i) * 4 + j] * x[j];
        CHECK(acc == doctest::Approx(rhs_orig[i]).epsilon(1e-9));
    }
}

TEST_CASE("dense LU rejects singular input") {
    std::vector<double> a = {1.0, 2.0, 2.0, 4.0};
    CHECK_THROWS_AS(solve_dense(a, {1.0, 1.0}), SolveError);
}

TEST_CASE("scaled sums combine sparsity patterns") {
    SparseMatrix a(2), b(2);
    a.add(0, 0, 1.0);
    a.add(0, 1, 2.0);
    a.finalize();
    b.add(1, 1, 3.0);
    b.add(0, 1, 1.0);
    b.finalize();

    auto c = scaled_sum({{2.0, &a}, {-1.0, &b}});
    CHECK(c.coeff(0, 0) == 2.0);
    CHECK(c.coeff(0, 1) == 3.0);
    CHECK(c.coeff(1, 1) == -3.0);
    CHECK(c.coeff(1, 0) == 0.0);
}

}  // TEST_SUITE
