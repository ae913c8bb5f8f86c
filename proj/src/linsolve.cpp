#include "parec/linsolve.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

namespace parec::lin {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

std::vector<double> jacobi_inverse(const SparseMatrix& a) {
    std::vector<double> inv = a.diagonal();
    for (double& d : inv) d = (d != 0.0) ? 1.0 / d : 1.0;
    return inv;
}

int iteration_cap(const SolveOptions& opts, int n) {
    return opts.max_iter > 0 ? opts.max_iter : 10 * n;
}

}  // namespace

SparseMatrix::SparseMatrix(int n) : n_(n) {
    assert(n >= 0);
    row_ptr_.assign(static_cast<std::size_t>(n) + 1, 0);
}

void SparseMatrix::add(int i, int j, double value) {
    assert(!finalized_);
    assert(i >= 0 && i < n_ && j >= 0 && j < n_);
    ti_.push_back(i);
    tj_.push_back(j);
    tv_.push_back(value);
}

void SparseMatrix::finalize() {
    assert(!finalized_);
    // Counting sort by row, then order and merge each row segment.
    std::vector<int> count(static_cast<std::size_t>(n_) + 1, 0);
    for (int i : ti_) ++count[static_cast<std::size_t>(i) + 1];
    for (int i = 0; i < n_; ++i) count[i + 1] += count[i];

    std::vector<int> cols(ti_.size());
    std::vector<double> vals(ti_.size());
    {
        std::vector<int> next(count.begin(), count.end() - 1);
        for (std::size_t k = 0; k < ti_.size(); ++k) {
            int pos = next[ti_[k]]++;
            cols[pos] = tj_[k];
            vals[pos] = tv_[k];
        }
    }

    row_ptr_.assign(1, 0);
    row_ptr_.reserve(static_cast<std::size_t>(n_) + 1);
    col_.clear();
    val_.clear();
    col_.reserve(cols.size());
    val_.reserve(cols.size());

    std::vector<int> order;
    for (int i = 0; i < n_; ++i) {
        int begin = count[i], end = count[i + 1];
        order.resize(static_cast<std::size_t>(end - begin));
        std::iota(order.begin(), order.end(), begin);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return cols[a] < cols[b]; });
        for (int k : order) {
            if (!col_.empty() && col_.back() == cols[k] &&
                static_cast<int>(col_.size()) > row_ptr_.back()) {
                val_.back() += vals[k];
            } else {
                col_.push_back(cols[k]);
                val_.push_back(vals[k]);
            }
        }
        row_ptr_.push_back(static_cast<int>(col_.size()));
    }

    ti_.clear();
    ti_.shrink_to_fit();
    tj_.clear();
    tj_.shrink_to_fit();
    tv_.clear();
    tv_.shrink_to_fit();
    finalized_ = true;
}

void SparseMatrix::mul(const double* x, double* y) const {
    assert(finalized_);
    for (int i = 0; i < n_; ++i) {
        double acc = 0.0;
        for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) acc += val_[k] * x[col_[k]];
        y[i] = acc;
    }
}

std::vector<double> SparseMatrix::mul(const std::vector<double>& x) const {
    assert(static_cast<int>(x.size()) == n_);
    std::vector<double> y(static_cast<std::size_t>(n_));
    mul(x.data(), y.data());
    return y;
}

std::vector<double> SparseMatrix::diagonal() const {
    assert(finalized_);
    std::vector<double> d(static_cast<std::size_t>(n_), 0.0);
    for (int i = 0; i < n_; ++i)
        for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
            if (col_[k] == i) d[i] = val_[k];
    return d;
}

double SparseMatrix::coeff(int i, int j) const {
    assert(finalized_);
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        if (col_[k] == j) return val_[k];
    return 0.0;
}

SparseMatrix scaled_sum(std::initializer_list<std::pair<double, const SparseMatrix*>> terms) {
    assert(terms.size() > 0);
    const int n = terms.begin()->second->n();
    SparseMatrix out(n);
    for (const auto& [coef, mat] : terms) {
        assert(mat->n() == n);
        mat->for_each([&](int i, int j, double v) { out.add(i, j, coef * v); });
    }
    out.finalize();
    return out;
}

void SparseMatrix::eliminate_dirichlet(const std::vector<char>& constrained,
                                       const std::vector<double>& values,
                                       std::vector<double>& rhs) {
    assert(finalized_);
    assert(static_cast<int>(constrained.size()) == n_);
    assert(static_cast<int>(values.size()) == n_);
    assert(static_cast<int>(rhs.size()) == n_);

    for (int i = 0; i < n_; ++i) {
        if (constrained[i]) {
            bool diag_seen = false;
            for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
                if (col_[k] == i) {
                    val_[k] = 1.0;
                    diag_seen = true;
                } else {
                    val_[k] = 0.0;
                }
            }
            if (!diag_seen)
                throw std::logic_error("constrained dof has no structural diagonal entry");
            rhs[i] = values[i];
        } else {
            for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
                if (constrained[col_[k]]) {
                    rhs[i] -= val_[k] * values[col_[k]];
                    val_[k] = 0.0;
                }
            }
        }
    }
}

std::vector<double> solve_spd(const SparseMatrix& a, const std::vector<double>& b,
                              const SolveOptions& opts, SolveStats* stats) {
    const int n = a.n();
    assert(static_cast<int>(b.size()) == n);
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);

    const double bnorm = norm(b);
    if (stats) *stats = {0, 0.0};
    if (bnorm == 0.0) return x;

    const std::vector<double> inv_diag = jacobi_inverse(a);
    std::vector<double> r = b;
    std::vector<double> z(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    std::vector<double> p = z;
    std::vector<double> ap(static_cast<std::size_t>(n));
    double rz = dot(r, z);

    const int cap = iteration_cap(opts, n);
    for (int iter = 1; iter <= cap; ++iter) {
        a.mul(p.data(), ap.data());
        const double pap = dot(p, ap);
        if (!(pap > 0.0))
            throw SolveError("conjugate gradients: matrix is not positive definite",
                             norm(r) / bnorm, iter);
        const double alpha = rz / pap;
        for (int i = 0; i < n; ++i) x[i] += alpha * p[i];
        for (int i = 0; i < n; ++i) r[i] -= alpha * ap[i];
        const double res = norm(r) / bnorm;
        if (stats) *stats = {iter, res};
        if (res <= opts.tol) return x;
        for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        rz = rz_new;
    }
    throw SolveError("conjugate gradients did not converge", norm(r) / bnorm, cap);
}

std::vector<double> solve_nonsym(const SparseMatrix& a, const std::vector<double>& b,
                                 const SolveOptions& opts, SolveStats* stats) {
    const int n = a.n();
    assert(static_cast<int>(b.size()) == n);
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);

    const double bnorm = norm(b);
    if (stats) *stats = {0, 0.0};
    if (bnorm == 0.0) return x;

    const std::vector<double> inv_diag = jacobi_inverse(a);
    std::vector<double> r = b;
    std::vector<double> r_hat = r;
    std::vector<double> p(static_cast<std::size_t>(n), 0.0);
    std::vector<double> v(static_cast<std::size_t>(n), 0.0);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<double> p_hat(static_cast<std::size_t>(n));
    std::vector<double> s_hat(static_cast<std::size_t>(n));
    std::vector<double> t(static_cast<std::size_t>(n));
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    double rhat_norm = norm(r_hat);

    // When the recurrence degenerates (shadow residual nearly orthogonal to
    // the current one) the cure is a restart: recompute the true residual,
    // re-seed r_hat, and continue from the current iterate.
    int restarts = 0;
    const int max_restarts = 8;
    const auto restart = [&]() {
        a.mul(x.data(), t.data());
        for (int i = 0; i < n; ++i) r[i] = b[i] - t[i];
        r_hat = r;
        rhat_norm = norm(r_hat);
        std::fill(p.begin(), p.end(), 0.0);
        std::fill(v.begin(), v.end(), 0.0);
        rho = alpha = omega = 1.0;
    };

    const int cap = iteration_cap(opts, n);
    for (int iter = 1; iter <= cap; ++iter) {
        const double rho_new = dot(r_hat, r);
        if (!std::isfinite(rho_new) ||
            std::fabs(rho_new) < 1e-28 * rhat_norm * norm(r)) {
            if (++restarts > max_restarts)
                throw SolveError("bicgstab breakdown (rho vanished)", norm(r) / bnorm, iter);
            restart();
            if (norm(r) / bnorm <= opts.tol) {
                if (stats) *stats = {iter, norm(r) / bnorm};
                return x;
            }
            continue;
        }
        const double beta = (rho_new / rho) * (alpha / omega);
        for (int i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        for (int i = 0; i < n; ++i) p_hat[i] = inv_diag[i] * p[i];
        a.mul(p_hat.data(), v.data());
        const double rhv = dot(r_hat, v);
        if (!std::isfinite(rhv) || std::fabs(rhv) < 1e-28 * rhat_norm * norm(v)) {
            if (++restarts > max_restarts)
                throw SolveError("bicgstab breakdown (search direction degenerate)",
                                 norm(r) / bnorm, iter);
            restart();
            continue;
        }
        alpha = rho_new / rhv;
        for (int i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
        if (norm(s) / bnorm <= opts.tol) {
            for (int i = 0; i < n; ++i) x[i] += alpha * p_hat[i];
            if (stats) *stats = {iter, norm(s) / bnorm};
            return x;
        }
        for (int i = 0; i < n; ++i) s_hat[i] = inv_diag[i] * s[i];
        a.mul(s_hat.data(), t.data());
        const double tt = dot(t, t);
        if (tt == 0.0) {
            if (++restarts > max_restarts)
                throw SolveError("bicgstab breakdown (stagnation)", norm(s) / bnorm, iter);
            for (int i = 0; i < n; ++i) x[i] += alpha * p_hat[i];
            restart();
            continue;
        }
        omega = dot(t, s) / tt;
        for (int i = 0; i < n; ++i) x[i] += alpha * p_hat[i] + omega * s_hat[i];
        for (int i = 0; i < n; ++i) r[i] = s[i] - omega * t[i];
        const double res = norm(r) / bnorm;
        if (stats) *stats = {iter, res};
        if (res <= opts.tol) return x;
        rho = rho_new;
    }
    throw SolveError("bicgstab did not converge", norm(r) / bnorm, cap);
}

std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    assert(a.size() == static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);

    auto at = [&](int i, int j) -> double& {
        return a[static_cast<std::size_t>(i) * n + j];
    };

    for (int k = 0; k < n; ++k) {
        int pivot = k;
        double best = std::fabs(at(k, k));
        for (int i = k + 1; i < n; ++i) {
            if (std::fabs(at(i, k)) > best) {
                best = std::fabs(at(i, k));
                pivot = i;
            }
        }
        if (best == 0.0) throw SolveError("dense LU: matrix is singular", 0.0, k);
        if (pivot != k) {
            for (int j = 0; j < n; ++j) std::swap(at(k, j), at(pivot, j));
            std::swap(b[k], b[pivot]);
        }
        for (int i = k + 1; i < n; ++i) {
            const double m = at(i, k) / at(k, k);
            if (m == 0.0) continue;
            at(i, k) = 0.0;
            for (int j = k + 1; j < n; ++j) at(i, j) -= m * at(k, j);
            b[i] -= m * b[k];
        }
    }
    for (int i = n - 1; i >= 0; --i) {
        double acc = b[i];
        for (int j = i + 1; j < n; ++j) acc -= at(i, j) * b[j];
        b[i] = acc / at(i, i);
    }
    return b;
}

}  // namespace parec::lin
