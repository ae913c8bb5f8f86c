#include "parec/quadrature.hpp"

#include <cassert>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

namespace parec::fem {

namespace {

double factorial(int n) {
    double acc = 1.0;
    for (int k = 2; k <= n; ++k) acc *= k;
    return acc;
}

void enumerate_multi_indices(int slots, int total, std::array<int, 4>& k, int at,
                             const std::function<void(const std::array<int, 4>&)>& emit);

// all k in N_0^slots with |k| = total
void enumerate_multi_indices(int slots, int total, std::array<int, 4>& k, int at,
                             const std::function<void(const std::array<int, 4>&)>& emit) {
    if (at == slots - 1) {
        k[at] = total;
        emit(k);
        return;
    }
    for (int v = 0; v <= total; ++v) {
        k[at] = v;
        enumerate_multi_indices(slots, total - v, k, at + 1, emit);
    }
}

// Grundmann-Moller rule of index s on the reference dim-simplex: exact for
// polynomials of degree 2s+1. Level i contributes points with barycentric
// coordinates (2k+1)/(2s+1+dim-2i) over multi-indices |k| = s-i, all sharing
// the weight
//   (-1)^i 2^(-2s) (2s+1+dim-2i)^(2s+1) / (i! (2s+1+dim-i)!),
// which comes out in absolute units (the weights sum to 1/dim!).
QuadRule grundmann_moller(int dim, int s) {
    QuadRule rule;
    rule.dim = dim;
    rule.degree = 2 * s + 1;
    const int d = 2 * s + 1;
    for (int i = 0; i <= s; ++i) {
        const int denom = d + dim - 2 * i;
        const double w = ((i % 2) ? -1.0 : 1.0) * std::ldexp(1.0, -2 * s) *
                         std::pow(static_cast<double>(denom), d) /
                         (factorial(i) * factorial(d + dim - i));
        std::array<int, 4> k{0, 0, 0, 0};
        enumerate_multi_indices(dim + 1, s - i, k, 0,
                                [&](const std::array<int, 4>& idx) {
                                    std::array<double, 4> p{0, 0, 0, 0};
                                    for (int c = 0; c <= dim; ++c)
                                        p[c] = static_cast<double>(2 * idx[c] + 1) / denom;
                                    rule.points.push_back(p);
                                    rule.weights.push_back(w);
                                });
    }
    return rule;
}

GaussRule legendre_on_unit(int n) {
    GaussRule rule;
    rule.x.resize(n);
    rule.w.resize(n);
    for (int i = 0; i < n; ++i) {
        // roots of P_n, highest first; standard asymptotic initial guess
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pd = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            pd = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / pd;
            x -= dx;
            if (std::fabs(dx) < 1e-15) break;
        }
        rule.x[i] = (1.0 + x) / 2.0;
        rule.w[i] = 1.0 / ((1.0 - x * x) * pd * pd);  // = (2/((1-x^2)P'^2)) / 2
    }
    return rule;
}

}  // namespace

const QuadRule& simplex_rule(int dim, int degree) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("simplex_rule: dim must be 1..3");
    if (degree < 1) degree = 1;
    // factorial(2s+1+dim) must stay below 2^53 for exact weights
    const int cap = (dim == 3) ? 13 : 14;
    if (degree > cap) throw std::invalid_argument("simplex_rule: degree too high");

    static std::map<std::pair<int, int>, QuadRule> cache;
    auto key = std::make_pair(dim, degree);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    QuadRule rule;
    if (dim == 1) {
        // Gauss beats Grundmann-Moller pointcount-wise and has positive weights
        const GaussRule& g = gauss_rule((degree + 2) / 2);
        rule.dim = 1;
        rule.degree = degree;
        for (std::size_t q = 0; q < g.x.size(); ++q) {
            rule.points.push_back({1.0 - g.x[q], g.x[q], 0.0, 0.0});
            rule.weights.push_back(g.w[q]);
        }
    } else {
        rule = grundmann_moller(dim, (degree - 1) / 2 + ((degree - 1) % 2 ? 1 : 0));
    }
    return cache.emplace(key, std::move(rule)).first->second;
}

const GaussRule& gauss_rule(int n) {
    if (n < 1 || n > 60) throw std::invalid_argument("gauss_rule: need 1 <= n <= 60");
    static std::map<int, GaussRule> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    return cache.emplace(n, legendre_on_unit(n)).first->second;
}

}  // namespace parec::fem
