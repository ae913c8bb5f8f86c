// Sparse matrices in assemble-then-finalize form and the iterative solvers
// used throughout: Jacobi-preconditioned conjugate gradients for the SPD
// systems and BiCGStab for the nonsymmetric ones (convection terms, the
// stabilized space-time operator). A dense LU path serves small systems and
// reference solutions in tests.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace parec::lin {

class SolveError : public std::runtime_error {
public:
    SolveError(const std::string& what, double residual, int iterations)
        : std::runtime_error(what + " (relative residual " + std::to_string(residual) +
                             " after " + std::to_string(iterations) + " iterations)"),
          residual_(residual),
          iterations_(iterations) {}
    double residual() const { return residual_; }
    int iterations() const { return iterations_; }

private:
    double residual_;
    int iterations_;
};

// Row-compressed square matrix. add() accumulates triplets in any order,
// including repeats of the same entry; finalize() merges them. Products and
// entry queries require a finalized matrix.
class SparseMatrix {
public:
    explicit SparseMatrix(int n);

    int n() const { return n_; }
    bool finalized() const { return finalized_; }
    std::size_t nnz() const { return col_.size(); }

    void add(int i, int j, double value);
    void finalize();

    void mul(const double* x, double* y) const;
    std::vector<double> mul(const std::vector<double>& x) const;
    std::vector<double> diagonal() const;
    double coeff(int i, int j) const;  // zero when the entry is absent

    template <typename F>
    void for_each(F&& f) const {
        for (int i = 0; i < n_; ++i)
            for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) f(i, col_[k], val_[k]);
    }

    // Constrain dofs to fixed values: constrained rows and columns become
    // identity, with the known contributions moved into rhs. A symmetric
    // matrix stays symmetric, so CG remains applicable afterwards.
    void eliminate_dirichlet(const std::vector<char>& constrained,
                             const std::vector<double>& values, std::vector<double>& rhs);

private:
    int n_;
    bool finalized_ = false;
    std::vector<int> ti_, tj_;
    std::vector<double> tv_;
    std::vector<int> row_ptr_, col_;
    std::vector<double> val_;
};

// Linear combination of finalized matrices of equal size.
SparseMatrix scaled_sum(
    std::initializer_list<std::pair<double, const SparseMatrix*>> terms);

struct SolveOptions {
    double tol = 1e-10;  // relative residual target
    int max_iter = 0;    // 0 selects 10*n
};

struct SolveStats {
    int iterations = 0;
    double residual = 0.0;
};

// Conjugate gradients with Jacobi preconditioning. Throws SolveError when the
// iteration cap is reached or the matrix reveals itself as not positive
// definite.
std::vector<double> solve_spd(const SparseMatrix& a, const std::vector<double>& b,
                              const SolveOptions& opts = {}, SolveStats* stats = nullptr);

// BiCGStab with Jacobi preconditioning for nonsymmetric systems.
std::vector<double> solve_nonsym(const SparseMatrix& a, const std::vector<double>& b,
                                 const SolveOptions& opts = {}, SolveStats* stats = nullptr);

// Dense LU with partial pivoting; `a` is row-major n*n. Intended for small
// oracle systems, not for meshes.
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b);

}  // namespace parec::lin
