#pragma once

// Compressed-column matrices and a sparse LU backend (SuiteSparse KLU).

#include <klu.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pffa/splitcircuit.hpp"

namespace pffa {

struct CscMatrix {
    std::size_t n = 0;
    std::vector<int> col_ptr;
    std::vector<int> row_idx;
    std::vector<double> values;

    std::size_t nnz() const { return values.size(); }

    double at(std::size_t row, std::size_t col) const {
        for (int k = col_ptr[col]; k < col_ptr[col + 1]; ++k)
            if (static_cast<std::size_t>(row_idx[k]) == row) return values[k];
        return 0.0;
    }

    std::vector<double> multiply(const std::vector<double>& x) const {
        std::vector<double> y(n, 0.0);
        for (std::size_t c = 0; c < n; ++c)
            for (int k = col_ptr[c]; k < col_ptr[c + 1]; ++k) y[row_idx[k]] += values[k] * x[c];
        return y;
    }
};

/// Sums triplets into CSC. The (row, col) stream of the previous call is
/// cached, so repeated assemblies with an unchanged stamp sequence skip the
/// sort and only scatter values.
class TripletCompressor {
  public:
    CscMatrix compress(std::size_t n, const std::vector<Triplet>& triplets) {
        if (!same_stream(n, triplets)) rebuild(n, triplets);
        CscMatrix m = pattern_;
        std::fill(m.values.begin(), m.values.end(), 0.0);
        for (std::size_t k = 0; k < triplets.size(); ++k) m.values[slot_[k]] += triplets[k].value;
        return m;
    }

  private:
    bool same_stream(std::size_t n, const std::vector<Triplet>& t) const {
        if (n != pattern_.n || t.size() != keys_.size()) return false;
        for (std::size_t k = 0; k < t.size(); ++k)
            if (keys_[k].first != t[k].row || keys_[k].second != t[k].col) return false;
        return true;
    }

    void rebuild(std::size_t n, const std::vector<Triplet>& t) {
        for (const auto& e : t)
            if (e.row >= n || e.col >= n) throw std::out_of_range("triplet index outside system dimension");
        keys_.resize(t.size());
        for (std::size_t k = 0; k < t.size(); ++k) keys_[k] = {t[k].row, t[k].col};
        std::vector<std::size_t> order(t.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return keys_[a].second != keys_[b].second ? keys_[a].second < keys_[b].second
                                                      : keys_[a].first < keys_[b].first;
        });
        pattern_ = CscMatrix{};
        pattern_.n = n;
        pattern_.col_ptr.assign(n + 1, 0);
        slot_.assign(t.size(), 0);
        for (std::size_t i = 0; i < order.size(); ++i) {
            const auto& key = keys_[order[i]];
            if (i == 0 || key != keys_[order[i - 1]]) {
                pattern_.row_idx.push_back(static_cast<int>(key.first));
                pattern_.col_ptr[key.second + 1]++;
            }
            slot_[order[i]] = pattern_.row_idx.size() - 1;
        }
        for (std::size_t c = 0; c < n; ++c) pattern_.col_ptr[c + 1] += pattern_.col_ptr[c];
        pattern_.values.assign(pattern_.row_idx.size(), 0.0);
    }

    CscMatrix pattern_;
    std::vector<std::pair<std::size_t, std::size_t>> keys_;
    std::vector<std::size_t> slot_;
};

class SingularMatrixError : public std::runtime_error {
  public:
    enum class Kind { Structural, Numerical };

    SingularMatrixError(Kind kind, std::size_t index, const std::string& what)
        : std::runtime_error(what), kind_(kind), index_(index) {}
    Kind kind() const { return kind_; }
    /// Column of the offending pivot in the original ordering.
    std::size_t index() const { return index_; }

  private:
    Kind kind_;
    std::size_t index_;
};

/// KLU factorization with the symbolic analysis reused while the sparsity
/// pattern stays the same. Pivots are chosen afresh on every factorization.
class SparseLuSolver {
  public:
    explicit SparseLuSolver(double pivot_threshold = 1e-12) : threshold_(pivot_threshold) {
        klu_defaults(&common_);
    }
    ~SparseLuSolver() { release(true); }
    SparseLuSolver(const SparseLuSolver&) = delete;
    SparseLuSolver& operator=(const SparseLuSolver&) = delete;

    std::vector<double> solve(const CscMatrix& a, const std::vector<double>& b) {
        if (b.size() != a.n) throw std::invalid_argument("right-hand side length does not match matrix");
        factor(a);
        std::vector<double> x = b;
        klu_solve(symbolic_, numeric_, static_cast<int>(a.n), 1, x.data(), &common_);
        // One step of iterative refinement.
        std::vector<double> r = a.multiply(x);
        for (std::size_t i = 0; i < a.n; ++i) r[i] = b[i] - r[i];
        klu_solve(symbolic_, numeric_, static_cast<int>(a.n), 1, r.data(), &common_);
        for (std::size_t i = 0; i < a.n; ++i) x[i] += r[i];
        return x;
    }

  private:
    void factor(const CscMatrix& a) {
        if (a.n == 0) throw std::invalid_argument("empty system");
        if (!symbolic_ || a.col_ptr != col_ptr_ || a.row_idx != row_idx_) {
            release(true);
            col_ptr_ = a.col_ptr;
            row_idx_ = a.row_idx;
            symbolic_ = klu_analyze(static_cast<int>(a.n), col_ptr_.data(), row_idx_.data(), &common_);
            if (!symbolic_) throw std::runtime_error("sparse LU analysis failed");
            if (symbolic_->structural_rank < static_cast<int>(a.n)) {
                const auto rank = static_cast<std::size_t>(symbolic_->structural_rank);
                release(true);
                throw SingularMatrixError(SingularMatrixError::Kind::Structural, rank,
                                          "structurally singular matrix (structural rank " +
                                              std::to_string(rank) + ")");
            }
        }
        release(false);
        common_.halt_if_singular = 1;
        numeric_ = klu_factor(col_ptr_.data(), row_idx_.data(), const_cast<double*>(a.values.data()), symbolic_,
                              &common_);
        if (!numeric_ || common_.status == KLU_SINGULAR) {
            const auto col = static_cast<std::size_t>(common_.singular_col);
            release(false);
            throw SingularMatrixError(SingularMatrixError::Kind::Numerical, col,
                                      "numerically singular matrix (zero pivot in column " +
                                          std::to_string(col) + ")");
        }
        // Reciprocal condition estimate from the pivots, reported at the smallest one.
        double lo = INFINITY, hi = 0.0;
        std::size_t at = 0;
        for (std::size_t k = 0; k < a.n; ++k) {
            const double u = std::abs(static_cast<const double*>(numeric_->Udiag)[k]);
            if (u < lo) {
                lo = u;
                at = static_cast<std::size_t>(symbolic_->Q[k]);
            }
            hi = std::max(hi, u);
        }
        if (!(lo > threshold_ * hi)) {
            release(false);
            throw SingularMatrixError(SingularMatrixError::Kind::Numerical, at,
                                      "numerically singular matrix (pivot ratio below threshold in column " +
                                          std::to_string(at) + ")");
        }
    }

    void release(bool symbolic) {
        if (numeric_) klu_free_numeric(&numeric_, &common_);
        if (symbolic && symbolic_) klu_free_symbolic(&symbolic_, &common_);
    }

    double threshold_;
    klu_common common_{};
    klu_symbolic* symbolic_ = nullptr;
    klu_numeric* numeric_ = nullptr;
    std::vector<int> col_ptr_;
    std::vector<int> row_idx_;
};

/// Coordinate-format text dump of a matrix.
inline void write_matrix_market(std::ostream& os, const CscMatrix& a) {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << a.n << ' ' << a.n << ' ' << a.nnz() << '\n';
    os.precision(17);
    for (std::size_t c = 0; c < a.n; ++c)
        for (int k = a.col_ptr[c]; k < a.col_ptr[c + 1]; ++k)
            os << a.row_idx[k] + 1 << ' ' << c + 1 << ' ' << a.values[k] << '\n';
}

}  // namespace pffa
