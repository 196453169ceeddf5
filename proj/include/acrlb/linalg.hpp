#ifndef ACRLB_LINALG_HPP
#define ACRLB_LINALG_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <sstream>
#include <thread>
#include <vector>

#include "acrlb/error.hpp"

namespace acrlb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Largest condition number accepted before a symmetric solve is refused.
inline constexpr double kMaxConditionNumber = 1e12;

/// Neumaier-compensated running sum of equally shaped matrices (1x1 for scalars).
class CompensatedSum {
 public:
  CompensatedSum() = default;
  CompensatedSum(Eigen::Index rows, Eigen::Index cols)
      : sum_(Matrix::Zero(rows, cols)), comp_(Matrix::Zero(rows, cols)) {}

  template <class Derived>
  void add(const Eigen::MatrixBase<Derived>& term) {
    for (Eigen::Index j = 0; j < sum_.cols(); ++j) {
      for (Eigen::Index i = 0; i < sum_.rows(); ++i) add_entry(i, j, term(i, j));
    }
  }

  void add_entry(Eigen::Index i, Eigen::Index j, double x) {
    const double s = sum_(i, j);
    const double t = s + x;
    if (std::abs(s) >= std::abs(x)) {
      comp_(i, j) += (s - t) + x;
    } else {
      comp_(i, j) += (x - t) + s;
    }
    sum_(i, j) = t;
  }

  void add_scalar(double x) { add_entry(0, 0, x); }

  void merge(const CompensatedSum& other) {
    add(other.sum_);
    comp_ += other.comp_;
  }

  Matrix value() const { return sum_ + comp_; }
  double scalar() const { return sum_(0, 0) + comp_(0, 0); }

 private:
  Matrix sum_;
  Matrix comp_;
};

/// Compensated sum of a scalar sequence in the given order.
template <class Range>
double compensated_total(const Range& values) {
  CompensatedSum acc(1, 1);
  for (double v : values) acc.add_scalar(v);
  return acc.scalar();
}

/// Outcomes are reduced in fixed-size blocks whose partials are merged in block
/// order, so the result does not depend on how many threads did the work.
inline constexpr std::size_t kBlockSize = 4096;

inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs body(block) for every block in [0, num_blocks) on up to `threads` workers.
template <class Body>
void parallel_for_blocks(std::size_t num_blocks, unsigned threads, Body&& body) {
  threads = std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(num_blocks, 1));
  if (threads <= 1) {
    for (std::size_t b = 0; b < num_blocks; ++b) body(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failures(threads);
  {
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t b = next++; b < num_blocks; b = next++) body(b);
        } catch (...) {
          failures[w] = std::current_exception();
          next = num_blocks;
        }
      });
    }
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

/// Sum of term(i) over i in [0, count) with compensated block partials combined in
/// block order. `term` must write its contribution into the accumulator it is given.
template <class Term>
Matrix ordered_sum(std::size_t count, Eigen::Index rows, Eigen::Index cols, unsigned threads,
                   Term&& term) {
  const std::size_t num_blocks = (count + kBlockSize - 1) / kBlockSize;
  std::vector<CompensatedSum> partials(num_blocks, CompensatedSum(rows, cols));
  parallel_for_blocks(num_blocks, threads, [&](std::size_t b) {
    const std::size_t end = std::min(count, (b + 1) * kBlockSize);
    for (std::size_t i = b * kBlockSize; i < end; ++i) term(partials[b], i);
  });
  CompensatedSum total(rows, cols);
  for (const auto& p : partials) total.merge(p);
  return total.value();
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline double min_eigenvalue(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(a), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

/// Max-entry relative deviation: max|a - b| / max|reference|.
inline double relative_deviation(const Matrix& a, const Matrix& reference) {
  const double scale = reference.cwiseAbs().maxCoeff();
  const double diff = (a - reference).cwiseAbs().maxCoeff();
  if (scale == 0.0) return diff;
  return diff / scale;
}

/// Cholesky factor of a symmetric positive-definite matrix whose condition number
/// is at most kMaxConditionNumber; IllConditioned otherwise.
class SpdFactor {
 public:
  explicit SpdFactor(const Matrix& a, const char* what = "matrix") {
    const Matrix s = symmetrize(a);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || !std::isfinite(hi) || hi / lo > kMaxConditionNumber) {
      std::ostringstream msg;
      msg << what << " is not safely invertible (eigenvalues in [" << lo << ", " << hi << "])";
      throw Error(ErrorKind::IllConditioned, msg.str());
    }
    llt_.compute(s);
    condition_ = hi / lo;
  }

  Matrix solve(const Matrix& b) const { return llt_.solve(b); }
  Vector solve(const Vector& b) const { return llt_.solve(b); }
  Matrix inverse() const {
    const auto k = llt_.matrixLLT().rows();
    return symmetrize(llt_.solve(Matrix::Identity(k, k)));
  }
  double condition_number() const { return condition_; }

 private:
  Eigen::LLT<Matrix> llt_;
  double condition_ = 1.0;
};

}  // namespace acrlb

#endif  // ACRLB_LINALG_HPP
