#ifndef ACRLB_MODEL_HPP
#define ACRLB_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "acrlb/error.hpp"
#include "acrlb/linalg.hpp"
#include "acrlb/rng.hpp"

namespace acrlb {

/// Parameters closer than this to the boundary of the open domain are rejected.
inline constexpr double kDomainMargin = 1e-9;

/// Default cap on the number of outcomes an exact enumeration may visit.
inline constexpr std::uint64_t kDefaultBudget = std::uint64_t{1} << 20;

struct EnumerationOptions {
  std::uint64_t budget = kDefaultBudget;
  unsigned threads = 1;  // 0 = hardware concurrency
};

using Outcome = int;
using Sample = std::vector<Outcome>;

//------------------------------------------------------------------------------
// Alphabet and Pmf
//------------------------------------------------------------------------------

class Alphabet {
 public:
  explicit Alphabet(int size) : Alphabet(default_labels(size)) {}

  explicit Alphabet(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.size() < 2) {
      throw Error(ErrorKind::InvalidArgument, "alphabet needs at least 2 symbols");
    }
    std::unordered_set<std::string> seen(labels_.begin(), labels_.end());
    if (seen.size() != labels_.size()) {
      throw Error(ErrorKind::InvalidArgument, "alphabet labels must be distinct");
    }
  }

  int size() const noexcept { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  friend bool operator==(const Alphabet&, const Alphabet&) = default;

 private:
  static std::vector<std::string> default_labels(int size) {
    if (size < 2) throw Error(ErrorKind::InvalidArgument, "alphabet needs at least 2 symbols");
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) out.push_back(std::to_string(i));
    return out;
  }

  std::vector<std::string> labels_;
};

/// Strictly positive probability vector summing to one within 1e-12.
class Pmf {
 public:
  static constexpr double kSumTolerance = 1e-12;

  explicit Pmf(Vector probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) throw Error(ErrorKind::ValidationError, "pmf needs at least 2 entries");
    for (Eigen::Index i = 0; i < probs_.size(); ++i) {
      if (!(probs_[i] > 0.0) || !std::isfinite(probs_[i])) {
        std::ostringstream msg;
        msg << "pmf entry " << i << " = " << probs_[i] << " is not strictly positive";
        throw Error(ErrorKind::ValidationError, msg.str());
      }
    }
    const double total = compensated_total(std::span<const double>(probs_.data(), probs_.size()));
    if (std::abs(total - 1.0) > kSumTolerance) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "pmf entries sum to " << total << ", not 1";
      throw Error(ErrorKind::ValidationError, msg.str());
    }
  }

  Pmf(std::initializer_list<double> probs)
      : Pmf(Eigen::Map<const Vector>(probs.begin(), static_cast<Eigen::Index>(probs.size()))) {}

  static Pmf uniform(int m) { return Pmf(Vector::Constant(m, 1.0 / m)); }

  int size() const noexcept { return static_cast<int>(probs_.size()); }
  double operator[](int i) const { return probs_[i]; }
  const Vector& probs() const noexcept { return probs_; }

 private:
  Vector probs_;
};

inline void require_same_support(const Pmf& p, const Pmf& q) {
  if (p.size() != q.size()) {
    std::ostringstream msg;
    msg << "alphabet sizes differ (" << p.size() << " vs " << q.size() << ")";
    throw Error(ErrorKind::SupportMismatch, msg.str());
  }
}

//------------------------------------------------------------------------------
// Parametric families
//------------------------------------------------------------------------------

/// theta -> p_theta on a finite alphabet, with analytic partial derivatives.
///
/// The unchecked members evaluate the closed forms without a domain test; callers
/// outside the optimizer go through pmf_eval / family_jacobian / score instead.
/// Every family also carries an unconstrained chart eta <-> theta for fitting.
class ParametricFamily {
 public:
  virtual ~ParametricFamily() = default;

  virtual std::string name() const = 0;
  virtual const Alphabet& alphabet() const = 0;
  virtual int dim() const = 0;
  virtual std::string domain_description() const = 0;

  /// True when theta lies in the open domain at least `margin` from its boundary.
  virtual bool contains(const Vector& theta, double margin = kDomainMargin) const = 0;

  virtual Vector probabilities(const Vector& theta) const = 0;
  virtual Vector log_probabilities(const Vector& theta) const {
    return probabilities(theta).array().log().matrix();
  }
  /// m x k matrix of d p_theta(x) / d theta_i.
  virtual Matrix jacobian(const Vector& theta) const = 0;

  virtual Vector to_unconstrained(const Vector& theta) const = 0;
  virtual Vector from_unconstrained(const Vector& eta) const = 0;
  /// k x k matrix d theta / d eta.
  virtual Matrix unconstrained_jacobian(const Vector& eta) const = 0;

  /// Maximum-likelihood estimate from outcome counts; may sit on the boundary.
  virtual Vector closed_form_mle(std::span<const double> counts) const = 0;

  /// Fisher information in closed form, when the family has one.
  virtual std::optional<Matrix> closed_form_fisher(const Vector&) const { return std::nullopt; }

  int alphabet_size() const { return alphabet().size(); }
};

using FamilyPtr = std::shared_ptr<const ParametricFamily>;

namespace detail {

inline double logistic(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double total_count(std::span<const double> counts) {
  return std::accumulate(counts.begin(), counts.end(), 0.0);
}

}  // namespace detail

/// Ber(theta) on {0, 1}: p = (1 - theta, theta).
class BernoulliFamily final : public ParametricFamily {
 public:
  std::string name() const override { return "bernoulli"; }
  const Alphabet& alphabet() const override { return alphabet_; }
  int dim() const override { return 1; }
  std::string domain_description() const override { return "theta in (0, 1)"; }

  bool contains(const Vector& theta, double margin) const override {
    return theta.size() == 1 && theta[0] > margin && theta[0] < 1.0 - margin;
  }
  Vector probabilities(const Vector& theta) const override {
    return Vector{{1.0 - theta[0], theta[0]}};
  }
  Matrix jacobian(const Vector&) const override { return Matrix{{-1.0}, {1.0}}; }

  Vector to_unconstrained(const Vector& theta) const override {
    return Vector::Constant(1, std::log(theta[0]) - std::log1p(-theta[0]));
  }
  Vector from_unconstrained(const Vector& eta) const override {
    return Vector::Constant(1, detail::logistic(eta[0]));
  }
  Matrix unconstrained_jacobian(const Vector& eta) const override {
    const double t = detail::logistic(eta[0]);
    return Matrix::Constant(1, 1, t * detail::logistic(-eta[0]));
  }

  Vector closed_form_mle(std::span<const double> counts) const override {
    return Vector::Constant(1, counts[1] / detail::total_count(counts));
  }
  std::optional<Matrix> closed_form_fisher(const Vector& theta) const override {
    return Matrix::Constant(1, 1, 1.0 / (theta[0] * (1.0 - theta[0])));
  }

 private:
  Alphabet alphabet_{2};
};

/// The full simplex on m symbols in mixture coordinates:
/// theta = (p_1, ..., p_{m-1}), p_m = 1 - sum(theta).
class CategoricalFamily final : public ParametricFamily {
 public:
  explicit CategoricalFamily(int m) : alphabet_(m) {}

  std::string name() const override { return "categorical:" + std::to_string(alphabet_.size()); }
  const Alphabet& alphabet() const override { return alphabet_; }
  int dim() const override { return alphabet_.size() - 1; }
  std::string domain_description() const override {
    return "theta_i > 0 and sum(theta) < 1 (" + std::to_string(dim()) + " coordinates)";
  }

  bool contains(const Vector& theta, double margin) const override {
    if (theta.size() != dim()) return false;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      if (!(theta[i] > margin)) return false;
    }
    return 1.0 - theta.sum() > margin;
  }
  Vector probabilities(const Vector& theta) const override {
    Vector p(alphabet_.size());
    p.head(dim()) = theta;
    p[dim()] = 1.0 - theta.sum();
    return p;
  }
  Matrix jacobian(const Vector&) const override {
    Matrix j = Matrix::Zero(alphabet_.size(), dim());
    j.topRows(dim()).setIdentity();
    j.row(dim()).setConstant(-1.0);
    return j;
  }

  // Multinomial log-odds against the last symbol.
  Vector to_unconstrained(const Vector& theta) const override {
    const double last = std::log(1.0 - theta.sum());
    return (theta.array().log() - last).matrix();
  }
  Vector from_unconstrained(const Vector& eta) const override {
    const double shift = std::max(0.0, eta.maxCoeff());
    const Vector e = (eta.array() - shift).exp().matrix();
    const double denom = std::exp(-shift) + e.sum();
    return e / denom;
  }
  Matrix unconstrained_jacobian(const Vector& eta) const override {
    const Vector t = from_unconstrained(eta);
    Matrix j = -t * t.transpose();
    j.diagonal() += t;
    return j;
  }

  Vector closed_form_mle(std::span<const double> counts) const override {
    const double total = detail::total_count(counts);
    Vector theta(dim());
    for (int i = 0; i < dim(); ++i) theta[i] = counts[static_cast<std::size_t>(i)] / total;
    return theta;
  }

 private:
  Alphabet alphabet_;
};

/// Binomial(trials, theta) on {0, ..., trials}.
class BinomialFamily final : public ParametricFamily {
 public:
  explicit BinomialFamily(int trials) : trials_(trials), alphabet_(trials + 1) {}

  std::string name() const override { return "binomial:" + std::to_string(trials_); }
  const Alphabet& alphabet() const override { return alphabet_; }
  int dim() const override { return 1; }
  int trials() const noexcept { return trials_; }
  std::string domain_description() const override { return "theta in (0, 1)"; }

  bool contains(const Vector& theta, double margin) const override {
    return theta.size() == 1 && theta[0] > margin && theta[0] < 1.0 - margin;
  }
  Vector log_probabilities(const Vector& theta) const override {
    const double t = theta[0];
    Vector out(trials_ + 1);
    const double lg_n = std::lgamma(trials_ + 1.0);
    for (int x = 0; x <= trials_; ++x) {
      out[x] = lg_n - std::lgamma(x + 1.0) - std::lgamma(trials_ - x + 1.0) + x * std::log(t) +
               (trials_ - x) * std::log1p(-t);
    }
    return out;
  }
  Vector probabilities(const Vector& theta) const override {
    return log_probabilities(theta).array().exp().matrix();
  }
  Matrix jacobian(const Vector& theta) const override {
    const double t = theta[0];
    const Vector p = probabilities(theta);
    Matrix j(trials_ + 1, 1);
    for (int x = 0; x <= trials_; ++x) j(x, 0) = p[x] * (x / t - (trials_ - x) / (1.0 - t));
    return j;
  }

  Vector to_unconstrained(const Vector& theta) const override {
    return Vector::Constant(1, std::log(theta[0]) - std::log1p(-theta[0]));
  }
  Vector from_unconstrained(const Vector& eta) const override {
    return Vector::Constant(1, detail::logistic(eta[0]));
  }
  Matrix unconstrained_jacobian(const Vector& eta) const override {
    return Matrix::Constant(1, 1, detail::logistic(eta[0]) * detail::logistic(-eta[0]));
  }

  Vector closed_form_mle(std::span<const double> counts) const override {
    double successes = 0.0;
    for (std::size_t x = 0; x < counts.size(); ++x) successes += static_cast<double>(x) * counts[x];
    return Vector::Constant(1, successes / (trials_ * detail::total_count(counts)));
  }
  std::optional<Matrix> closed_form_fisher(const Vector& theta) const override {
    return Matrix::Constant(1, 1, trials_ / (theta[0] * (1.0 - theta[0])));
  }

 private:
  int trials_;
  Alphabet alphabet_;
};

inline FamilyPtr make_bernoulli() { return std::make_shared<const BernoulliFamily>(); }

inline FamilyPtr make_categorical(int m) {
  if (m < 2) throw Error(ErrorKind::InvalidArgument, "categorical family needs m >= 2");
  return std::make_shared<const CategoricalFamily>(m);
}

inline FamilyPtr make_binomial(int trials) {
  if (trials < 1) throw Error(ErrorKind::InvalidArgument, "binomial family needs trials >= 1");
  return std::make_shared<const BinomialFamily>(trials);
}

//------------------------------------------------------------------------------
// Checked evaluation
//------------------------------------------------------------------------------

inline std::string format_vector(const Vector& v) {
  std::ostringstream out;
  out.precision(17);
  out << '(';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v[i];
  out << ')';
  return out.str();
}

inline void require_domain(const ParametricFamily& family, const Vector& theta) {
  if (theta.size() != family.dim()) {
    std::ostringstream msg;
    msg << family.name() << " expects " << family.dim() << " parameter(s), got " << theta.size();
    throw Error(ErrorKind::DomainViolation, msg.str());
  }
  if (!family.contains(theta, kDomainMargin)) {
    throw Error(ErrorKind::DomainViolation, "theta = " + format_vector(theta) + " outside " +
                                                family.domain_description() + " for " +
                                                family.name());
  }
}

inline Pmf pmf_eval(const ParametricFamily& family, const Vector& theta) {
  require_domain(family, theta);
  Vector p = family.probabilities(theta);
  if (!(p.minCoeff() > 0.0)) {
    throw Error(ErrorKind::DomainViolation,
                "probabilities underflow at theta = " + format_vector(theta));
  }
  return Pmf(std::move(p));
}

inline Matrix family_jacobian(const ParametricFamily& family, const Vector& theta) {
  require_domain(family, theta);
  return family.jacobian(theta);
}

inline void require_outcome(const ParametricFamily& family, Outcome x) {
  if (x < 0 || x >= family.alphabet_size()) {
    throw Error(ErrorKind::SupportMismatch,
                "outcome " + std::to_string(x) + " outside the alphabet of " + family.name());
  }
}

/// Score s(theta; x) = grad_theta log p_theta(x).
inline Vector score(const ParametricFamily& family, const Vector& theta, Outcome x) {
  require_outcome(family, x);
  const Pmf p = pmf_eval(family, theta);
  return family.jacobian(theta).row(x).transpose() / p[x];
}

/// All scores at theta as an m x k matrix (row x = s(theta; x)).
inline Matrix score_matrix(const ParametricFamily& family, const Vector& theta) {
  const Pmf p = pmf_eval(family, theta);
  return p.probs().cwiseInverse().asDiagonal() * family.jacobian(theta);
}

//------------------------------------------------------------------------------
// Contamination
//------------------------------------------------------------------------------

class ContaminationSpec {
 public:
  ContaminationSpec(double epsilon, Pmf delta) : epsilon_(epsilon), delta_(std::move(delta)) {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) {
      std::ostringstream msg;
      msg << "epsilon = " << epsilon << " outside [0, 1)";
      throw Error(ErrorKind::ValidationError, msg.str());
    }
  }

  double epsilon() const noexcept { return epsilon_; }
  const Pmf& delta() const noexcept { return delta_; }

 private:
  double epsilon_;
  Pmf delta_;
};

/// (1 - epsilon) p_theta + epsilon delta.
inline Pmf mixture_pmf(const ParametricFamily& family, const Vector& theta,
                       const ContaminationSpec& spec) {
  const Pmf p = pmf_eval(family, theta);
  require_same_support(p, spec.delta());
  return Pmf((1.0 - spec.epsilon()) * p.probs() + spec.epsilon() * spec.delta().probs());
}

//------------------------------------------------------------------------------
// Sampling
//------------------------------------------------------------------------------

/// n i.i.d. draws by inverse-CDF lookup on a CounterRng stream seeded with `seed`.
inline Sample sample_iid(const Pmf& pmf, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "sample size must be at least 1");
  std::vector<double> cdf(static_cast<std::size_t>(pmf.size()));
  std::partial_sum(pmf.probs().begin(), pmf.probs().end(), cdf.begin());
  CounterRng rng(seed);
  Sample out(n);
  const int last = pmf.size() - 1;
  for (auto& x : out) {
    const double u = rng.uniform();
    x = last;
    for (int i = 0; i < last; ++i) {
      if (u < cdf[static_cast<std::size_t>(i)]) {
        x = i;
        break;
      }
    }
  }
  return out;
}

/// Outcome counts over an alphabet of size m.
inline std::vector<double> outcome_counts(std::span<const Outcome> data, int m) {
  std::vector<double> counts(static_cast<std::size_t>(m), 0.0);
  for (Outcome x : data) {
    if (x < 0 || x >= m) {
      throw Error(ErrorKind::SupportMismatch,
                  "outcome " + std::to_string(x) + " outside an alphabet of size " +
                      std::to_string(m));
    }
    counts[static_cast<std::size_t>(x)] += 1.0;
  }
  return counts;
}

//------------------------------------------------------------------------------
// i.i.d. product model
//------------------------------------------------------------------------------

/// Joint quantities of the product model, one row per outcome tuple in
/// lexicographic order (last coordinate fastest).
struct JointTable {
  std::size_t count = 0;
  Vector log_p;  // log p_theta(x)
  Matrix score;  // count x k, grad log p_theta(x)
};

class ProductModel {
 public:
  ProductModel(FamilyPtr base, int n) : base_(std::move(base)), n_(n) {
    if (!base_) throw Error(ErrorKind::InvalidArgument, "product model needs a base family");
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "product model needs n >= 1");
  }

  const ParametricFamily& base() const noexcept { return *base_; }
  const FamilyPtr& base_ptr() const noexcept { return base_; }
  int n() const noexcept { return n_; }
  int dim() const { return base_->dim(); }

  /// m^n, saturating at UINT64_MAX.
  std::uint64_t outcome_count() const noexcept {
    const auto m = static_cast<std::uint64_t>(base_->alphabet_size());
    std::uint64_t total = 1;
    for (int i = 0; i < n_; ++i) {
      if (total > std::numeric_limits<std::uint64_t>::max() / m) {
        return std::numeric_limits<std::uint64_t>::max();
      }
      total *= m;
    }
    return total;
  }

  void require_within(std::uint64_t budget) const {
    const auto count = outcome_count();
    if (count > budget) {
      std::ostringstream msg;
      msg << base_->name() << " with n = " << n_ << " has " << base_->alphabet_size() << "^" << n_
          << " outcomes, over the enumeration budget of " << budget;
      throw Error(ErrorKind::BudgetExceeded, msg.str());
    }
  }

  /// Writes the tuple at lexicographic position `index` into `tuple` (size n).
  void decode(std::uint64_t index, std::span<Outcome> tuple) const {
    const auto m = static_cast<std::uint64_t>(base_->alphabet_size());
    for (int i = n_ - 1; i >= 0; --i) {
      tuple[static_cast<std::size_t>(i)] = static_cast<Outcome>(index % m);
      index /= m;
    }
  }

  Sample decode(std::uint64_t index) const {
    Sample tuple(static_cast<std::size_t>(n_));
    decode(index, tuple);
    return tuple;
  }

  double log_pmf(const Vector& theta, std::span<const Outcome> x) const {
    const Vector lp = checked_log_probabilities(theta);
    double total = 0.0;
    for (Outcome xi : x) total += lp[checked(xi)];
    return total;
  }

  double pmf(const Vector& theta, std::span<const Outcome> x) const {
    return std::exp(log_pmf(theta, x));
  }

  /// Joint score: sum of per-coordinate scores.
  Vector score(const Vector& theta, std::span<const Outcome> x) const {
    const Matrix s = score_matrix(*base_, theta);
    Vector total = Vector::Zero(dim());
    for (Outcome xi : x) total += s.row(checked(xi)).transpose();
    return total;
  }

  /// Joint partial derivatives: p(x) times the joint score (product rule).
  Vector jacobian(const Vector& theta, std::span<const Outcome> x) const {
    return pmf(theta, x) * score(theta, x);
  }

  JointTable tabulate(const Vector& theta, const EnumerationOptions& opts = {}) const {
    require_within(opts.budget);
    const Vector lp = checked_log_probabilities(theta);
    const Matrix s = score_matrix(*base_, theta);
    JointTable table;
    table.count = static_cast<std::size_t>(outcome_count());
    table.log_p.resize(static_cast<Eigen::Index>(table.count));
    table.score.resize(static_cast<Eigen::Index>(table.count), dim());
    const std::size_t blocks = (table.count + kBlockSize - 1) / kBlockSize;
    parallel_for_blocks(blocks, opts.threads, [&](std::size_t b) {
      Sample tuple(static_cast<std::size_t>(n_));
      const std::size_t end = std::min(table.count, (b + 1) * kBlockSize);
      for (std::size_t i = b * kBlockSize; i < end; ++i) {
        decode(i, tuple);
        double log_p = 0.0;
        Vector sc = Vector::Zero(dim());
        for (Outcome xi : tuple) {
          log_p += lp[xi];
          sc += s.row(xi).transpose();
        }
        const auto row = static_cast<Eigen::Index>(i);
        table.log_p[row] = log_p;
        table.score.row(row) = sc.transpose();
      }
    });
    return table;
  }

 private:
  Vector checked_log_probabilities(const Vector& theta) const {
    pmf_eval(*base_, theta);
    return base_->log_probabilities(theta);
  }

  Eigen::Index checked(Outcome x) const {
    require_outcome(*base_, x);
    return x;
  }

  FamilyPtr base_;
  int n_;
};

inline ProductModel product_extend(FamilyPtr family, int n) {
  return ProductModel(std::move(family), n);
}

//------------------------------------------------------------------------------
// Tangent vectors
//------------------------------------------------------------------------------

/// The m-, e- and alpha-representations of one tangent vector at p.
struct TangentRep {
  Vector m_rep;
  Vector e_rep;
  Vector alpha_rep;
  double alpha = 0.0;

  static TangentRep from_mixture(Vector m_rep, const Pmf& p, double alpha) {
    if (m_rep.size() != p.size()) {
      throw Error(ErrorKind::SupportMismatch, "m-representation length differs from the pmf");
    }
    TangentRep rep;
    rep.e_rep = m_rep.cwiseQuotient(p.probs());
    rep.alpha_rep = rep.e_rep.cwiseProduct(p.probs().array().pow(alpha).matrix());
    rep.m_rep = std::move(m_rep);
    rep.alpha = alpha;
    return rep;
  }
};

/// Representations of the coordinate basis vector d/d theta_i (0-based i).
inline TangentRep tangent_representations(const ParametricFamily& family, const Vector& theta,
                                          double alpha, int i) {
  const Pmf p = pmf_eval(family, theta);
  if (i < 0 || i >= family.dim()) {
    throw Error(ErrorKind::IndexOutOfRange, "basis index " + std::to_string(i) +
                                                " outside [0, " + std::to_string(family.dim()) +
                                                ")");
  }
  return TangentRep::from_mixture(family.jacobian(theta).col(i), p, alpha);
}

}  // namespace acrlb

#endif  // ACRLB_MODEL_HPP
