#ifndef ACRLB_CLI_HPP
#define ACRLB_CLI_HPP

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <CLI11.hpp>

#include "acrlb/bound.hpp"
#include "acrlb/error.hpp"
#include "acrlb/estimation.hpp"
#include "acrlb/experiments.hpp"
#include "acrlb/geometry.hpp"
#include "acrlb/model.hpp"
#include "acrlb/model_spec.hpp"
#include "acrlb/report.hpp"
#include "acrlb/selftest.hpp"

namespace acrlb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitComputational = 2;
inline constexpr int kExitSelftestFailed = 3;

/// Raised while interpreting a flag; the message always starts with the flag name.
class FlagError : public std::runtime_error {
 public:
  FlagError(const std::string& flag, const std::string& what)
      : std::runtime_error(flag + ": " + what) {}
};

//------------------------------------------------------------------------------
// Value parsing
//------------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& flag, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (text.empty() || ec != std::errc() || ptr != last) {
    throw FlagError(flag, "'" + text + "' is not a decimal number");
  }
  if (!std::isfinite(v)) throw FlagError(flag, "'" + text + "' is not finite");
  return v;
}

inline std::uint64_t parse_u64(const std::string& flag, const std::string& text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw FlagError(flag, "'" + text + "' is not a non-negative integer");
  }
  return v;
}

inline int parse_int(const std::string& flag, const std::string& text) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw FlagError(flag, "'" + text + "' is not an integer");
  }
  return v;
}

inline std::vector<double> parse_double_list(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split(text, ',')) out.push_back(parse_double(flag, tok));
  return out;
}

inline Vector parse_vector(const std::string& flag, const std::string& text) {
  const auto xs = parse_double_list(flag, text);
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

/// Grid points separated by ';', components by ','.
inline std::vector<Vector> parse_vector_grid(const std::string& flag, const std::string& text) {
  std::vector<Vector> out;
  for (const auto& point : split(text, ';')) out.push_back(parse_vector(flag, point));
  return out;
}

inline std::vector<int> parse_int_list(const std::string& flag, const std::string& text) {
  std::vector<int> out;
  for (const auto& tok : split(text, ',')) out.push_back(parse_int(flag, tok));
  return out;
}

/// Runs `fn`, turning any library validation error into a FlagError for `flag`.
template <class Fn>
auto for_flag(const std::string& flag, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (is_computational(e.kind())) throw;
    throw FlagError(flag, e.what());
  }
}

//------------------------------------------------------------------------------
// Raw flag values
//------------------------------------------------------------------------------

struct RawFlags {
  std::string model = "builtin:bernoulli";
  std::string theta, alpha, n, epsilon, delta, estimator, trials, seed, budget, threads;
  std::string out;
  std::string format = "csv";
};

/// Everything a subcommand may need, validated before any computation.
struct Resolved {
  FamilyPtr family;
  std::vector<Vector> thetas;
  std::vector<double> alphas;
  std::vector<int> ns;
  std::vector<double> epsilons;
  std::optional<Pmf> delta;
  std::vector<std::string> estimators;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  EnumerationOptions enumeration;
  unsigned threads = 0;
  ReportFormat format = ReportFormat::Csv;
};

struct Defaults {
  std::vector<Vector> thetas;
  std::vector<double> alphas;
  std::vector<int> ns;
  std::size_t trials = 1;
  bool single_theta = false;
};

inline std::uint64_t default_budget(std::ostream& err) {
  const char* env = std::getenv("ACRLB_BUDGET");
  if (env == nullptr || *env == '\0') return kDefaultBudget;
  const std::uint64_t b = parse_u64("ACRLB_BUDGET", env);
  if (b == 0) throw FlagError("ACRLB_BUDGET", "must be at least 1");
  err << "acrlb: enumeration budget " << b << " from ACRLB_BUDGET\n";
  return b;
}

inline Resolved resolve(const RawFlags& f, const Defaults& d, std::ostream& err) {
  Resolved r;
  r.format = for_flag("--format", [&] { return parse_report_format(f.format); });

  std::optional<ModelSpec> spec;
  r.family = for_flag("--model", [&] {
    if (f.model.rfind("builtin:", 0) == 0) return make_builtin_family(f.model.substr(8));
    spec = load_model_spec(f.model);
    return spec->family;
  });

  if (!f.theta.empty()) {
    r.thetas = parse_vector_grid("--theta", f.theta);
  } else if (spec && spec->theta) {
    r.thetas = {*spec->theta};
  } else if (r.family->name() == "bernoulli" && !d.thetas.empty()) {
    r.thetas = d.thetas;
  } else {
    throw FlagError("--theta", "required for model " + r.family->name());
  }
  if (d.single_theta && r.thetas.size() != 1) {
    throw FlagError("--theta", "expects a single parameter vector");
  }
  for (const auto& t : r.thetas) for_flag("--theta", [&] { require_domain(*r.family, t); });

  r.alphas = f.alpha.empty() ? d.alphas : parse_double_list("--alpha", f.alpha);
  if (r.alphas.empty()) throw FlagError("--alpha", "required");
  for (double a : r.alphas) for_flag("--alpha", [&] { require_alpha(a); });

  if (!f.n.empty()) {
    r.ns = parse_int_list("--n", f.n);
  } else {
    r.ns = d.ns;
  }
  for (int n : r.ns) {
    if (n < 1) throw FlagError("--n", "every sample size must be at least 1");
  }

  if (!f.delta.empty()) {
    const Vector delta = parse_vector("--delta", f.delta);
    r.delta = for_flag("--delta", [&] {
      return detail::validated_delta(delta, r.family->alphabet_size());
    });
  } else if (spec && spec->contamination) {
    r.delta = spec->contamination->delta();
  }
  if (!f.epsilon.empty()) {
    r.epsilons = parse_double_list("--epsilon", f.epsilon);
  } else if (spec && spec->contamination) {
    r.epsilons = {spec->contamination->epsilon()};
  } else {
    r.epsilons = {0.0};
  }
  for (double eps : r.epsilons) {
    if (!(eps >= 0.0 && eps < 1.0)) throw FlagError("--epsilon", "must lie in [0, 1)");
    if (eps > 0.0 && !r.delta) throw FlagError("--delta", "required when --epsilon > 0");
  }

  r.estimators = f.estimator.empty() ? std::vector<std::string>{"sample_mean"}
                                     : split(f.estimator, ',');
  for (const auto& name : r.estimators) {
    for_flag("--estimator", [&] { return make_estimator(r.family, name); });
  }

  if (f.trials.empty()) {
    r.trials = d.trials;
  } else {
    r.trials = parse_u64("--trials", f.trials);
    if (r.trials < 1) throw FlagError("--trials", "must be at least 1");
  }
  if (!f.seed.empty()) r.seed = parse_u64("--seed", f.seed);

  if (f.budget.empty()) {
    r.enumeration.budget = default_budget(err);
  } else {
    r.enumeration.budget = parse_u64("--budget", f.budget);
    if (r.enumeration.budget < 1) throw FlagError("--budget", "must be at least 1");
  }
  if (!f.threads.empty()) {
    const int t = parse_int("--threads", f.threads);
    if (t < 0) throw FlagError("--threads", "must be non-negative (0 = machine parallelism)");
    r.threads = static_cast<unsigned>(t);
  }
  r.enumeration.threads = r.threads;
  return r;
}

inline ExperimentConfig experiment_config(const Resolved& r, const RawFlags& f) {
  ExperimentConfig c;
  c.family = r.family;
  c.theta_star = r.thetas.front();
  c.theta_grid = r.thetas;
  c.alphas = r.alphas;
  c.ns = r.ns;
  c.epsilons = r.epsilons;
  c.delta = r.delta;
  c.trials = r.trials;
  c.seed = r.seed;
  c.estimators = r.estimators;
  c.output_path = f.out;
  c.output_format = f.format;
  c.enumeration = r.enumeration;
  c.threads = r.threads;
  return c;
}

//------------------------------------------------------------------------------
// Subcommands
//------------------------------------------------------------------------------

inline Report metric_report(const Resolved& r) {
  Report rep;
  rep.kind = "metric";
  rep.columns = {"family", "theta", "alpha", "metric", "min_eig"};
  for (const auto& theta : r.thetas) {
    for (double alpha : r.alphas) {
      const MetricMatrix g = alpha_fisher_matrix(*r.family, theta, alpha);
      rep.rows.push_back({r.family->name(), vector_cell(theta), alpha, matrix_cell(g.entries),
                          g.min_eigenvalue()});
    }
  }
  return rep;
}

/// Divergences from p_theta to delta, or between the first two --theta points.
inline Report divergence_report(const Resolved& r) {
  const Pmf p = pmf_eval(*r.family, r.thetas.front());
  std::optional<Pmf> q = r.delta;
  if (!q) {
    if (r.thetas.size() != 2) {
      throw FlagError("--theta", "give two points 'p;q' or a --delta distribution");
    }
    q = pmf_eval(*r.family, r.thetas[1]);
  }
  Report rep;
  rep.kind = "divergence";
  rep.columns = {"alpha", "p", "q", "divergence", "kl"};
  const double kl = kl_divergence(p, *q);
  for (double alpha : r.alphas) {
    const double d = alpha == 0.0 ? kl : bhhj_divergence(p, *q, alpha);
    rep.rows.push_back({alpha, p.probs(), q->probs(), d, kl});
  }
  return rep;
}

inline Report escort_report(const Resolved& r) {
  Report rep;
  rep.kind = "escort";
  rep.columns = {"theta", "alpha", "pmf", "escort"};
  for (const auto& theta : r.thetas) {
    const Pmf p = pmf_eval(*r.family, theta);
    for (double alpha : r.alphas) {
      rep.rows.push_back({vector_cell(theta), alpha, p.probs(), escort(p, alpha).probs()});
    }
  }
  return rep;
}

inline Report bound_report(const Resolved& r) {
  Report rep;
  rep.kind = "bound";
  rep.columns = {"family", "theta", "alpha", "n", "bound"};
  for (const auto& theta : r.thetas) {
    for (double alpha : r.alphas) {
      for (int n : r.ns) {
        const Matrix b = generalized_crlb(r.family, theta, alpha, n, r.enumeration);
        rep.rows.push_back({r.family->name(), vector_cell(theta), alpha,
                            static_cast<std::int64_t>(n), matrix_cell(b)});
      }
    }
  }
  return rep;
}

inline void add_flag(CLI::App* sub, RawFlags& f, const std::string& name) {
  static const std::vector<std::pair<std::string, std::string>> help{
      {"model", "builtin:bernoulli | builtin:categorical:M | builtin:binomial:N | spec file"},
      {"theta", "parameter vector 'a,b' (grid points separated by ';')"},
      {"alpha", "alpha value or comma-separated list"},
      {"n", "sample size or comma-separated list"},
      {"epsilon", "contamination proportion(s)"},
      {"delta", "contaminating pmf, comma-separated"},
      {"estimator", "sample_mean | mle | bhhj:<alpha> (comma-separated)"},
      {"trials", "Monte Carlo trials"},
      {"seed", "base seed (u64)"},
      {"budget", "enumeration budget (overrides ACRLB_BUDGET)"},
      {"threads", "worker cap, 0 = machine parallelism"},
      {"out", "output path (default: standard output)"},
      {"format", "csv | json"}};
  std::string* target = nullptr;
  if (name == "model") target = &f.model;
  if (name == "theta") target = &f.theta;
  if (name == "alpha") target = &f.alpha;
  if (name == "n") target = &f.n;
  if (name == "epsilon") target = &f.epsilon;
  if (name == "delta") target = &f.delta;
  if (name == "estimator") target = &f.estimator;
  if (name == "trials") target = &f.trials;
  if (name == "seed") target = &f.seed;
  if (name == "budget") target = &f.budget;
  if (name == "threads") target = &f.threads;
  if (name == "out") target = &f.out;
  if (name == "format") target = &f.format;
  const auto it = std::find_if(help.begin(), help.end(), [&](const auto& h) { return h.first == name; });
  sub->add_option("--" + name, *target, it->second)->allow_extra_args(false);
}

inline int emit(const Report& rep, const Resolved& r, const RawFlags& f, std::ostream& out,
                std::ostream& err) {
  if (f.out.empty()) {
    write_report(rep, out, r.format);
  } else {
    emit_report(rep, f.out, f.format);
    err << "acrlb: wrote " << f.out << '\n';
  }
  return kExitOk;
}

/// Parses `args` (without the program name), runs the subcommand and returns the exit code:
/// 0 success, 1 validation error, 2 computational error, 3 selftest failure.
inline int parse_and_dispatch(const std::vector<std::string>& args, std::ostream& out,
                              std::ostream& err) {
  CLI::App app{"Generalized Cramer-Rao bounds under the alpha-Fisher metric", "acrlb"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  RawFlags f;

  struct Sub {
    const char* name;
    const char* help;
    std::vector<std::string> flags;
  };
  const std::vector<Sub> subs{
      {"metric", "alpha-Fisher metric at theta", {"model", "theta", "alpha", "out", "format"}},
      {"divergence",
       "BHHJ divergence from p_theta to --delta (or between two --theta points)",
       {"model", "theta", "alpha", "delta", "out", "format"}},
      {"escort", "escort distribution of p_theta", {"model", "theta", "alpha", "out", "format"}},
      {"bound", "generalized Cramer-Rao bound",
       {"model", "theta", "alpha", "n", "budget", "threads", "out", "format"}},
      {"gap", "escort covariance, bound and gap for an unbiased estimator",
       {"model", "theta", "alpha", "n", "estimator", "budget", "threads", "out", "format"}},
      {"fit", "contamination study: BHHJ fits vs the MLE",
       {"model", "theta", "alpha", "n", "epsilon", "delta", "trials", "seed", "threads", "out",
        "format"}},
      {"sweep", "bound gap over theta x alpha x n grids",
       {"model", "theta", "alpha", "n", "estimator", "budget", "threads", "out", "format"}},
      {"diagnose", "asymptotic covariance diagnostic",
       {"model", "theta", "alpha", "n", "trials", "seed", "threads", "out", "format"}},
      {"selftest", "run the oracle suites", {"seed", "out", "format"}}};
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    for (const auto& flag : s.flags) add_flag(sub, f, flag);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "acrlb: " << e.what() << '\n';
    return kExitValidation;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    Defaults d;
    if (cmd == "metric" || cmd == "divergence" || cmd == "escort") {
      d.alphas = {0.0};
    } else if (cmd == "bound" || cmd == "gap") {
      d.alphas = {0.0};
      d.ns = {1};
    } else if (cmd == "sweep") {
      d.thetas = {Vector::Constant(1, 0.2), Vector::Constant(1, 0.3), Vector::Constant(1, 0.5),
                  Vector::Constant(1, 0.8)};
      d.alphas = {0.0, 0.25, 0.5, 1.0, 2.0};
      d.ns = {1, 2, 3, 5};
    } else if (cmd == "fit") {
      d.alphas = {1.0};
      d.ns = {100};
      d.trials = 100;
      d.single_theta = true;
    } else if (cmd == "diagnose") {
      d.alphas = {0.0};
      d.ns = {100};
      d.trials = 100;
      d.single_theta = true;
    } else if (cmd == "selftest") {
      d.alphas = {0.0};
      d.thetas = {Vector::Constant(1, 0.5)};
    }
    const Resolved r = resolve(f, d, err);

    Report rep;
    if (cmd == "metric") rep = metric_report(r);
    if (cmd == "divergence") rep = divergence_report(r);
    if (cmd == "escort") rep = escort_report(r);
    if (cmd == "bound") rep = bound_report(r);
    if (cmd == "gap" || cmd == "sweep") rep = run_bound_sweep(experiment_config(r, f));
    if (cmd == "fit") rep = run_contamination_study(experiment_config(r, f));
    if (cmd == "diagnose") rep = run_asymptotic_diagnostic(experiment_config(r, f));
    if (cmd == "selftest") rep = run_selftest(r.seed);
    err << "acrlb: " << cmd << " finished in " << std::fixed << std::setprecision(3)
        << rep.wall_clock_seconds << " s\n";
    emit(rep, r, f, out, err);
    if (cmd == "selftest" && !selftest_passed(rep)) {
      err << "acrlb: selftest failed\n";
      return kExitSelftestFailed;
    }
    return kExitOk;
  } catch (const FlagError& e) {
    err << "acrlb: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Error& e) {
    err << "acrlb: " << e.what() << '\n';
    return is_computational(e.kind()) ? kExitComputational : kExitValidation;
  } catch (const std::exception& e) {
    err << "acrlb: internal error: " << e.what() << '\n';
    return kExitComputational;
  }
}

}  // namespace acrlb::cli

#endif  // ACRLB_CLI_HPP
