#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hopchaos/disorder.hpp"
#include "hopchaos/gibbs_exact.hpp"
#include "hopchaos/hs_mixture.hpp"
#include "hopchaos/marginal_stats.hpp"
#include "hopchaos/parallel.hpp"
#include "hopchaos/rng.hpp"

namespace hopchaos {

enum class Regime { thm1_high_t, thm2_macro_breakdown, thm3_critical_chaos, thm4_critical_window };

inline std::string_view to_string(Regime r) noexcept {
  switch (r) {
    case Regime::thm1_high_t: return "thm1-highT";
    case Regime::thm2_macro_breakdown: return "thm2-macro-breakdown";
    case Regime::thm3_critical_chaos: return "thm3-critical-chaos";
    case Regime::thm4_critical_window: return "thm4-critical-window";
  }
  return "unknown";
}

inline Regime parse_regime(std::string_view s) {
  for (Regime r : {Regime::thm1_high_t, Regime::thm2_macro_breakdown, Regime::thm3_critical_chaos, Regime::thm4_critical_window}) {
    const auto name = to_string(r);
    if (s == name || s == name.substr(0, 4)) return r;
  }
  throw std::invalid_argument("unknown regime '" + std::string(s) + "'");
}

/// c * N^a, evaluated as ceil(c * N^a) (at least 1). Accepted forms are
/// products of factors: a number, "N", "N^a", "sqrt(N)"; e.g. "2", "N^0.4",
/// "0.5*N", "2*sqrt(N)".
struct ScalingRule {
  double coefficient = 1.0;
  double exponent = 0.0;
  std::string text = "1";

  static ScalingRule parse(std::string_view input) {
    std::string s;
    for (char c : input)
      if (c != ' ' && c != '\t') s.push_back(c);
    if (s.empty()) throw std::invalid_argument("empty scaling rule");
    ScalingRule rule{1.0, 0.0, s};
    std::size_t pos = 0;
    while (pos <= s.size()) {
      const std::size_t star = s.find('*', pos);
      const std::string f = s.substr(pos, star == std::string::npos ? std::string::npos : star - pos);
      if (f == "N") {
        rule.exponent += 1.0;
      } else if (f == "sqrt(N)") {
        rule.exponent += 0.5;
      } else if (f.rfind("N^", 0) == 0) {
        rule.exponent += parse_number(f.substr(2), input);
      } else {
        rule.coefficient *= parse_number(f, input);
      }
      if (star == std::string::npos) break;
      pos = star + 1;
    }
    if (!(rule.coefficient > 0.0)) throw std::invalid_argument("scaling rule '" + std::string(input) + "' must be positive");
    return rule;
  }

  std::size_t evaluate(std::size_t n) const {
    const double v = std::ceil(coefficient * std::pow(static_cast<double>(n), exponent) - 1e-9);
    return static_cast<std::size_t>(std::max(1.0, v));
  }

 private:
  static double parse_number(const std::string& f, std::string_view whole) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(f, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != f.size() || f.empty()) throw std::invalid_argument("cannot parse scaling rule '" + std::string(whole) + "'");
    return v;
  }
};

struct SweepConfig {
  Regime regime = Regime::thm1_high_t;
  double beta = 0.5;
  std::vector<std::size_t> n_list;
  ScalingRule m_rule = ScalingRule::parse("1");
  ScalingRule k_rule = ScalingRule::parse("N^0.4");
  std::size_t replicas = 20;
  std::uint64_t master_seed = 1;
  double epsilon = 0.5;       // covariance event radius
  double event_floor = 0.5;   // minimum fraction of replicas on the event
  std::size_t mc_samples = 20000;
  bool timing = false;
  QuadratureOptions quadrature{};

  /// Regime guards; throws std::invalid_argument.
  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("sweep: beta must be positive");
    if (replicas == 0) throw std::invalid_argument("sweep: replicas must be at least 1");
    for (std::size_t n : n_list)
      if (n < 2) throw std::invalid_argument("sweep: every N must be at least 2");
    switch (regime) {
      case Regime::thm1_high_t:
        if (beta >= 1.0) throw std::invalid_argument("thm1-highT requires beta < 1");
        if (k_rule.exponent + m_rule.exponent >= 1.0) throw std::invalid_argument("thm1-highT requires k M = o(N)");
        break;
      case Regime::thm2_macro_breakdown:
        if (beta >= 1.0) throw std::invalid_argument("thm2-macro-breakdown requires beta < 1");
        if (k_rule.exponent != 1.0 || k_rule.coefficient >= 1.0) throw std::invalid_argument("thm2-macro-breakdown requires k = rho N with rho < 1");
        break;
      case Regime::thm3_critical_chaos:
      case Regime::thm4_critical_window:
        if (beta != 1.0) throw std::invalid_argument(std::string(to_string(regime)) + " requires beta = 1");
        break;
    }
  }
};

struct SweepRow {
  Regime regime = Regime::thm1_high_t;
  double beta = 0.0;
  std::size_t n = 0, m = 0, k = 0, replica = 0;
  std::uint64_t seed = 0;
  bool event_ok = false;
  std::string method;
  double value = 0.0;
  double stderr_ = 0.0;
  double raw_value = 0.0;
  long long wall_ms = 0;
};

struct SweepError {
  std::size_t n = 0, replica = 0;
  std::string message;
};

struct SweepResult {
  SweepConfig config;
  std::vector<SweepRow> rows;
  std::vector<SweepError> errors;
};

inline void write_results_csv_header(std::ostream& out) {
  out << "regime,beta,N,M,k,replica,seed,event_ok,method,value,stderr,raw_value,wall_ms\n";
}

inline void write_results_csv_row(std::ostream& out, const SweepRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%.17g,%zu,%zu,%zu,%zu,%llu,%d,%s,%.17g,%.17g,%.17g,%lld\n", std::string(to_string(r.regime)).c_str(),
                r.beta, r.n, r.m, r.k, r.replica, static_cast<unsigned long long>(r.seed), r.event_ok ? 1 : 0, r.method.c_str(), r.value,
                r.stderr_, r.raw_value, r.wall_ms);
  out << buf;
}

/// Disorder seed of one sweep point.
inline std::uint64_t sweep_point_seed(std::uint64_t master, std::size_t n, std::size_t replica) { return derive_seed(master, n, replica); }

/// One (N, replica) point: sample disorder, check the covariance events, and
/// compute every applicable TV quantity. Failures become a single error row.
inline std::vector<SweepRow> run_sweep_point(const SweepConfig& cfg, std::size_t n, std::size_t replica, std::string* error = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t m = cfg.m_rule.evaluate(n);
  const std::size_t k = std::min(cfg.k_rule.evaluate(n), n);
  const std::uint64_t seed = sweep_point_seed(cfg.master_seed, n, replica);
  SweepRow base;
  base.regime = cfg.regime;
  base.beta = cfg.beta;
  base.n = n;
  base.m = m;
  base.k = k;
  base.replica = replica;
  base.seed = seed;
  std::vector<SweepRow> rows;
  auto add = [&](const TVReport& r) {
    SweepRow row = base;
    row.method = std::string(to_string(r.method));
    row.value = r.value;
    row.stderr_ = r.stderr_;
    row.raw_value = r.raw_value;
    rows.push_back(std::move(row));
  };
  try {
    auto xi = std::make_shared<const PatternMatrix>(sample_patterns(n, m, seed));
    base.event_ok = check_disorder_events(*xi, cfg.epsilon, k).holds();
    const MixingVariant variant = cfg.beta == 1.0 ? MixingVariant::critical : MixingVariant::standard;
    MixingMeasureSpec spec(GibbsModel(cfg.beta, xi), variant);
    if (m <= cfg.quadrature.max_dim) {
      const auto mix = normalize(spec, cfg.quadrature);
      const LikelihoodEvaluator ev(mix, k);
      MomentOptions mo;
      mo.seed = seed;
      mo.mc_samples = cfg.mc_samples;
      if (detail::lattice_feasible(ev, mo.lattice)) add(exact_tv_via_sufficient_stat(ev, mo.lattice));
      for (const auto& r : tv_bounds(ev, mo)) add(r);
      add(pinsker_tv_bound(*mix, k));
    } else {
      const auto samples = sample_mixing(spec, 3 * cfg.mc_samples, seed);
      const auto r2 = replica_moment_mc(spec, k, 2, samples);
      const auto r3 = replica_moment_mc(spec, k, 3, samples);
      const double kappa = r2.value - 1.0;
      add(TVReport::make(chi2_upper_bound(r2.value), TVMethod::chi2_upper, kappa > 0 ? 0.25 * r2.stderr_ / std::sqrt(kappa) : 0.0, seed));
      add(TVReport::make(kappa > 0 ? hoelder_lower_bound(kappa, r3.value + 1.0) : 0.0, TVMethod::hoelder_lower, 0.0, seed));
      add(pinsker_tv_bound(spec, k, samples, seed));
    }
    if (cfg.regime == Regime::thm2_macro_breakdown) add(gaussian_tv(m, GaussianProxy::from_model(cfg.beta, n, k, m).lambda));
  } catch (const std::exception& e) {
    rows.clear();
    SweepRow row = base;
    row.method = "error";
    row.value = row.raw_value = std::numeric_limits<double>::quiet_NaN();
    rows.push_back(std::move(row));
    if (error) *error = e.what();
  }
  if (cfg.timing) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    for (auto& r : rows) r.wall_ms = ms;
  }
  return rows;
}

/// All (N, replica) points run on the worker pool; rows are handed to `sink`
/// in (N, replica) order as soon as every earlier point has finished, so the
/// output does not depend on scheduling.
inline SweepResult run_sweep(const SweepConfig& cfg, const std::function<void(const SweepRow&)>& sink = {}) {
  cfg.validate();
  SweepResult result;
  result.config = cfg;
  const std::size_t tasks = cfg.n_list.size() * cfg.replicas;
  std::vector<std::vector<SweepRow>> rows(tasks);
  std::vector<std::string> errors(tasks);
  std::vector<char> done(tasks, 0);
  std::size_t flushed = 0;
  std::mutex mutex;
  parallel_for(tasks, [&](std::size_t t) {
    const std::size_t n = cfg.n_list[t / cfg.replicas];
    auto point = run_sweep_point(cfg, n, t % cfg.replicas, &errors[t]);
    std::lock_guard lock(mutex);
    rows[t] = std::move(point);
    done[t] = 1;
    while (flushed < tasks && done[flushed]) {
      if (sink)
        for (const auto& r : rows[flushed]) sink(r);
      ++flushed;
    }
  });
  for (std::size_t t = 0; t < tasks; ++t) {
    result.rows.insert(result.rows.end(), rows[t].begin(), rows[t].end());
    if (!errors[t].empty()) result.errors.push_back({cfg.n_list[t / cfg.replicas], t % cfg.replicas, errors[t]});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Summaries and fits

struct FitReport {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
  bool logit = false;
};

/// Least squares y = intercept + slope * x, optionally on logit(y).
inline FitReport fit_linear(std::span<const double> x, std::span<const double> y, bool logit = false) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_linear: size mismatch");
  if (x.size() < 3) throw std::invalid_argument("fit_linear: insufficient points (need at least 3)");
  std::vector<double> yy(y.begin(), y.end());
  if (logit)
    for (double& v : yy) {
      if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("fit_linear: logit needs values in (0, 1)");
      v = std::log(v / (1.0 - v));
    }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += yy[i];
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (yy[i] - my);
    syy += (yy[i] - my) * (yy[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_linear: predictor has no spread");
  FitReport f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  f.points = x.size();
  f.logit = logit;
  return f;
}

enum class Predictor { sqrt_km_over_n, k_over_sqrt_n };

inline std::string_view to_string(Predictor p) noexcept { return p == Predictor::sqrt_km_over_n ? "sqrt(kM/N)" : "k/sqrt(N)"; }

inline double predictor_value(Predictor p, std::size_t n, std::size_t m, std::size_t k) {
  const double nd = static_cast<double>(n), md = static_cast<double>(m), kd = static_cast<double>(k);
  return p == Predictor::sqrt_km_over_n ? std::sqrt(kd * md / nd) : kd / std::sqrt(nd);
}

inline Predictor default_predictor(Regime r) noexcept {
  return (r == Regime::thm3_critical_chaos || r == Regime::thm4_critical_window) ? Predictor::k_over_sqrt_n : Predictor::sqrt_km_over_n;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct PerNSummary {
  std::size_t n = 0, m = 0, k = 0;
  std::map<std::string, double> median_by_method;
  std::string primary_method;  // exact when available, else hoelder-lower
  double median_tv = std::numeric_limits<double>::quiet_NaN();
  double predictor = 0.0;
};

struct GaussianCurvePoint {
  std::size_t m = 0;
  double tv = 0.0;
};

struct SweepSummary {
  Regime regime = Regime::thm1_high_t;
  std::vector<PerNSummary> per_n;
  Predictor predictor = Predictor::sqrt_km_over_n;
  std::optional<FitReport> fit;
  std::string fit_error;
  double event_rate = 0.0;
  bool event_rate_ok = true;
  std::size_t error_rows = 0;
  std::vector<GaussianCurvePoint> gaussian_limit_curve;  // thm2 only
};

/// Points whose rows break hoelder-lower <= exact <= min(pinsker, chi2-upper)
/// by more than the reported standard errors plus `slack`.
inline std::size_t count_ordering_violations(std::span<const SweepRow> rows, double slack = 1e-9) {
  std::map<std::pair<std::size_t, std::size_t>, std::map<std::string, const SweepRow*>> by_point;
  for (const auto& r : rows) by_point[{r.n, r.replica}][r.method] = &r;
  std::size_t violations = 0;
  for (const auto& [key, methods] : by_point) {
    auto get = [&](const char* name) -> const SweepRow* {
      auto it = methods.find(name);
      return it == methods.end() ? nullptr : it->second;
    };
    const SweepRow* exact = get("exact");
    const SweepRow* lower = get("hoelder-lower");
    const SweepRow* chi2 = get("chi2-upper");
    const SweepRow* pinsker = get("pinsker");
    if (const SweepRow* mid = exact) {
      if (lower && lower->value > mid->value + lower->stderr_ + mid->stderr_ + slack) ++violations;
      if (chi2 && mid->value > chi2->value + chi2->stderr_ + mid->stderr_ + slack) ++violations;
      if (pinsker && mid->value > pinsker->value + pinsker->stderr_ + mid->stderr_ + slack) ++violations;
    } else if (lower) {
      if (chi2 && lower->value > chi2->value + chi2->stderr_ + slack) ++violations;
      if (pinsker && lower->value > pinsker->value + pinsker->stderr_ + slack) ++violations;
    }
  }
  return violations;
}

inline SweepSummary summarize(const SweepResult& result) {
  const SweepConfig& cfg = result.config;
  SweepSummary s;
  s.regime = cfg.regime;
  s.predictor = default_predictor(cfg.regime);
  std::size_t points = 0, on_event = 0;
  std::map<std::pair<std::size_t, std::size_t>, bool> point_event;
  for (const auto& r : result.rows) {
    point_event[{r.n, r.replica}] = r.event_ok;
    if (r.method == "error") ++s.error_rows;
  }
  for (const auto& [key, ok] : point_event) {
    ++points;
    on_event += ok ? 1 : 0;
  }
  s.event_rate = points ? static_cast<double>(on_event) / static_cast<double>(points) : 1.0;
  s.event_rate_ok = s.event_rate >= cfg.event_floor;

  for (std::size_t n : cfg.n_list) {
    PerNSummary p;
    p.n = n;
    p.m = cfg.m_rule.evaluate(n);
    p.k = std::min(cfg.k_rule.evaluate(n), n);
    p.predictor = predictor_value(s.predictor, p.n, p.m, p.k);
    std::map<std::string, std::vector<double>> values;
    for (const auto& r : result.rows)
      if (r.n == n && r.method != "error") values[r.method].push_back(r.value);
    for (auto& [method, v] : values) p.median_by_method[method] = median(v);
    if (p.median_by_method.count("exact")) p.primary_method = "exact";
    else if (p.median_by_method.count("hoelder-lower")) p.primary_method = "hoelder-lower";
    if (!p.primary_method.empty()) p.median_tv = p.median_by_method[p.primary_method];
    s.per_n.push_back(std::move(p));
  }
  std::vector<double> x, y;
  for (const auto& p : s.per_n)
    if (std::isfinite(p.median_tv)) x.push_back(p.predictor), y.push_back(p.median_tv);
  try {
    s.fit = fit_linear(x, y);
  } catch (const std::invalid_argument& e) {
    s.fit_error = e.what();
  }
  if (cfg.regime == Regime::thm2_macro_breakdown) {
    const double lambda = cfg.beta / (1.0 - cfg.beta) * cfg.k_rule.coefficient;
    for (std::size_t m = 1; m <= 1024; m *= 2) s.gaussian_limit_curve.push_back({m, gaussian_tv(m, lambda).value});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Oracle suite

struct OracleCheck {
  std::size_t instance = 0;
  std::string name;
  bool passed = false;
  double error = 0.0;
  double tolerance = 0.0;
};

struct OracleInstance {
  std::size_t n = 0, m = 0, k = 0;
  double beta = 0.0;
  std::uint64_t seed = 0;
};

struct OracleSummary {
  std::vector<OracleInstance> instances;
  std::vector<OracleCheck> checks;

  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const OracleCheck& c) { return !c.passed; }));
  }
  bool passed() const { return failures() == 0; }
};

/// Random instance parameters for the oracle suite: N in [6, 14], M in {1, 2},
/// beta in {0.3, 0.7, 1.0}, k in [1, min(6, N)].
inline OracleInstance oracle_instance(std::uint64_t seed, std::size_t index) {
  CounterRng rng(derive_seed(seed, index, 0x4f52));
  OracleInstance inst;
  inst.n = 6 + static_cast<std::size_t>(rng() % 9);
  inst.m = 1 + static_cast<std::size_t>(rng() % 2);
  constexpr double betas[3] = {0.3, 0.7, 1.0};
  inst.beta = betas[rng() % 3];
  inst.k = 1 + static_cast<std::size_t>(rng() % std::min<std::size_t>(6, inst.n));
  inst.seed = derive_seed(seed, index);
  return inst;
}

/// Compares every mixture, likelihood and moment quantity against brute-force
/// enumeration on small random instances. `perturbation` is added to entry 0
/// of each enumerated marginal, which must make the suite fail.
inline OracleSummary run_oracle_suite(std::uint64_t seed, std::size_t count = 50, double perturbation = 0.0) {
  OracleSummary out;
  out.instances.resize(count);
  std::vector<std::vector<OracleCheck>> per(count);
  parallel_for(count, [&](std::size_t i) {
    const OracleInstance inst = oracle_instance(seed, i);
    out.instances[i] = inst;
    auto& checks = per[i];
    auto add = [&](std::string name, double err, double tol) { checks.push_back({i, std::move(name), err <= tol, err, tol}); };
    try {
      auto xi = std::make_shared<const PatternMatrix>(sample_patterns(inst.n, inst.m, inst.seed));
      const GibbsModel model(inst.beta, xi);
      MarginalTable exact = exact_marginal(model, inst.k);
      exact.probabilities[0] += perturbation;
      const MixingMeasureSpec spec(model, inst.beta == 1.0 ? MixingVariant::critical : MixingVariant::standard);
      const auto mix = normalize(spec);

      add("normalization_identity", std::fabs(log_partition_from_mixture(*mix) - log_partition_function(model)), 1e-8);

      const MarginalTable mixture = mixture_marginal(*mix, inst.k);
      double diff = 0.0;
      for (std::size_t w = 0; w < exact.size(); ++w) diff = std::max(diff, std::fabs(mixture[w] - exact[w]));
      add("mixture_marginal", diff, 1e-8);

      const LikelihoodEvaluator ev(mix, inst.k);
      const double scale = std::ldexp(1.0, static_cast<int>(inst.k));
      double ldiff = 0.0;
      for (std::size_t w = 0; w < exact.size(); ++w) ldiff = std::max(ldiff, std::fabs(ev.likelihood_word(w) - scale * exact[w]));
      add("likelihood_ratio", ldiff, 1e-8);

      const auto dist = lattice_distribution(ev);
      add("mean_likelihood", std::fabs(dist.moment(1.0) - 1.0), 1e-8);
      const double m2 = likelihood_moment_from_table(exact, 2.0);
      const double m3 = likelihood_moment_from_table(exact, 3.0);
      add("second_moment", std::fabs(dist.moment(2.0) - m2), 1e-5);
      add("third_moment", std::fabs(dist.moment(3.0) - m3), 1e-5);
      if (2 * inst.m <= 6) add("second_moment_replica", std::fabs(replica_moment_quadrature(ev, 2).value - m2), 1e-5);

      const double tv_enum = tv_distance(exact, MarginalTable::uniform(inst.k)).value;
      const double tv_lattice = exact_tv_via_sufficient_stat(ev).value;
      add("tv_sufficient_stat", std::fabs(tv_lattice - tv_enum), 1e-8);

      const auto bounds = tv_bounds(ev);
      const double pinsker = pinsker_tv_bound(*mix, inst.k).value;
      const double slack = 1e-9;
      add("order_lower_le_exact", std::max(0.0, bounds[1].value - tv_enum - slack), 0.0);
      add("order_exact_le_chi2", std::max(0.0, tv_enum - bounds[0].value - slack), 0.0);
      add("order_exact_le_pinsker", std::max(0.0, tv_enum - pinsker - slack), 0.0);
    } catch (const std::exception&) {
      checks.push_back({i, "exception", false, std::numeric_limits<double>::infinity(), 0.0});
    }
  });
  for (auto& c : per) out.checks.insert(out.checks.end(), c.begin(), c.end());
  return out;
}

}  // namespace hopchaos
