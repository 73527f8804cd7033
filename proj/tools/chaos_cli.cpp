#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hopchaos/hopchaos.hpp"

namespace fs = std::filesystem;
using namespace hopchaos;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out;
  std::string config;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Flat "key = value" lines; '#' starts a comment. Each key becomes "--key value"
// placed before the command-line arguments, so flags given explicitly win.
std::vector<std::string> config_arguments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw UsageError(path + ":" + std::to_string(lineno) + ": empty key");
    if (key == "config") throw UsageError("config files cannot include other config files");
    if (key == "timing") {
      if (value == "true" || value == "1" || value == "yes") args.push_back("--timing");
      continue;
    }
    args.push_back("--" + key);
    args.push_back(value);
  }
  return args;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw UsageError("expected a comma-separated list of integers, got '" + text + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// Output goes to <out>/<name> when --out is set, otherwise to stdout.
class Output {
 public:
  Output(const std::string& dir, const std::string& name) {
    if (dir.empty()) return;
    fs::create_directories(dir);
    file_.open(fs::path(dir) / name, std::ios::binary);
    if (!file_) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string regime = "thm1-highT";
  double beta = 0.5;
  std::string n_list;
  std::string m_rule = "1";
  std::string k_rule = "N^0.4";
  std::size_t replicas = 20;
  double epsilon = 0.5;
  double event_floor = 0.5;
  std::size_t mc_samples = 20000;
  bool timing = false;
};

nlohmann::ordered_json summary_json(const SweepResult& result, const SweepSummary& s) {
  nlohmann::ordered_json j;
  j["regime"] = std::string(to_string(s.regime));
  j["beta"] = result.config.beta;
  j["master_seed"] = result.config.master_seed;
  auto& per = j["per_N_median_tv"] = nlohmann::ordered_json::array();
  for (const auto& p : s.per_n) {
    nlohmann::ordered_json e;
    e["N"] = p.n;
    e["M"] = p.m;
    e["k"] = p.k;
    e["method"] = p.primary_method;
    e["median_tv"] = std::isfinite(p.median_tv) ? nlohmann::ordered_json(p.median_tv) : nlohmann::ordered_json(nullptr);
    e["predictor"] = p.predictor;
    auto& by = e["median_by_method"] = nlohmann::ordered_json::object();
    for (const auto& [method, v] : p.median_by_method) by[method] = v;
    per.push_back(std::move(e));
  }
  nlohmann::ordered_json fit;
  fit["predictor"] = std::string(to_string(s.predictor));
  if (s.fit) {
    fit["slope"] = s.fit->slope;
    fit["intercept"] = s.fit->intercept;
    fit["r_squared"] = s.fit->r_squared;
    fit["points"] = s.fit->points;
  } else {
    fit["error"] = s.fit_error;
  }
  j["fit"] = std::move(fit);
  j["event_rate"] = s.event_rate;
  j["event_rate_ok"] = s.event_rate_ok;
  j["error_rows"] = s.error_rows;
  j["ordering_violations"] = count_ordering_violations(result.rows);
  if (!s.gaussian_limit_curve.empty()) {
    auto& curve = j["gaussian_limit_curve"] = nlohmann::ordered_json::array();
    for (const auto& c : s.gaussian_limit_curve) curve.push_back({{"M", c.m}, {"tv", c.tv}});
  }
  if (!result.errors.empty()) {
    auto& errs = j["errors"] = nlohmann::ordered_json::array();
    for (const auto& e : result.errors) errs.push_back({{"N", e.n}, {"replica", e.replica}, {"message", e.message}});
  }
  return j;
}

int run_sweep_command(const Globals& g, const SweepArgs& a) {
  SweepConfig cfg;
  try {
    cfg.regime = parse_regime(a.regime);
    cfg.m_rule = ScalingRule::parse(a.m_rule);
    cfg.k_rule = ScalingRule::parse(a.k_rule);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  cfg.beta = a.beta;
  cfg.n_list = parse_size_list(a.n_list);
  cfg.replicas = a.replicas;
  cfg.master_seed = g.seed;
  cfg.epsilon = a.epsilon;
  cfg.event_floor = a.event_floor;
  cfg.mc_samples = a.mc_samples;
  cfg.timing = a.timing;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const std::string dir = g.out.empty() ? "." : g.out;
  fs::create_directories(dir);
  std::ofstream csv(fs::path(dir) / "results.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write results.csv");
  write_results_csv_header(csv);
  const SweepResult result = run_sweep(cfg, [&](const SweepRow& r) {
    write_results_csv_row(csv, r);
    csv.flush();
  });
  const SweepSummary summary = summarize(result);
  std::ofstream js(fs::path(dir) / "summary.json", std::ios::binary);
  js << summary_json(result, summary).dump(2) << '\n';

  const std::size_t violations = count_ordering_violations(result.rows);
  for (const auto& e : result.errors) std::cerr << "error at N=" << e.n << " replica=" << e.replica << ": " << e.message << '\n';
  std::cerr << "sweep " << to_string(cfg.regime) << ": " << result.rows.size() << " rows, event rate " << summary.event_rate
            << ", ordering violations " << violations << '\n';
  if (!summary.event_rate_ok) std::cerr << "event rate below floor " << cfg.event_floor << '\n';
  return (violations == 0 && result.errors.empty() && summary.event_rate_ok) ? kExitPass : kExitCheckFailure;
}

// ---------------------------------------------------------------------------

struct InstanceArgs {
  std::size_t n = 12;
  std::size_t m = 1;
  double beta = 0.5;
  std::size_t k = 4;
  std::string patterns_file;
  std::string variant = "auto";
};

struct Instance {
  std::shared_ptr<const PatternMatrix> xi;
  std::optional<MixingMeasureSpec> spec;
  std::size_t k = 0;
  double beta = 0.0;
};

Instance make_instance(const Globals& g, const InstanceArgs& a) {
  Instance inst;
  if (!a.patterns_file.empty()) {
    std::ifstream in(a.patterns_file);
    if (!in) throw UsageError("cannot open patterns file '" + a.patterns_file + "'");
    inst.xi = std::make_shared<const PatternMatrix>(read_patterns(in));
  } else {
    if (a.n < 1 || a.m < 1) throw UsageError("N and M must be at least 1");
    inst.xi = std::make_shared<const PatternMatrix>(sample_patterns(a.n, a.m, g.seed));
  }
  if (a.k < 1 || a.k > inst.xi->sites()) throw UsageError("k must lie in [1, N]");
  if (!(a.beta > 0.0)) throw UsageError("beta must be positive");
  MixingVariant variant = a.beta == 1.0 ? MixingVariant::critical : MixingVariant::standard;
  if (a.variant == "standard") variant = MixingVariant::standard;
  else if (a.variant == "critical") variant = MixingVariant::critical;
  else if (a.variant != "auto") throw UsageError("variant must be auto, standard or critical");
  try {
    inst.spec.emplace(GibbsModel(a.beta, inst.xi), variant);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  inst.k = a.k;
  inst.beta = a.beta;
  return inst;
}

struct TvArgs {
  InstanceArgs inst;
  std::size_t samples = 0;
  bool marginal = false;
  bool trace = false;
};

int run_tv_command(const Globals& g, const TvArgs& a) {
  const Instance inst = make_instance(g, a.inst);
  const MixingMeasureSpec& spec = *inst.spec;
  const ReportContext ctx{inst.beta, inst.xi->sites(), inst.xi->patterns(), inst.k, g.seed};
  Output out(g.out, "tv.csv");
  write_report_csv_header(out.stream());
  std::vector<TVReport> reports;
  if (inst.xi->sites() <= EnumerationLimits{}.max_sites && inst.k <= EnumerationLimits{}.max_marginal_sites) {
    const GibbsModel model(inst.beta, inst.xi);
    const auto table = exact_marginal(model, inst.k);
    reports.push_back(tv_distance(table, MarginalTable::uniform(inst.k)));
    if (a.marginal) {
      Output mo(g.out, "marginal.csv");
      write_marginal_csv(mo.stream(), table);
    }
  }
  if (spec.dim() <= QuadratureOptions{}.max_dim) {
    const auto mix = normalize(spec);
    if (a.trace) {
      Output tr(g.out, "quadrature_trace.csv");
      write_quadrature_trace_csv(tr.stream(), mix->trace);
    }
    const LikelihoodEvaluator ev(mix, inst.k);
    MomentOptions mo;
    mo.seed = g.seed;
    if (reports.empty() && detail::lattice_feasible(ev, mo.lattice)) reports.push_back(exact_tv_via_sufficient_stat(ev));
    for (const auto& r : tv_bounds(ev, mo)) reports.push_back(r);
    reports.push_back(pinsker_tv_bound(*mix, inst.k));
  }
  if (a.samples > 0) {
    const auto samples = sample_mixing(spec, a.samples, g.seed, SamplerOptions{.record_trace = true});
    reports.push_back(pinsker_tv_bound(spec, inst.k, samples, g.seed));
    Output so(g.out, "sampler.csv");
    write_sampler_csv(so.stream(), samples);
  }
  if (spec.variant() == MixingVariant::standard && inst.beta < 1.0)
    reports.push_back(gaussian_tv(spec.dim(), GaussianProxy::from_model(inst.beta, spec.sites(), inst.k, spec.dim()).lambda));
  for (const auto& r : reports) write_report_csv_row(out.stream(), ctx, r);
  return kExitPass;
}

struct MomentsArgs {
  InstanceArgs inst;
  std::string orders = "1,2,3";
  std::string scheme = "auto";
  double eta = 0.5;
  std::size_t mc_samples = 100000;
};

int run_moments_command(const Globals& g, const MomentsArgs& a) {
  const Instance inst = make_instance(g, a.inst);
  MomentOptions mo;
  mo.seed = g.seed;
  mo.mc_samples = a.mc_samples;
  if (a.scheme == "auto") mo.scheme = MomentScheme::automatic;
  else if (a.scheme == "lattice") mo.scheme = MomentScheme::lattice;
  else if (a.scheme == "quadrature") mo.scheme = MomentScheme::quadrature_replica;
  else if (a.scheme == "mc") mo.scheme = MomentScheme::mc_replica;
  else throw UsageError("scheme must be auto, lattice, quadrature or mc");
  std::vector<int> orders;
  for (std::size_t p : parse_size_list(a.orders)) {
    if (p < 1) throw UsageError("moment orders must be at least 1");
    orders.push_back(static_cast<int>(p));
  }
  const ReportContext ctx{inst.beta, inst.xi->sites(), inst.xi->patterns(), inst.k, g.seed};
  Output out(g.out, "moments.csv");
  write_report_csv_header(out.stream());
  const auto mix = normalize(*inst.spec);
  const LikelihoodEvaluator ev(mix, inst.k);
  for (int p : orders) write_report_csv_row(out.stream(), ctx, pth_moment(ev, p, mo));
  if (a.eta > 0.0 && detail::lattice_feasible(ev, mo.lattice)) write_report_csv_row(out.stream(), ctx, uniform_integrability_check(ev, a.eta));
  return kExitPass;
}

// ---------------------------------------------------------------------------

struct QuadformArgs {
  std::size_t k = 16;
  std::size_t instances = 100;
  double c = 2.0;
  double c0 = 0.125;
  double s_fraction = 0.25;
  std::size_t concentration_k = 4096;
  std::string concentration_m = "4,16,64";
  std::size_t concentration_samples = 20000;
  double delta = 0.5;
};

int run_quadform_command(const Globals& g, const QuadformArgs& a) {
  if (a.k < 1 || a.k > 20) throw UsageError("quadform: k must lie in [1, 20]");
  Output out(g.out, "quadform.csv");
  auto& os = out.stream();
  os << "check,instance,k,value,bound,passed\n";
  bool ok = true;
  char buf[256];
  auto row = [&](const char* check, std::size_t i, std::size_t k, double value, double bound, bool passed, bool counts = true) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.17g,%.17g,%d\n", check, i, k, value, bound, passed ? 1 : 0);
    os << buf;
    ok = ok && (passed || !counts);
  };
  for (std::size_t i = 0; i < a.instances; ++i) {
    const QuadFormSpec spec = random_symmetric(a.k, derive_seed(g.seed, i));
    const auto dist = exact_quadform_distribution(spec);
    row("mean_zero", i, a.k, dist.mean(), 0.0, std::fabs(dist.mean()) <= 1e-9 * std::max(1.0, spec.frobenius_norm() * spec.frobenius_norm()));
    const double var_closed = quadform_variance(spec);
    row("variance_identity", i, a.k, dist.variance(), var_closed, std::fabs(dist.variance() - var_closed) <= 1e-8 * std::max(1.0, var_closed));
    const double smax = a.s_fraction / spec.operator_norm();
    double worst_ratio = 0.0;
    bool sym = true;
    for (int j = -8; j <= 8; ++j) {
      const auto m = mgf_check(spec, smax * j / 8.0, a.c);
      worst_ratio = std::max(worst_ratio, std::log(m.value) - std::log(m.bound));
      sym = sym && m.symmetric;
    }
    row("mgf_bound_log_excess", i, a.k, worst_ratio, 0.0, worst_ratio <= 1e-12);
    // X and -X need not share a law for general A; reported, not enforced
    row("mgf_symmetry", i, a.k, sym ? 1.0 : 0.0, 1.0, sym, false);
    double worst_tail = -1.0;
    for (int j = 1; j <= 20; ++j) {
      const double t = j * 0.25 * spec.frobenius_norm();
      worst_tail = std::max(worst_tail, dist.tail(t) - hanson_wright_bound(spec, t, a.c0));
    }
    row("tail_bound_excess", i, a.k, worst_tail, 0.0, worst_tail <= 0.0);
  }
  const QuadFormSpec identity(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(a.k), static_cast<Eigen::Index>(a.k)));
  const auto id = exact_quadform_distribution(identity);
  double id_max = 0.0;
  for (double v : id.values) id_max = std::max(id_max, std::fabs(v));
  row("identity_zero", 0, a.k, id_max, 0.0, id_max <= 1e-12);

  const std::vector<double> deltas{a.delta};
  double previous = 2.0;
  for (std::size_t m : parse_size_list(a.concentration_m)) {
    const auto xi = sample_patterns(a.concentration_k, m, derive_seed(g.seed, 0x636f6e, m));
    const auto rep = overlap_norm_concentration(xi, a.concentration_k, a.concentration_samples, derive_seed(g.seed, m), deltas);
    row("concentration_mean", m, a.concentration_k, rep.mean, rep.exact_mean, std::fabs(rep.mean - rep.exact_mean) <= 4.0 * rep.stderr_);
    const double p = rep.deviations.front().probability;
    row("concentration_deviation", m, a.concentration_k, p, previous, p < previous);
    previous = p;
  }
  return ok ? kExitPass : kExitCheckFailure;
}

int run_inequalities_command(const Globals& g, double tolerance) {
  const auto report = scalar_inequality_suite(tolerance);
  Output out(g.out, "inequalities.csv");
  auto& os = out.stream();
  os << "check,points,violations,max_excess\n";
  char buf[256];
  for (const auto& c : report.checks) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.17g\n", c.name.c_str(), c.points, c.violations, c.max_excess);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "psi_taylor_constant,0,0,%.17g\n", report.psi_taylor_constant);
  os << buf;
  return report.passed() ? kExitPass : kExitCheckFailure;
}

int run_oracle_command(const Globals& g, std::size_t count, double perturbation) {
  const auto summary = run_oracle_suite(g.seed, count, perturbation);
  Output out(g.out, "oracle.csv");
  auto& os = out.stream();
  os << "instance,N,M,beta,k,check,passed,error,tolerance\n";
  char buf[256];
  for (const auto& c : summary.checks) {
    const auto& inst = summary.instances[c.instance];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%g,%zu,%s,%d,%.3e,%.1e\n", c.instance, inst.n, inst.m, inst.beta, inst.k, c.name.c_str(),
                  c.passed ? 1 : 0, c.error, c.tolerance);
    os << buf;
  }
  std::cerr << "oracle: " << summary.checks.size() << " checks, " << summary.failures() << " failures\n";
  return summary.passed() ? kExitPass : kExitCheckFailure;
}

void add_instance_options(CLI::App* cmd, InstanceArgs& a) {
  cmd->add_option("--N", a.n, "number of sites");
  cmd->add_option("--M", a.m, "number of patterns");
  cmd->add_option("--beta", a.beta, "inverse temperature");
  cmd->add_option("--k", a.k, "marginal size");
  cmd->add_option("--patterns-file", a.patterns_file, "read patterns from file instead of sampling");
  cmd->add_option("--variant", a.variant, "mixing measure: auto, standard or critical");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Propagation-of-chaos experiments for the Hopfield model"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--threads", g.threads, "worker threads (default: hardware concurrency)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--config", g.config, "flat key = value config file; flags override it");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "run a regime sweep, writing results.csv and summary.json");
  sweep_cmd->add_option("--regime", sweep.regime, "thm1-highT, thm2-macro-breakdown, thm3-critical-chaos or thm4-critical-window");
  sweep_cmd->add_option("--beta", sweep.beta, "inverse temperature");
  sweep_cmd->add_option("--N", sweep.n_list, "comma-separated system sizes");
  sweep_cmd->add_option("--M", sweep.m_rule, "pattern-count rule, e.g. 2 or N^0.25");
  sweep_cmd->add_option("--k", sweep.k_rule, "marginal-size rule, e.g. N^0.4, 0.5*N, 2*sqrt(N)");
  sweep_cmd->add_option("--replicas", sweep.replicas, "disorder replicas per N");
  sweep_cmd->add_option("--epsilon", sweep.epsilon, "covariance event radius");
  sweep_cmd->add_option("--event-floor", sweep.event_floor, "minimum fraction of replicas on the event");
  sweep_cmd->add_option("--mc-samples", sweep.mc_samples, "Monte Carlo samples when quadrature is unavailable");
  sweep_cmd->add_flag("--timing", sweep.timing, "record wall_ms (makes output nondeterministic)");

  std::size_t oracle_count = 50;
  double perturbation = 0.0;
  auto* oracle_cmd = app.add_subcommand("oracle", "cross-check mixture quantities against enumeration");
  oracle_cmd->add_option("--count", oracle_count, "number of random instances");
  oracle_cmd->add_option("--perturb", perturbation, "add this to one enumerated marginal entry (sensitivity check)");

  TvArgs tv;
  auto* tv_cmd = app.add_subcommand("tv", "TV values and bounds for one instance");
  add_instance_options(tv_cmd, tv.inst);
  tv_cmd->add_option("--samples", tv.samples, "also sample the mixing field and report the Monte Carlo Pinsker bound");
  tv_cmd->add_flag("--marginal", tv.marginal, "write marginal.csv from enumeration");
  tv_cmd->add_flag("--trace", tv.trace, "write quadrature_trace.csv");

  MomentsArgs moments;
  auto* moments_cmd = app.add_subcommand("moments", "likelihood-ratio moments for one instance");
  add_instance_options(moments_cmd, moments.inst);
  moments_cmd->add_option("--p", moments.orders, "comma-separated moment orders");
  moments_cmd->add_option("--scheme", moments.scheme, "auto, lattice, quadrature or mc");
  moments_cmd->add_option("--eta", moments.eta, "uniform-integrability exponent (0 to skip)");
  moments_cmd->add_option("--mc-samples", moments.mc_samples, "replica tuples for the mc scheme");

  QuadformArgs qf;
  auto* qf_cmd = app.add_subcommand("quadform", "quadratic-form tail, MGF and concentration checks");
  qf_cmd->add_option("--k", qf.k, "matrix size (<= 20)");
  qf_cmd->add_option("--instances", qf.instances, "random symmetric matrices");
  qf_cmd->add_option("--C", qf.c, "MGF bound constant");
  qf_cmd->add_option("--c0", qf.c0, "tail bound constant");
  qf_cmd->add_option("--s-fraction", qf.s_fraction, "|s| <= s_fraction / ||A||_op");
  qf_cmd->add_option("--concentration-k", qf.concentration_k, "k for the overlap-norm concentration check");
  qf_cmd->add_option("--concentration-M", qf.concentration_m, "comma-separated M values");
  qf_cmd->add_option("--concentration-samples", qf.concentration_samples, "Monte Carlo spin samples");
  qf_cmd->add_option("--delta", qf.delta, "deviation threshold");

  double tolerance = 1e-12;
  auto* ineq_cmd = app.add_subcommand("inequalities", "scalar inequality suite");
  ineq_cmd->add_option("--tolerance", tolerance, "allowed excess");

  // Splice config arguments in right after the subcommand name.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (!config_path.empty()) {
      const auto extra = config_arguments(config_path);
      std::size_t pos = 0;
      while (pos < args.size() && !app.get_subcommand_no_throw(args[pos])) ++pos;
      if (pos == args.size()) throw UsageError("a subcommand is required");
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(pos) + 1, extra.begin(), extra.end());
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  if (g.threads > 0) set_default_thread_count(g.threads);
  try {
    if (*sweep_cmd) return run_sweep_command(g, sweep);
    if (*oracle_cmd) return run_oracle_command(g, oracle_count, perturbation);
    if (*tv_cmd) return run_tv_command(g, tv);
    if (*moments_cmd) return run_moments_command(g, moments);
    if (*qf_cmd) return run_quadform_command(g, qf);
    if (*ineq_cmd) return run_inequalities_command(g, tolerance);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailure;
  }
  return kExitUsage;
}
