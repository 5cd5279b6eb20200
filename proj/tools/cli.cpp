#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "kwl/density_lab.hpp"
#include "kwl/errors.hpp"
#include "kwl/exact_bounds.hpp"
#include "kwl/execution.hpp"
#include "kwl/kac_walk.hpp"
#include "kwl/mixing_metrics.hpp"

#ifndef KWL_VERSION
#define KWL_VERSION "0.0.0"
#endif

namespace kwl::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr double kPi = std::numbers::pi;

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.17g}", v);
}

fs::path prepare_out_dir(const std::string& dir) {
  if (dir.empty()) throw ValidationError("--out is required");
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw ValidationError("cannot create output directory " + dir);
  const fs::path probe = p / ".kwl_write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw ValidationError("output directory not writable: " + dir);
  }
  fs::remove(probe, ec);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << text;
  if (!f) throw ResourceError("write failed: " + path.string());
}

struct Series {
  std::string name;
  std::vector<double> y;
};

// one panel, linear axes, NaNs skipped
std::string svg_plot(const std::string& title, const std::vector<double>& x, const std::vector<Series>& series) {
  constexpr double W = 720, H = 420, L = 70, R = 150, T = 40, B = 50;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      if (first) {
        xmin = xmax = x[i];
        ymin = ymax = s.y[i];
        first = false;
      }
      xmin = std::min(xmin, x[i]);
      xmax = std::max(xmax, x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const auto px = [&](double v) { return L + (v - xmin) / (xmax - xmin) * (W - L - R); };
  const auto py = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{}\" y=\"22\" font-size=\"14\">{}</text>\n",
      W, H, L, title);
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", L, T,
                   W - L - R, H - T - B);
  for (int t = 0; t <= 4; ++t) {
    const double xv = xmin + (xmax - xmin) * t / 4, yv = ymin + (ymax - ymin) * t / 4;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.4g}</text>\n", px(xv), H - B + 18, xv);
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.4g}</text>\n", L - 6, py(yv) + 4, yv);
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::string pts;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::isfinite(series[k].y[i])) pts += fmt::format("{:.2f},{:.2f} ", px(x[i]), py(series[k].y[i]));
    const char* c = colors[k % 6];
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", c, pts);
    s += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", W - R + 10, T + 16 * (k + 1), c,
                     series[k].name);
  }
  return s + "</svg>\n";
}

std::string sha256_string(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

// key = value lines; '#' starts a comment
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot read config file " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  const auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
  };
  while (std::getline(f, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(fmt::format("{}:{}: expected key = value", path, lineno));
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

bool has_flag(const std::vector<std::string>& args, const std::string& name) {
  const std::string flag = "--" + name;
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// config entries become flags unless the command line already sets them
std::vector<std::string> apply_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + i);
      break;
    }
  }
  if (path.empty()) return args;
  const auto cfg = read_config(path);
  std::vector<std::string> extra;
  for (const auto& [key, value] : cfg) {
    if (has_flag(args, key)) continue;
    if (value == "false") continue;
    extra.push_back("--" + key);
    if (value != "true") extra.push_back(value);
  }
  // after the subcommand so the subcommand parser sees them
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

int resolve_threads(int flag) {
  static const int hardware = std::max(1u, std::thread::hardware_concurrency());
  if (flag > 0) return flag;
  if (const char* env = std::getenv("KWL_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 4096) throw ValidationError(fmt::format("KWL_THREADS='{}' is not a positive integer", env));
    return static_cast<int>(v);
  }
  return hardware;
}

// resolved option values of a subcommand, as the strings replay feeds back in
json params_of(const CLI::App& sub) {
  json p = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "out" || name.empty()) continue;
    if (opt->count() == 0) {
      // unset flags have no default string
      if (!opt->get_default_str().empty()) p[name] = opt->get_default_str();
      continue;
    }
    if (opt->get_expected_max() == 0) {
      p[name] = "true";
      continue;
    }
    std::string joined;
    for (const auto& v : opt->results()) joined += (joined.empty() ? "" : ",") + v;
    p[name] = joined;
  }
  return p;
}

struct Manifest {
  std::string command;
  json params;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<std::string> outputs;
};

void write_manifest(const fs::path& dir, const Manifest& m, double seconds) {
  json j;
  j["command"] = m.command;
  j["params"] = m.params;
  j["seed"] = m.seed;
  j["version"] = std::string("kwl ") + KWL_VERSION;
  j["threads"] = m.threads;
  j["duration_seconds"] = seconds;
  json digests = json::object();
  for (const auto& f : m.outputs) digests[f] = sha256_file(dir / f);
  j["outputs"] = digests;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

// ---- simulate

struct SimulateArgs {
  std::size_t n = 3;
  std::uint64_t steps = 100;
  std::size_t walkers = 100000;
  std::uint64_t seed = 1;
  std::string start = "e1";
  std::uint64_t record_every = 1;
  double eps = 0.05;
  std::string w2 = "off";
  std::size_t bins = 50;
  std::size_t moments = 1;
  bool svg = false;
  std::string out;
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
  auto* s = app.add_subcommand("simulate", "run a walker ensemble and write its mixing curve");
  s->add_option("--n", a.n, "dimension of the ambient space (sphere S^{n-1})")->check(CLI::Range(2, 1 << 20));
  s->add_option("--steps", a.steps, "rotations per walker");
  s->add_option("--walkers", a.walkers, "ensemble size")->check(CLI::PositiveNumber);
  s->add_option("--seed", a.seed, "master seed");
  s->add_option("--start", a.start, "start distribution")->check(CLI::IsMember({"e1", "uniform"}));
  s->add_option("--record-every", a.record_every, "record stride in steps")->check(CLI::PositiveNumber);
  s->add_option("--eps", a.eps, "H_eps threshold")->check(CLI::Range(1e-12, 1.0 - 1e-12));
  s->add_option("--w2", a.w2, "off | exact:N | sliced[:N]");
  s->add_option("--bins", a.bins, "x_1 histogram bins for the marginal TV")->check(CLI::PositiveNumber);
  s->add_option("--moments", a.moments, "coordinates with moment observables");
  s->add_flag("--svg", a.svg, "also write curve.svg");
  s->add_option("--out", a.out, "output directory")->required();
}

int cmd_simulate(const SimulateArgs& a, Manifest& m, const fs::path& dir, std::ostream& out) {
  EnsembleConfig cfg;
  cfg.n = a.n;
  cfg.steps = a.steps;
  cfg.walkers = a.walkers;
  cfg.seed = a.seed;
  cfg.start = a.start == "e1" ? StartKind::PointMassE1 : StartKind::Uniform;
  cfg.record_every = a.record_every;
  cfg.validate();
  if (a.moments > a.n) throw ValidationError("--moments exceeds --n");

  std::vector<Observer> obs{metrics::tv_observer(a.bins), metrics::h_eps_observer(a.eps), metrics::eta_observer()};
  if (a.moments > 0) obs.push_back(metrics::moment_observer(a.moments));
  if (a.w2 != "off") {
    const auto colon = a.w2.find(':');
    const std::string mode = a.w2.substr(0, colon);
    std::size_t size = std::min<std::size_t>(a.walkers, 1024);
    if (colon != std::string::npos) {
      try {
        size = std::stoul(a.w2.substr(colon + 1));
      } catch (const std::exception&) {
        throw ValidationError("--w2: bad cloud size in '" + a.w2 + "'");
      }
    }
    if (mode != "exact" && mode != "sliced") throw ValidationError("--w2 must be off, exact:N or sliced[:N]");
    if (size == 0 || size > a.walkers) throw ValidationError("--w2: cloud size must lie in 1..walkers");
    obs.push_back(metrics::w2_observer(mode == "exact" ? metrics::TransportMode::Exact : metrics::TransportMode::Sliced,
                                       size, a.seed ^ 0x5732ULL));
  }

  const MixingCurve curve = run_ensemble(cfg, obs);

  std::vector<std::string> names;
  for (const auto& [k, v] : curve.rows.front().obs) names.push_back(k);
  std::string csv = "step,tv_marginal,tv_se,w2,h_eps_mass,eta_hat";
  for (const auto& nm : names) csv += ",obs:" + nm + ",obs:" + nm + ":se";
  csv += "\n";
  for (const auto& r : curve.rows) {
    csv += fmt::format("{},{},{},{},{},{}", r.step, num(r.tv_marginal), num(r.tv_se), num(r.w2), num(r.h_eps_mass),
                       num(r.eta_hat));
    for (const auto& nm : names) {
      const auto& e = r.obs.at(nm);
      csv += "," + num(e.mean) + "," + num(e.se);
    }
    csv += "\n";
  }
  write_text(dir / "mixing_curve.csv", csv);
  m.outputs.push_back("mixing_curve.csv");

  if (a.svg) {
    std::vector<double> x;
    std::vector<Series> series{{"tv_marginal", {}}, {"h_eps_mass", {}}, {"eta_hat", {}}, {"w2", {}}};
    for (const auto& r : curve.rows) {
      x.push_back(static_cast<double>(r.step));
      series[0].y.push_back(r.tv_marginal);
      series[1].y.push_back(r.h_eps_mass);
      series[2].y.push_back(r.eta_hat);
      series[3].y.push_back(r.w2);
    }
    write_text(dir / "curve.svg", svg_plot(fmt::format("mixing curve, n = {}, {} walkers", a.n, a.walkers), x, series));
    m.outputs.push_back("curve.svg");
  }
  const auto& last = curve.rows.back();
  out << fmt::format("simulate: n={} walkers={} steps={} rows={}  final tv_marginal={:.4g} (se {:.2g})\n", a.n,
                     a.walkers, a.steps, curve.rows.size(), last.tv_marginal, last.tv_se);
  return kOk;
}

// ---- bound

struct BoundArgs {
  std::uint64_t n = 10;
  double delta = 0.01;
  double C = 1.0;
  double Cprime = 1.0;
  std::string rate = "paper-1overN";
  std::string out;
};

void add_bound(CLI::App& app, BoundArgs& a) {
  auto* s = app.add_subcommand("bound", "evaluate the step schedule of the final TV bound");
  s->add_option("--n", a.n, "dimension")->required();
  s->add_option("--delta", a.delta, "target per-summand level, in (0, 1/e)")->required();
  s->add_option("--C", a.C, "density-bound constant");
  s->add_option("--Cprime", a.Cprime, "constant of the n^5 (ln n)^3 (ln 1/delta)^3 budget");
  s->add_option("--rate", a.rate, "contraction rate of the L^2 step")
      ->check(CLI::IsMember({"paper-2", "paper-1overN", "exact-gap"}));
  s->add_option("--out", a.out, "output directory")->required();
}

int cmd_bound(const BoundArgs& a, Manifest& m, const fs::path& dir, std::ostream& out) {
  const auto rate = bounds::parse_gap_rate(a.rate);
  const auto s = bounds::mixing_bound_schedule(a.n, a.delta, a.C, a.Cprime, rate);
  // independent re-evaluation of every summand
  const auto check = bounds::final_tv_bound(s.n, s.k, s.l, s.epsilon, s.C, rate);
  static const char* labels[] = {"eta_k", "n^1.5 eps", "eps^0.25", "L2 term"};
  json j;
  j["n"] = s.n;
  j["delta"] = s.delta;
  j["C"] = s.C;
  j["Cprime"] = s.Cprime;
  j["rate"] = bounds::to_string(rate);
  j["rate_value"] = bounds::gap_rate_value(rate, s.n);
  j["k"] = s.k;
  j["epsilon"] = s.epsilon;
  j["l"] = s.l;
  j["total"] = s.total;
  json sm = json::object();
  for (int i = 0; i < 4; ++i) sm[labels[i]] = check.summands[i];
  j["summands"] = sm;
  j["log_l2_term"] = check.log_l2_term;
  j["final_tv_bound"] = check.total;
  j["cprime_budget"] = s.cprime_budget;
  j["within_cprime"] = s.within_cprime;
  write_text(dir / "schedule.json", j.dump(2) + "\n");
  m.outputs.push_back("schedule.json");

  out << fmt::format("schedule for n = {}, delta = {:g}, C = {:g}, rate = {}\n", s.n, s.delta, s.C, a.rate);
  out << fmt::format("  k       = {}\n  epsilon = {:.6g}\n  l       = {}\n  total   = {}\n", s.k, s.epsilon, s.l, s.total);
  for (int i = 0; i < 4; ++i)
    out << fmt::format("  {:<10} {:.6g}{}\n", labels[i], check.summands[i], check.summands[i] <= s.delta ? "" : "  > delta");
  out << fmt::format("  bound    {:.6g}  (3 delta = {:.6g})\n", check.total, 3 * s.delta);
  out << fmt::format("  budget   {:.6g}  Cprime n^5 (ln n)^3 (ln 1/delta)^3, {}\n", s.cprime_budget,
                     s.within_cprime ? "within" : "exceeded");

  for (int i = 0; i < 4; ++i)
    if (!(check.summands[i] <= s.delta))
      throw PropertyViolation(fmt::format("summand '{}' = {:.6g} exceeds delta", labels[i], check.summands[i]));
  if (!(check.total <= 3 * s.delta))
    throw PropertyViolation(fmt::format("final bound {:.6g} exceeds 3 delta", check.total));
  return kOk;
}

// ---- verify

struct VerifyArgs {
  std::string suite = "all";
  std::size_t draws = 10000;
  std::uint64_t seed = 1;
  std::size_t grid_cells = 100000;
  std::string out;
};

void add_verify(CLI::App& app, VerifyArgs& a) {
  auto* s = app.add_subcommand("verify", "run a property suite");
  s->add_option("--suite", a.suite, "lemma3 | lemma1 | grid | gamma | eta | all")
      ->check(CLI::IsMember({"lemma3", "lemma1", "grid", "gamma", "eta", "all"}));
  s->add_option("--draws", a.draws, "random draws (lemma3) or walkers (eta)")->check(CLI::PositiveNumber);
  s->add_option("--seed", a.seed, "seed for random draws");
  s->add_option("--grid-cells", a.grid_cells, "grid size for the grid suite")->check(CLI::Range(6, 4'000'000));
  s->add_option("--out", a.out, "output directory")->required();
}

struct SuiteResult {
  std::size_t checks = 0;
  std::size_t violations = 0;
  json detail = json::object();
};

SuiteResult suite_gamma() {
  SuiteResult r;
  double lo = INFINITY, hi = 0;
  for (std::uint64_t n = 3; n <= 10000; ++n) {
    const auto g = bounds::gamma_ratio_check(n);
    ++r.checks;
    r.violations += !g.holds;
    lo = std::min(lo, g.ratio);
    hi = std::max(hi, g.ratio);
  }
  r.detail["n_range"] = {3, 10000};
  r.detail["min_lhs_over_rhs"] = lo;
  r.detail["max_lhs_over_rhs"] = hi;
  return r;
}

SuiteResult suite_lemma3(std::size_t draws, std::uint64_t seed) {
  SuiteResult r;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> lx(std::log(1e-6), std::log(0.5)), ls(std::log(1e-6), 0.0);
  std::uniform_int_distribution<int> jd(1, 8);
  double worst = 0.0;
  json worst_at;
  for (std::size_t i = 0; i < draws; ++i) {
    const density::LemmaParams p{std::exp(lx(gen)), std::exp(lx(gen)), std::exp(ls(gen)), std::exp(ls(gen)), jd(gen)};
    const auto c = density::technical_lemma_check(p);
    ++r.checks;
    r.violations += !c.holds;
    if (c.lhs / c.rhs > worst) {
      worst = c.lhs / c.rhs;
      worst_at = {{"x1", p.x1}, {"x2", p.x2}, {"xs", p.xs}, {"xt", p.xt}, {"j", p.j}, {"lhs", c.lhs}, {"rhs", c.rhs}};
    }
  }
  const auto spot = density::technical_lemma_check({0.25, 0.25, 0.25, 0.25, 1});
  ++r.checks;
  const bool spot_ok = std::abs(spot.lhs - 16.0 / 3.0) <= 1e-9;
  r.violations += !spot_ok;
  r.detail["draws"] = draws;
  r.detail["worst_lhs_over_rhs"] = worst;
  r.detail["worst_at"] = worst_at;
  r.detail["spot_lhs"] = spot.lhs;
  r.detail["spot_expected"] = 16.0 / 3.0;
  return r;
}

std::vector<std::pair<std::string, density::CircleDensity>> lemma1_test_densities() {
  const double kappa = 20.0, vm = std::cyl_bessel_i(0.0, kappa);
  return {
      {"constant", [](double) { return 1.0; }},
      {"1+cos/2", [](double p) { return 1.0 + 0.5 * std::cos(p); }},
      {"1+0.9 sin 2phi", [](double p) { return 1.0 + 0.9 * std::sin(2 * p); }},
      {"1-cos", [](double p) { return 1.0 - std::cos(p); }},
      {"von Mises k=20", [=](double p) { return std::exp(kappa * (std::cos(p) - 1.0)) / (vm * std::exp(-kappa)); }},
  };
}

SuiteResult suite_lemma1() {
  SuiteResult r;
  const auto grid = std::make_shared<const density::SphereGrid>(density::SphereGrid::with_cells(10000));
  json rows = json::array();
  for (const auto& [name, h] : lemma1_test_densities()) {
    const auto p = density::circle_average_pushforward(grid, h);
    const bool shape_ok = p.max_relative_deviation <= 1e-2;
    const bool const_ok = std::abs(p.measured_constant - 2.0 / kPi) <= 1e-2;
    r.checks += 2;
    r.violations += !shape_ok + !const_ok;
    rows.push_back({{"h", name},
                    {"max_relative_deviation", p.max_relative_deviation},
                    {"measured_constant", p.measured_constant},
                    {"reference_prefactor", p.reference_prefactor},
                    {"admissible_cells", p.admissible_cells}});
  }
  r.detail["densities"] = rows;
  r.detail["expected_constant"] = 2.0 / kPi;
  return r;
}

SuiteResult suite_grid(std::size_t cells, std::uint64_t seed) {
  SuiteResult r;
  const auto g = std::make_shared<const density::SphereGrid>(density::SphereGrid::with_cells(cells));
  const auto k1 = density::kernel_apply_raw(*g, std::vector<double>(g->size(), 1.0));
  double defect = 0.0;
  for (double v : k1) defect = std::max(defect, std::abs(v - 1.0));
  ++r.checks;
  r.violations += !(defect <= 1e-6);
  r.detail["cells"] = g->size();
  r.detail["stationarity_sup_defect"] = defect;
  r.detail["stationarity_tolerance"] = 1e-6;

  // self-adjointness of the discretized operator, reported alongside
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst = 0.0;
  for (int pair = 0; pair < 10; ++pair) {
    std::vector<std::vector<double>> fields(2, std::vector<double>(g->size()));
    for (auto& f : fields) {
      const double a = u(gen), b = u(gen), c = u(gen);
      for (std::size_t i = 0; i < g->size(); ++i) {
        const auto p = g->center(i);
        f[i] = std::exp(a * p[0] + b * p[1] * p[2]) + std::cos(c * p[2] + p[0] * p[1]);
      }
    }
    const auto k = density::kernel_apply_raw(*g, fields);
    double kfh = 0, fkh = 0, ff = 0, hh = 0;
    for (std::size_t i = 0; i < g->size(); ++i) {
      kfh += k[0][i] * fields[1][i];
      fkh += fields[0][i] * k[1][i];
      ff += fields[0][i] * fields[0][i];
      hh += fields[1][i] * fields[1][i];
    }
    worst = std::max(worst, std::abs(kfh - fkh) / std::sqrt(ff * hh));
  }
  r.detail["adjointness_defect"] = worst;
  r.detail["adjointness_tolerance"] = 1e-6;
  r.detail["adjointness_within_tolerance"] = worst <= 1e-6;
  return r;
}

SuiteResult suite_eta(std::size_t walkers, std::uint64_t seed) {
  SuiteResult r;
  json rows = json::array();
  for (std::size_t n : {3u, 4u, 6u}) {
    const auto eta = empirical_eta(n, 200, walkers, seed + n);
    double worst = -INFINITY;
    for (const auto& e : eta) {
      const double b = bounds::eta_bound(n, e.k).clamped;
      ++r.checks;
      r.violations += !(e.eta_hat <= b + 4 * e.se);
      worst = std::max(worst, e.eta_hat - b);
    }
    rows.push_back({{"n", n}, {"walkers", walkers}, {"max_eta_hat_minus_bound", worst}});
  }
  r.detail["dimensions"] = rows;
  return r;
}

int cmd_verify(const VerifyArgs& a, Manifest& m, const fs::path& dir, std::ostream& out) {
  const std::vector<std::string> all{"gamma", "lemma3", "lemma1", "grid", "eta"};
  const std::vector<std::string> chosen = a.suite == "all" ? all : std::vector<std::string>{a.suite};
  json report;
  report["suite"] = a.suite;
  report["seed"] = a.seed;
  json suites = json::object();
  std::size_t violations = 0;
  for (const auto& name : chosen) {
    SuiteResult r;
    if (name == "gamma") r = suite_gamma();
    if (name == "lemma3") r = suite_lemma3(a.draws, a.seed);
    if (name == "lemma1") r = suite_lemma1();
    if (name == "grid") r = suite_grid(a.grid_cells, a.seed);
    if (name == "eta") r = suite_eta(a.draws, a.seed);
    violations += r.violations;
    json s = {{"checks", r.checks}, {"violations", r.violations}, {"passed", r.violations == 0}};
    for (auto& [k, v] : r.detail.items()) s[k] = v;
    suites[name] = s;
    out << fmt::format("verify {:<7} {:>6} checks  {:>4} violations  {}\n", name, r.checks, r.violations,
                       r.violations == 0 ? "PASS" : "FAIL");
  }
  report["suites"] = suites;
  report["violations"] = violations;
  write_text(dir / "report.json", report.dump(2) + "\n");
  m.outputs.push_back("report.json");
  if (violations > 0) throw PropertyViolation(fmt::format("{} property violations (see report.json)", violations));
  return kOk;
}

// ---- density

struct DensityArgs {
  double cap_radius = 0.3;
  std::size_t steps = 20;
  std::size_t grid_cells = 100000;
  std::vector<double> center{1.0, 0.0, 0.0};
  std::size_t snapshot_every = 0;
  double max_drift = 1e-3;
  bool svg = false;
  std::string out;
};

void add_density(CLI::App& app, DensityArgs& a) {
  auto* s = app.add_subcommand("density", "evolve a cap density on the S^2 grid");
  s->add_option("--cap-radius", a.cap_radius, "geodesic radius of the initial cap (>= pi: whole sphere)")
      ->check(CLI::PositiveNumber);
  s->add_option("--steps", a.steps, "kernel applications")->check(CLI::Range(std::size_t{0}, density::kMaxTraceSteps));
  s->add_option("--grid-cells", a.grid_cells, "approximate number of grid cells")->check(CLI::Range(6, 4'000'000));
  s->add_option("--center", a.center, "cap center (3 numbers)")->expected(3)->delimiter(',');
  s->add_option("--snapshot-every", a.snapshot_every, "snapshot stride; 0 writes the first and last only");
  s->add_option("--max-drift", a.max_drift, "abort when a renormalization factor leaves 1 +- this");
  s->add_flag("--svg", a.svg, "also write trace.svg");
  s->add_option("--out", a.out, "output directory")->required();
}

int cmd_density(const DensityArgs& a, Manifest& m, const fs::path& dir, std::ostream& out) {
  const auto grid = std::make_shared<const density::SphereGrid>(density::SphereGrid::with_cells(a.grid_cells));
  const auto g0 = density::cap_density(grid, {a.center[0], a.center[1], a.center[2]}, a.cap_radius);
  std::vector<double> masses;
  const auto snap = [&](std::uint64_t k, const density::GridDensity& g) {
    masses.push_back(g.mass());
    const bool take = k == 0 || k == a.steps || (a.snapshot_every > 0 && k % a.snapshot_every == 0);
    if (!take) return;
    std::ostringstream os;
    density::write_csv(os, g);
    const std::string name = fmt::format("density_k{:04}.csv", k);
    write_text(dir / name, os.str());
    m.outputs.push_back(name);
  };
  const auto trace = density::sup_density_trace(g0, a.steps, a.max_drift, snap);

  std::string csv = "k,sup,min,renorm_factor,mass\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    csv += fmt::format("{},{},{},{},{}\n", trace[i].k, num(trace[i].sup), num(trace[i].min),
                       num(trace[i].renorm_factor), num(masses[i]));
  write_text(dir / "trace.csv", csv);
  m.outputs.push_back("trace.csv");
  if (a.svg) {
    std::vector<double> x;
    std::vector<Series> series{{"sup", {}}, {"min", {}}};
    for (const auto& t : trace) {
      x.push_back(static_cast<double>(t.k));
      series[0].y.push_back(t.sup);
      series[1].y.push_back(t.min);
    }
    write_text(dir / "trace.svg", svg_plot(fmt::format("density trace, cap radius {:g}, {} cells", a.cap_radius,
                                                       grid->size()),
                                           x, series));
    m.outputs.push_back("trace.svg");
  }
  out << fmt::format("density: {} cells, cap radius {:g}, sup {:.6g} -> {:.6g}, min {:.6g} -> {:.6g}\n", grid->size(),
                     a.cap_radius, trace.front().sup, trace.back().sup, trace.front().min, trace.back().min);

  for (std::size_t i = 0; i < masses.size(); ++i)
    if (!(std::abs(masses[i] - 1.0) <= 1e-4))
      throw PropertyViolation(fmt::format("snapshot mass {:.10g} at k = {}", masses[i], i));
  for (std::size_t i = 1; i < trace.size(); ++i) {
    // renormalization may lift the sup by its own factor
    if (trace[i].sup > trace[i - 1].sup * std::max(1.0, trace[i].renorm_factor) * (1 + 1e-12))
      throw PropertyViolation(fmt::format("sup increased at k = {}: {:.17g} -> {:.17g}", i, trace[i - 1].sup, trace[i].sup));
    if (trace[i].min < trace[i - 1].min * std::min(1.0, trace[i].renorm_factor) * (1 - 1e-12))
      throw PropertyViolation(fmt::format("min decreased at k = {}", i));
  }
  return kOk;
}

// ---- replay

struct ReplayArgs {
  std::string manifest;
  std::string out;
};

void add_replay(CLI::App& app, ReplayArgs& a) {
  auto* s = app.add_subcommand("replay", "re-run a manifest and compare output digests");
  s->add_option("--manifest", a.manifest, "manifest.json of an earlier run")->required()->check(CLI::ExistingFile);
  s->add_option("--out", a.out, "output directory for the re-run")->required();
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_replay(const ReplayArgs& a, int threads, std::ostream& out, std::ostream& err) {
  json man;
  try {
    std::ifstream f(a.manifest);
    man = json::parse(f);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("unreadable manifest: ") + e.what());
  }
  if (!man.contains("command") || !man.contains("params") || !man.contains("outputs"))
    throw ValidationError("manifest lacks command, params or outputs");
  const std::string command = man["command"];
  if (command == "replay") throw ValidationError("cannot replay a replay");
  std::vector<std::string> args{"--threads", std::to_string(threads), command};
  for (const auto& [key, value] : man["params"].items()) {
    const std::string v = value.get<std::string>();
    if (v == "true") {
      args.push_back("--" + key);
    } else if (!v.empty() && v.front() == '[' && v.back() == ']') {
      args.push_back("--" + key);
      args.push_back(v.substr(1, v.size() - 2));
    } else {
      args.push_back("--" + key);
      args.push_back(v);
    }
  }
  args.push_back("--out");
  args.push_back(a.out);
  const int code = dispatch(args, out, err);
  if (code != kOk) return code;
  std::size_t same = 0;
  std::vector<std::string> differ;
  for (const auto& [file, digest] : man["outputs"].items()) {
    const bool csv = file.size() > 4 && file.substr(file.size() - 4) == ".csv";
    const std::string now = sha256_file(fs::path(a.out) / file);
    if (now == digest.get<std::string>())
      ++same;
    else if (csv)
      differ.push_back(file);
  }
  out << fmt::format("replay: {} of {} outputs identical\n", same, man["outputs"].size());
  if (!differ.empty()) {
    std::string list;
    for (const auto& f : differ) list += " " + f;
    throw PropertyViolation("replay differs in" + list);
  }
  return kOk;
}

int dispatch(const std::vector<std::string>& raw, std::ostream& out, std::ostream& err) {
  const auto args = apply_config(raw);
  CLI::App app{"Kac walk laboratory: simulate, bound, verify, density, replay", "kwl"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  int threads_flag = 0;
  std::string config_placeholder;
  app.add_option("--threads", threads_flag, "worker threads (fallback: KWL_THREADS, then hardware count)")
      ->check(CLI::Range(0, 4096));
  app.add_option("--config", config_placeholder, "key = value file; command-line flags take precedence");
  app.set_version_flag("--version", std::string("kwl ") + KWL_VERSION);

  SimulateArgs sim;
  BoundArgs bnd;
  VerifyArgs ver;
  DensityArgs den;
  ReplayArgs rep;
  add_simulate(app, sim);
  add_bound(app, bnd);
  add_verify(app, ver);
  add_density(app, den);
  add_replay(app, rep);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, eo;
    const int code = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return code == 0 ? kOk : kValidation;
  }

  const int threads = resolve_threads(threads_flag);
  set_thread_count(threads);
  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  if (name == "replay") return cmd_replay(rep, threads, out, err);

  Manifest m;
  m.command = name;
  m.params = params_of(*sub);
  m.threads = threads;
  const std::string dir_name = name == "simulate" ? sim.out : name == "bound" ? bnd.out : name == "verify" ? ver.out : den.out;
  const fs::path dir = prepare_out_dir(dir_name);
  m.seed = name == "simulate" ? sim.seed : name == "verify" ? ver.seed : 0;

  const auto t0 = std::chrono::steady_clock::now();
  int code = kOk;
  // the manifest is written even when a property check fails
  try {
    if (name == "simulate") code = cmd_simulate(sim, m, dir, out);
    if (name == "bound") code = cmd_bound(bnd, m, dir, out);
    if (name == "verify") code = cmd_verify(ver, m, dir, out);
    if (name == "density") code = cmd_density(den, m, dir, out);
  } catch (const PropertyViolation&) {
    write_manifest(dir, m, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    throw;
  }
  write_manifest(dir, m, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return code;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return sha256_string(ss.str());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const PropertyViolation& e) {
    err << "property violation: " << e.what() << "\n";
    return kViolation;
  } catch (const ResourceError& e) {
    err << "resource limit: " << e.what() << "\n";
    return kResource;
  } catch (const std::bad_alloc&) {
    err << "resource limit: out of memory\n";
    return kResource;
  } catch (const ObserverError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace kwl::cli
