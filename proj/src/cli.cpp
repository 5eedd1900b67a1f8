#include "mfe/cli.hpp"

#include "mfe/blowup.hpp"
#include "mfe/energy.hpp"
#include "mfe/parallel.hpp"
#include "mfe/topology.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <map>
#include <numbers>
#include <random>

namespace mfe {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json disk_domain(double h) { return {{"kind", "disk"}, {"center", {0.0, 0.0}}, {"radius", 1.0}, {"h", h}}; }
Json annulus_domain(double r_inner, double h) {
  return {{"kind", "annulus"}, {"center", {0.0, 0.0}}, {"r_inner", r_inner}, {"r_outer", 1.0}, {"h", h}};
}
Json dirac_measure() {
  return {{"atoms", Json::array({{{"alpha", 1.0}, {"weight", 1.0}}})},
          {"density", {{"breakpoints", Json::array()}, {"values", Json::array()}}},
          {"quadrature_nodes", 64}};
}

Json solver_defaults() {
  SolveConfig c;
  return {{"tolerance", c.tolerance},
          {"max_iterations", c.max_iterations},
          {"min_damping", c.min_damping},
          {"divergence_patience", c.divergence_patience},
          {"lambda_step", c.lambda_step},
          {"shrink", c.shrink},
          {"min_lambda_step", c.min_lambda_step},
          {"max_growth", c.max_growth},
          {"resolution_cells", c.resolution_cells}};
}

/// Typed access to one config section with path-qualified errors.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

  [[nodiscard]] double number(const std::string& key) const {
    const Json& v = at(key);
    if (!v.is_number()) throw ConfigError(path_ + "." + key, "expected a number");
    return v.get<double>();
  }
  [[nodiscard]] std::optional<double> optional_number(const std::string& key) const {
    if (at(key).is_null()) return std::nullopt;
    return number(key);
  }
  [[nodiscard]] int integer(const std::string& key) const {
    const Json& v = at(key);
    if (!v.is_number_integer()) throw ConfigError(path_ + "." + key, "expected an integer");
    return v.get<int>();
  }
  [[nodiscard]] std::string text(const std::string& key) const {
    const Json& v = at(key);
    if (!v.is_string()) throw ConfigError(path_ + "." + key, "expected a string");
    return v.get<std::string>();
  }
  [[nodiscard]] std::vector<double> numbers(const std::string& key) const {
    const Json& v = at(key);
    if (!v.is_array()) throw ConfigError(path_ + "." + key, "expected an array");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(path_ + "." + key + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }
  [[nodiscard]] Vec2 point(const std::string& key) const {
    std::vector<double> v = numbers(key);
    if (v.size() != 2) throw ConfigError(path_ + "." + key, "expected [x, y]");
    return {v[0], v[1]};
  }
  [[nodiscard]] ConfigError error(const std::string& key, const std::string& message) const {
    return {path_ + "." + key, message};
  }

 private:
  [[nodiscard]] const Json& at(const std::string& key) const {
    if (!j_.contains(key)) throw ConfigError(path_ + "." + key, "missing");
    return j_[key];
  }
  const Json& j_;
  std::string path_;
};

SolveConfig solver_from_json(const Json& j) {
  Section s(j, "solver");
  SolveConfig c;
  c.tolerance = s.number("tolerance");
  c.max_iterations = s.integer("max_iterations");
  c.min_damping = s.number("min_damping");
  c.divergence_patience = s.integer("divergence_patience");
  c.lambda_step = s.number("lambda_step");
  c.shrink = s.number("shrink");
  c.min_lambda_step = s.number("min_lambda_step");
  c.max_growth = s.number("max_growth");
  c.resolution_cells = s.number("resolution_cells");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("solver", e.what());
  }
  return c;
}

Json defaults_for(const std::string& command) {
  Json c;
  c["seed"] = 1;
  c["threads"] = 1;
  c["domain"] = disk_domain(1.0 / 64);
  c["measure"] = dirac_measure();
  c["solver"] = solver_defaults();
  Json sweep = Json::object(), analysis = Json::object();
  if (command == "solve") {
    sweep["lambda"] = 4 * kPi;
  } else if (command == "continue") {
    sweep["lambda_start"] = 0.0;
    sweep["lambda_end"] = 8.5 * kPi;
  } else if (command == "energy") {
    sweep["lambdas"] = {7.5 * kPi, 8.5 * kPi};
    sweep["m_min"] = 6;
    sweep["m_max"] = 16;
    analysis["center"] = {0.0, 0.0};
    analysis["radius"] = 0.5;
    analysis["slope_tolerance"] = 0.1;
  } else if (command == "mt-check") {
    analysis["calibration_size"] = 200;
    analysis["corpus_size"] = 1000;
    analysis["max_mode"] = 8;
    analysis["amplitude"] = 5.0;
    analysis["margin"] = 0.1;
  } else if (command == "testfn-sweep") {
    c["domain"] = annulus_domain(0.2, 1.0 / 64);
    sweep["lambda"] = 10 * kPi;
    sweep["m_min"] = 3;
    sweep["m_max"] = 10;
    analysis["k"] = 1;
    analysis["weights"] = {1.0};
    analysis["angles"] = {0.0};
    analysis["alpha_tilde"] = 0.95;
    analysis["r_gamma"] = nullptr;
    analysis["eps0"] = 0.1;
    analysis["gradient_tolerance"] = 0.03;
    analysis["log_denominator_tolerance"] = 0.05;
    analysis["j_tolerance"] = 0.10;
  } else if (command == "blowup") {
    sweep["lambda_start"] = 0.0;
    sweep["lambda_end"] = 8.5 * kPi;
    analysis["branch"] = "";
    analysis["entry"] = -1;
    analysis["threshold"] = 0.05;
    analysis["rho"] = nullptr;
    analysis["regime"] = "auto";
    analysis["window"] = 5.0;
    analysis["half"] = 50;
    analysis["rms_tolerance"] = 0.05;
    analysis["mass_fraction"] = 0.95;
  } else if (command == "quantize") {
    c["domain"] = disk_domain(1.0 / 128);
    sweep["lambda_start"] = 0.0;
    sweep["lambda_end"] = 8.5 * kPi;
    QuantizationConfig q;
    analysis["threshold"] = q.threshold_fraction;
    analysis["rho"] = nullptr;
    analysis["min_amplitude"] = q.min_amplitude;
    analysis["fit_points"] = q.fit_points;
    analysis["tolerance"] = q.tolerance;
  } else if (command == "degree") {
    analysis["k"] = 2;
    analysis["map"] = "vandermonde";
    analysis["samples"] = 5;
    analysis["y_norm"] = 1e-3;
    analysis["starts"] = 400;
  } else if (command == "minmax") {
    c["domain"] = annulus_domain(0.05, 1.0 / 64);
    sweep["lambda"] = 10 * kPi;
    MinmaxConfig m;
    analysis["k"] = m.k;
    analysis["alpha_tilde"] = m.alpha_tilde;
    analysis["radial"] = m.radial;
    analysis["angular"] = m.angular;
    analysis["splits"] = m.splits;
    analysis["boundary_radius"] = m.boundary_radius;
    analysis["r_gamma"] = 0.5;
    analysis["eps0"] = 0.4;
    analysis["min_gap"] = 50.0;
    analysis["moment_tolerance"] = 0.1;
  } else if (command == "green-check") {
    c["domain"] = disk_domain(1.0 / 128);
    analysis["pairs"] = 16;
    analysis["margin"] = 0.15;
    analysis["symmetry_factor"] = 5.0;
    analysis["oracle_tolerance"] = 0.02;
    analysis["mass_tolerance"] = 1e-8;
  } else {
    throw ConfigError("command", "unknown command '" + command + "'");
  }
  c["sweep"] = sweep;
  c["analysis"] = analysis;
  return c;
}

/// Writes artifacts under the run directory and records checks.
class RunContext {
 public:
  RunContext(RunManifest& manifest, fs::path dir) : manifest_(manifest), dir_(std::move(dir)) {}

  [[nodiscard]] fs::path path(const std::string& name) const { return dir_ / name; }
  void record(const std::string& name) { names_.push_back(name); }
  void check(std::string name, bool passed, double value, double bound, std::string detail = {}) {
    manifest_.checks.push_back({std::move(name), passed, value, bound, std::move(detail)});
  }
  void finish() {
    for (const std::string& n : names_)
      manifest_.artifacts.push_back({n, sha256_file(path(n)), fs::file_size(path(n))});
  }
  [[nodiscard]] const fs::path& dir() const { return dir_; }

  void csv(const std::string& name, const CsvTable& t) {
    t.write(path(name));
    record(name);
  }
  void json(const std::string& name, const Json& j) {
    write_json(path(name), j);
    record(name);
  }
  void svg(const std::string& name, const std::string& title, const std::string& xl, const std::string& yl,
           const std::vector<PlotSeries>& s) {
    write_svg_plot(path(name), title, xl, yl, s);
    record(name);
  }
  void field(const std::string& stem, const DiscreteDomain& d, const Field& u, bool with_csv) {
    write_field_binary(d, u, path(stem + ".bin"), path(stem + ".json"));
    record(stem + ".bin");
    record(stem + ".json");
    if (with_csv) {
      write_field_csv(d, u, path(stem + ".csv"));
      record(stem + ".csv");
    }
  }

 private:
  RunManifest& manifest_;
  fs::path dir_;
  std::vector<std::string> names_;
};

struct Setup {
  DomainSpec spec;
  IntensityMeasure measure;
  SolveConfig solver;
  std::uint64_t seed;
  Section sweep;
  Section analysis;
};

std::string entry_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fields/entry_%03zu", i);
  return buf;
}

void write_branch(RunContext& ctx, const DiscreteDomain& d, const ContinuationBranch& branch, double start,
                  double end) {
  fs::create_directories(ctx.path("fields"));
  Json entries = Json::array();
  CsvTable t({"lambda", "residual", "iterations", "u_max", "vortex_mass", "log_denominator"});
  for (std::size_t i = 0; i < branch.entries.size(); ++i) {
    const SolveResult& e = branch.entries[i];
    ctx.field(entry_name(i), d, e.u, false);
    entries.push_back(to_json(e, entry_name(i) + ".bin"));
    t.add({e.lambda, e.residual, static_cast<double>(e.iterations), e.u_max, e.vortex_mass, e.log_denominator});
  }
  Json b;
  b["lambda_start"] = start;
  b["lambda_end"] = end;
  b["terminated_early"] = branch.terminated_early;
  b["flag"] = branch.flag;
  b["last_good_lambda"] = branch.last_good_lambda;
  b["entries"] = entries;
  ctx.json("branch.json", b);
  ctx.csv("branch.csv", t);
  std::vector<double> x = t.column("lambda");
  for (double& v : x) v /= kPi;
  ctx.svg("branch.svg", "continuation branch", "lambda / pi", "max u", {{"max u", x, t.column("u_max")}});
}

void check_branch(RunContext& ctx, const ContinuationBranch& branch) {
  int bad = static_cast<int>(std::count_if(branch.entries.begin(), branch.entries.end(),
                                           [](const SolveResult& e) { return !e.converged; }));
  ctx.check("branch_nonempty", !branch.entries.empty(), static_cast<double>(branch.entries.size()), 1.0);
  ctx.check("entries_converged", bad == 0, bad, 0.0, branch.flag);
}

ContinuationBranch load_branch(const fs::path& where, DomainSpec& spec, IntensityMeasure& measure) {
  fs::path dir = fs::is_directory(where) ? where : where.parent_path();
  Json manifest = read_json(dir / "manifest.json");
  if (!manifest.contains("config")) throw ConfigError("analysis.branch", "no config in " + (dir / "manifest.json").string());
  spec = domain_from_json(manifest["config"]["domain"]);
  measure = measure_from_json(manifest["config"]["measure"]);
  DiscreteDomain d(spec);
  Json b = read_json(dir / "branch.json");
  ContinuationBranch branch;
  branch.terminated_early = b.at("terminated_early").get<bool>();
  branch.flag = b.at("flag").get<std::string>();
  branch.last_good_lambda = b.at("last_good_lambda").get<double>();
  for (const Json& e : b.at("entries")) {
    SolveResult r;
    fs::path bin = dir / e.at("field").get<std::string>();
    fs::path header = bin;
    header.replace_extension(".json");
    r.u = read_field_binary(d, bin, header);
    r.lambda = e.at("lambda").get<double>();
    r.converged = e.at("converged").get<bool>();
    r.residual = e.at("residual").get<double>();
    r.iterations = e.at("iterations").get<int>();
    r.u_max = e.at("u_max").get<double>();
    r.u_max_location = {e.at("u_max_location")[0].get<double>(), e.at("u_max_location")[1].get<double>()};
    r.vortex_mass = e.at("vortex_mass").get<double>();
    r.log_denominator = e.at("log_denominator").get<double>();
    r.max_density = e.at("max_density").get<double>();
    if (e.contains("diagnostic")) r.diagnostic = e["diagnostic"].get<std::string>();
    branch.entries.push_back(std::move(r));
  }
  return branch;
}

Json to_json(const std::vector<AlphaMass>& zeta) {
  Json z = Json::array();
  for (const AlphaMass& a : zeta) z.push_back({{"alpha", a.alpha}, {"mass", a.mass}});
  return z;
}

Json to_json(const BlowupReport& r) {
  Json j;
  j["lambda"] = r.lambda;
  j["u_max"] = r.u_max;
  j["rho"] = r.rho;
  j["total_mass"] = r.total_mass;
  j["residual_mass"] = r.residual_mass;
  j["regime"] = to_string(r.regime);
  Json peaks = Json::array();
  for (const PeakReport& p : r.peaks)
    peaks.push_back({{"location", {p.peak.location.x, p.peak.location.y}},
                     {"density", p.peak.density},
                     {"mass", p.peak.mass},
                     {"zeta", to_json(p.zeta)},
                     {"pohozaev_residual", p.pohozaev}});
  j["peaks"] = peaks;
  return j;
}

void write_profile(RunContext& ctx, const std::string& name, const RescaledProfile& p) {
  CsvTable t({"y1", "y2", "value"});
  for (int j = -p.half; j <= p.half; ++j)
    for (int i = -p.half; i <= p.half; ++i)
      if (std::isfinite(p.at(i, j))) t.add({p.y(i, j).x, p.y(i, j).y, p.at(i, j)});
  ctx.csv(name, t);
}

// --- commands -------------------------------------------------------------

void cmd_solve(RunContext& ctx, const Setup& s) {
  DiscreteDomain d(s.spec);
  double lambda = s.sweep.number("lambda");
  SolveResult r;
  if (lambda == 0.0) {
    r = newton_solve(d, d.zero_field(), 0.0, s.measure, s.solver);
  } else {
    ContinuationBranch b = continue_lambda(d, 0.0, lambda, s.measure, s.solver);
    if (b.entries.empty()) throw std::runtime_error("solve: continuation produced no entry: " + b.flag);
    r = b.entries.back();
  }
  ctx.field("u", d, r.u, true);
  ctx.json("solve.json", to_json(r, "u.bin"));
  ctx.check("converged", r.converged, r.residual, s.solver.tolerance, r.diagnostic);
  ctx.check("lambda_reached", r.lambda == lambda, r.lambda, lambda);
}

void cmd_continue(RunContext& ctx, const Setup& s) {
  DiscreteDomain d(s.spec);
  double start = s.sweep.number("lambda_start"), end = s.sweep.number("lambda_end");
  ContinuationBranch b = continue_lambda(d, start, end, s.measure, s.solver);
  write_branch(ctx, d, b, start, end);
  check_branch(ctx, b);
}

void cmd_energy(RunContext& ctx, const Setup& s) {
  DiscreteDomain d(s.spec);
  std::vector<double> lambdas = s.sweep.numbers("lambdas");
  int m_min = s.sweep.integer("m_min"), m_max = s.sweep.integer("m_max");
  if (m_max - m_min < 3) throw s.sweep.error("m_max", "need at least 4 values of eps");
  Vec2 center = s.analysis.point("center");
  double radius = s.analysis.number("radius"), tol = s.analysis.number("slope_tolerance");

  CsvTable t({"lambda", "eps", "log_inv_eps2", "dirichlet", "log_denominator", "j"});
  std::vector<PlotSeries> plots;
  Json fits = Json::array();
  for (double lambda : lambdas) {
    PlotSeries p{"lambda/pi = " + format_double(std::round(lambda / kPi * 1e3) / 1e3), {}, {}};
    for (int m = m_min; m <= m_max; ++m) {
      double eps = std::ldexp(1.0, -m);
      BubbleIntegrals in = BubbleField::liouville(center, eps, radius).integrals(d, s.measure);
      double j = 0.5 * in.dirichlet - lambda * in.log_denominator;
      double x = std::log(1.0 / (eps * eps));
      t.add({lambda, eps, x, in.dirichlet, in.log_denominator, j});
      p.x.push_back(x);
      p.y.push_back(j);
    }
    SlopeFit f = fit_line(p.x, p.y);
    double expected = 8 * kPi - lambda;
    double bound = tol * std::max(std::abs(expected), 1.0);
    ctx.check("slope_lambda_" + format_double(std::round(lambda / kPi * 1e3) / 1e3) + "pi", std::abs(f.slope - expected) <= bound,
              f.slope, expected, "tolerance " + format_double(bound));
    fits.push_back({{"lambda", lambda}, {"slope", f.slope}, {"expected", expected}, {"intercept", f.intercept},
                    {"floor", *std::min_element(p.y.begin(), p.y.end())}});
    plots.push_back(std::move(p));
  }
  ctx.csv("energy.csv", t);
  ctx.json("energy.json", {{"fits", fits}});
  ctx.svg("energy.svg", "J along the Liouville bubble family", "log(1/eps^2)", "J", plots);
}

void cmd_mt_check(RunContext& ctx, const Setup& s) {
  DiscreteDomain d(s.spec);
  int cal = s.analysis.integer("calibration_size"), n = s.analysis.integer("corpus_size");
  int modes = s.analysis.integer("max_mode");
  double amp = s.analysis.number("amplitude"), margin = s.analysis.number("margin");
  MtCalibration c = calibrate_mt_constant(d, s.measure, cal, s.seed, modes, amp, margin);
  // The held-out corpus draws from the next seed so it never repeats calibration fields.
  std::mt19937_64 rng(s.seed + 1);
  std::vector<Field> corpus;
  for (int i = 0; i < n; ++i) corpus.push_back(random_smooth_field(d, rng, modes, amp));
  std::vector<double> e(corpus.size()), l(corpus.size());
  parallel_for(static_cast<std::ptrdiff_t>(corpus.size()), [&](std::ptrdiff_t i) {
    e[static_cast<std::size_t>(i)] = dirichlet_energy(d, corpus[static_cast<std::size_t>(i)]);
    l[static_cast<std::size_t>(i)] = log_denominator(d, corpus[static_cast<std::size_t>(i)], s.measure);
  });
  CsvTable t({"index", "dirichlet", "log_denominator", "gap"});
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    double gap = e[i] / (16 * kPi) + std::log(c.constant) - l[i];
    min_gap = std::min(min_gap, gap);
    t.add({static_cast<double>(i), e[i], l[i], gap});
  }
  ctx.csv("mt.csv", t);
  ctx.json("mt.json", {{"constant", c.constant},
                       {"log_constant", std::log(c.constant)},
                       {"max_log_ratio", c.max_log_ratio},
                       {"calibration_size", c.corpus_size},
                       {"corpus_size", n},
                       {"min_gap", min_gap}});
  ctx.check("mt_gap_nonnegative", min_gap >= 0.0, min_gap, 0.0);
}

void cmd_testfn_sweep(RunContext& ctx, const Setup& s) {
  DiscreteDomain d(s.spec);
  BarycenterConfig b;
  b.k = s.analysis.integer("k");
  b.weights = s.analysis.numbers("weights");
  b.angles = s.analysis.numbers("angles");
  b.alpha_tilde = s.analysis.number("alpha_tilde");
  b.eps0 = s.analysis.number("eps0");
  EmbeddedCurve curve = EmbeddedCurve::around_hole(s.spec, s.analysis.optional_number("r_gamma"), b.eps0);
  double lambda = s.sweep.number("lambda");
  auto ladder = geometric_r_ladder(s.sweep.integer("m_min"), s.sweep.integer("m_max"));
  AsymptoticsReport r = jlambda_asymptotics(b, ladder, lambda, s.measure, d, curve,
                                            s.analysis.number("gradient_tolerance"),
                                            s.analysis.number("log_denominator_tolerance"),
                                            s.analysis.number("j_tolerance"));
  CsvTable t({"r", "log_scale", "dirichlet", "log_denominator", "j"});
  for (const AsymptoticsRow& row : r.rows) t.add({row.r, row.log_scale, row.dirichlet, row.log_denominator, row.j});
  ctx.csv("testfn.csv", t);
  auto fit = [](const SlopeFit& f) {
    return Json{{"slope", f.slope}, {"intercept", f.intercept}, {"stderr", f.stderr_slope}};
  };
  ctx.json("testfn.json", {{"gradient", fit(r.gradient_fit)},
                           {"log_denominator", fit(r.log_denominator_fit)},
                           {"j", fit(r.j_fit)},
                           {"gradient_bound", r.gradient_bound},
                           {"log_denominator_bound", r.log_denominator_bound},
                           {"j_bound", r.j_bound},
                           {"condition_holds", r.condition_holds},
                           {"diverges", r.diverges}});
  std::vector<double> x = t.column("log_scale");
  ctx.svg("testfn.svg", "test-function sweep", "log 1/(1-r)", "value",
          {{"int |grad u|^2", x, t.column("dirichlet")},
           {"log int int e^(alpha u)", x, t.column("log_denominator")},
           {"J", x, t.column("j")}});
  ctx.check("gradient_slope", r.gradient_ok, r.gradient_fit.slope, r.gradient_bound);
  ctx.check("log_denominator_slope", r.log_denominator_ok, r.log_denominator_fit.slope, r.log_denominator_bound);
  ctx.check("j_slope", r.j_ok, r.j_fit.slope, r.j_bound);
}

void cmd_blowup(RunContext& ctx, const Setup& s) {
  DomainSpec spec = s.spec;
  IntensityMeasure measure = s.measure;
  std::string branch_path = s.analysis.text("branch");
  ContinuationBranch branch;
  if (!branch_path.empty()) {
    branch = load_branch(branch_path, spec, measure);
  } else {
    DiscreteDomain d(spec);
    double start = s.sweep.number("lambda_start"), end = s.sweep.number("lambda_end");
    branch = continue_lambda(d, start, end, measure, s.solver);
    write_branch(ctx, d, branch, start, end);
  }
  if (branch.entries.empty()) throw std::runtime_error("blowup: empty branch");
  DiscreteDomain d(spec);
  int entry = s.analysis.integer("entry");
  if (entry < 0) entry += static_cast<int>(branch.entries.size());
  if (entry < 0 || entry >= static_cast<int>(branch.entries.size()))
    throw s.analysis.error("entry", "out of range for a branch of " + std::to_string(branch.entries.size()));
  const SolveResult& e = branch.entries[static_cast<std::size_t>(entry)];

  BlowupReport rep = blowup_report(d, e, measure, s.analysis.number("threshold"), s.analysis.optional_number("rho"));
  std::string regime = s.analysis.text("regime");
  if (regime == "auto") regime = rep.regime == Regime::nondegenerate ? "nondeg" : "deg";
  if (regime != "nondeg" && regime != "deg") throw s.analysis.error("regime", "expected auto, nondeg or deg");

  RescaleOptions opt;
  opt.window = s.analysis.number("window");
  opt.half = s.analysis.integer("half");
  opt.log_denominator = e.log_denominator;
  Json j = to_json(rep);
  j["entry"] = entry;
  j["rescaling"] = regime;
  RescaledProfile profile;
  if (regime == "nondeg") {
    NondegenerateRescaling n = rescale_nondegenerate(d, e.u, e.lambda, measure, opt);
    profile = n.profile;
    j["exp_integral"] = n.exp_integral;
    j["perturbation_sup"] = n.perturbation_sup;
  } else {
    DegenerateRescaling g = rescale_degenerate(d, e.u, e.lambda, measure, opt);
    profile = g.profile;
    j["alpha_n"] = g.alpha_n;
    j["v_at_peak"] = g.v_at_peak;
    j["v_sup"] = g.v_sup;
    j["v_bound"] = g.v_bound;
    ctx.check("v_bound", g.v_sup <= g.v_bound, g.v_sup, g.v_bound);
  }
  BubbleFit fit = bubble_fit(profile, opt.window);
  // Rescaled domain reaches dist(x_max, boundary) / sigma from the peak.
  double reach = d.spec().distance_to_boundary(profile.center) / profile.sigma;
  double mass = bubble_mass(fit.delta, reach);
  j["sigma"] = profile.sigma;
  j["fit"] = {{"delta", fit.delta},      {"xi", {fit.xi.x, fit.xi.y}}, {"offset", fit.offset},
              {"rms", fit.rms},          {"points", fit.points},      {"iterations", fit.iterations},
              {"converged", fit.converged}, {"mass", mass},           {"mass_radius", reach}};
  ctx.json("blowup.json", j);
  write_profile(ctx, "peak_0_profile.csv", profile);
  double rms_tol = s.analysis.number("rms_tolerance"), frac = s.analysis.number("mass_fraction");
  ctx.check("bubble_fit_rms", fit.converged && fit.rms <= rms_tol, fit.rms, rms_tol);
  ctx.check("bubble_mass", mass >= frac * 8 * kPi, mass, frac * 8 * kPi);
}

void cmd_quantize(RunContext& ctx, const Setup& s) {
  DiscreteDomain d(s.spec);
  double start = s.sweep.number("lambda_start"), end = s.sweep.number("lambda_end");
  ContinuationBranch branch = continue_lambda(d, start, end, s.measure, s.solver);
  write_branch(ctx, d, branch, start, end);
  QuantizationConfig q;
  q.threshold_fraction = s.analysis.number("threshold");
  q.rho = s.analysis.optional_number("rho");
  q.min_amplitude = s.analysis.number("min_amplitude");
  q.fit_points = s.analysis.integer("fit_points");
  q.tolerance = s.analysis.number("tolerance");
  QuantizationReport r = quantization_check(d, branch, s.measure, q);

  CsvTable t({"lambda", "u_max", "inv_u_max", "peak_mass", "residual_mass"});
  for (const QuantizationEntry& e : r.entries)
    t.add({e.lambda, e.u_max, 1.0 / e.u_max, e.peak_mass.empty() ? std::nan("") : e.peak_mass[0], e.residual_mass});
  ctx.csv("quantize.csv", t);
  Json locations = Json::array();
  for (Vec2 p : r.peak_locations) locations.push_back({p.x, p.y});
  Json j{{"blowup", r.blowup},
         {"verdict", r.verdict},
         {"extrapolated_mass", r.extrapolated_mass},
         {"target", 8 * kPi},
         {"peak_locations", locations},
         {"residual_shrinks", r.residual_shrinks},
         {"pass", r.pass}};
  if (!branch.entries.empty()) j["final_entry"] = to_json(blowup_report(d, branch.entries.back(), s.measure,
                                                                        q.threshold_fraction, q.rho));
  ctx.json("quantize.json", j);
  ctx.svg("quantize.svg", "peak mass against 1 / max u", "1 / max u", "mass",
          {{"peak 0", t.column("inv_u_max"), t.column("peak_mass")}});
  ctx.check("blowup_detected", r.blowup, branch.entries.empty() ? 0.0 : branch.entries.back().u_max,
            q.min_amplitude, r.verdict);
  for (std::size_t i = 0; i < r.extrapolated_mass.size(); ++i)
    ctx.check("extrapolated_mass_" + std::to_string(i),
              std::abs(r.extrapolated_mass[i] - 8 * kPi) <= q.tolerance * 8 * kPi, r.extrapolated_mass[i], 8 * kPi,
              "relative tolerance " + format_double(q.tolerance));
  ctx.check("residual_shrinks", r.residual_shrinks, r.entries.empty() ? 0.0 : r.entries.back().residual_mass, 0.0);
}

void cmd_degree(RunContext& ctx, const Setup& s) {
  int k = s.analysis.integer("k");
  std::string map = s.analysis.text("map");
  std::vector<int> exps;
  if (map == "vandermonde") exps = vandermonde_exponents(k);
  else if (map == "conjugate") exps = conjugate_exponents(k);
  else throw s.analysis.error("map", "expected vandermonde or conjugate");
  DegreeReport r;
  try {
    r = brouwer_degree(k, exps, s.seed, s.analysis.integer("samples"), s.analysis.number("y_norm"),
                       s.analysis.integer("starts"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("analysis", e.what());
  }
  std::vector<std::string> header{"sample"};
  for (int j = 1; j <= k; ++j) {
    header.push_back("re_y" + std::to_string(j));
    header.push_back("im_y" + std::to_string(j));
  }
  for (const char* c : {"positive", "negative", "degree"}) header.emplace_back(c);
  CsvTable t(header);
  Json samples = Json::array();
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const DegreeSample& d = r.samples[i];
    std::vector<double> row{static_cast<double>(i)};
    Json y = Json::array();
    for (Complex c : d.y0) {
      row.push_back(c.real());
      row.push_back(c.imag());
      y.push_back({c.real(), c.imag()});
    }
    row.push_back(d.positive);
    row.push_back(d.negative);
    row.push_back(d.degree());
    t.add(row);
    samples.push_back({{"y0", y}, {"positive", d.positive}, {"negative", d.negative}, {"degree", d.degree()}});
  }
  ctx.csv("degree.csv", t);
  ctx.json("degree.json", {{"k", k}, {"map", map}, {"degree", r.degree}, {"stable", r.stable},
                           {"verdict", r.verdict}, {"samples", samples}});
  ctx.check("degree_stable", r.stable, r.degree, 0.0, r.verdict);
  ctx.check("degree_nonzero", r.degree != 0, r.degree, 0.0);
}

void cmd_minmax(RunContext& ctx, const Setup& s) {
  DiscreteDomain d(s.spec);
  MinmaxConfig c;
  c.k = s.analysis.integer("k");
  c.lambda = s.sweep.number("lambda");
  c.alpha_tilde = s.analysis.number("alpha_tilde");
  c.radial = s.analysis.integer("radial");
  c.angular = s.analysis.integer("angular");
  c.splits = s.analysis.integer("splits");
  c.boundary_radius = s.analysis.number("boundary_radius");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("analysis", e.what());
  }
  EmbeddedCurve curve;
  try {
    curve = EmbeddedCurve::around_hole(s.spec, s.analysis.optional_number("r_gamma"),
                                       s.analysis.optional_number("eps0"));
    curve.validate(d);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("analysis", e.what());
  }
  MinmaxReport r = minmax_upper_bound(c, d, s.measure, curve);
  std::vector<std::string> header{"norm"};
  for (int j = 1; j <= c.k; ++j) {
    header.push_back("re_z" + std::to_string(j));
    header.push_back("im_z" + std::to_string(j));
  }
  for (const char* h : {"j", "moment_error", "boundary"}) header.emplace_back(h);
  CsvTable t(header);
  for (const MinmaxSample& m : r.samples) {
    std::vector<double> row{m.norm};
    for (Complex z : m.z) {
      row.push_back(z.real());
      row.push_back(z.imag());
    }
    row.push_back(m.j);
    row.push_back(m.moment_error);
    row.push_back(m.boundary ? 1.0 : 0.0);
    t.add(row);
  }
  ctx.csv("minmax.csv", t);
  Json arg = Json::array();
  for (Complex z : r.argmax) arg.push_back({z.real(), z.imag()});
  ctx.json("minmax.json", {{"k", c.k},
                           {"lambda", c.lambda},
                           {"sup", r.sup},
                           {"argmax", arg},
                           {"interior_sup", r.interior_sup},
                           {"boundary_max", r.boundary_max},
                           {"boundary_moment_error", r.boundary_moment_error},
                           {"excluded", r.excluded},
                           {"curve", {{"r_gamma", curve.r_gamma}, {"eps0", curve.eps0}}}});
  double gap = s.analysis.number("min_gap"), mtol = s.analysis.number("moment_tolerance");
  ctx.check("sup_finite", std::isfinite(r.sup), r.sup, 0.0);
  ctx.check("boundary_gap", r.interior_sup - r.boundary_max >= gap, r.interior_sup - r.boundary_max, gap);
  ctx.check("boundary_moment_error", r.boundary_moment_error <= mtol, r.boundary_moment_error, mtol);
}

void cmd_green_check(RunContext& ctx, const Setup& s) {
  DiscreteDomain d(s.spec);
  PoissonSolver solver(d);
  int pairs = s.analysis.integer("pairs");
  double margin = s.analysis.number("margin"), factor = s.analysis.number("symmetry_factor");
  std::mt19937_64 rng(s.seed);
  Vec2 lo = d.node(0, 0), hi = d.node(d.nx() - 1, d.ny() - 1);
  std::uniform_real_distribution<double> ux(lo.x, hi.x), uy(lo.y, hi.y);
  auto draw = [&] {
    for (int tries = 0; tries < 100000; ++tries) {
      Vec2 p{ux(rng), uy(rng)};
      if (s.spec.contains(p) && s.spec.distance_to_boundary(p) >= margin) return p;
    }
    throw s.analysis.error("margin", "no interior point this far from the boundary");
  };
  std::vector<std::pair<Vec2, Vec2>> pts;
  while (static_cast<int>(pts.size()) < pairs) {
    Vec2 x = draw(), y = draw();
    if ((x - y).norm() >= 4 * d.h()) pts.emplace_back(x, y);
  }
  std::vector<double> hxy(pts.size()), hyx(pts.size());
  parallel_for(static_cast<std::ptrdiff_t>(pts.size()), [&](std::ptrdiff_t i) {
    auto [x, y] = pts[static_cast<std::size_t>(i)];
    hxy[static_cast<std::size_t>(i)] = regular_part(solver, x, y);
    hyx[static_cast<std::size_t>(i)] = regular_part(solver, y, x);
  });
  CsvTable t({"x1", "x2", "y1", "y2", "h_xy", "h_yx", "difference"});
  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double diff = std::abs(hxy[i] - hyx[i]);
    worst = std::max(worst, diff);
    t.add({pts[i].first.x, pts[i].first.y, pts[i].second.x, pts[i].second.y, hxy[i], hyx[i], diff});
  }
  ctx.csv("green.csv", t);
  ctx.check("symmetry", worst <= factor * d.h(), worst, factor * d.h());

  Vec2 y0 = draw();
  Field g = green_function(solver, y0);
  double mass = d.laplacian_apply(g).values.sum() * d.h() * d.h();
  double mtol = s.analysis.number("mass_tolerance");
  ctx.check("delta_mass", std::abs(mass - 1.0) <= mtol, mass, 1.0);
  ctx.check("green_nonnegative", g.values.minCoeff() >= 0.0, g.values.minCoeff(), 0.0);
  Json j{{"max_symmetry_error", worst}, {"delta_mass", mass}};

  if (s.spec.kind == DomainKind::disk) {
    // Disk of radius R: H(x, x) = log((R^2 - |x - c|^2) / R) / 2 pi.
    double tol = s.analysis.number("oracle_tolerance"), R = s.spec.outer.radius, worst_oracle = 0.0;
    Json rows = Json::array();
    for (double f : {0.0, 0.25, 0.5}) {
      Vec2 x = s.spec.outer.center + Vec2{f * R, 0.0};
      double h = regular_part(solver, x, x);
      double exact = std::log((R * R - f * f * R * R) / R) / (2 * kPi);
      worst_oracle = std::max(worst_oracle, std::abs(h - exact));
      rows.push_back({{"x", {x.x, x.y}}, {"h", h}, {"exact", exact}});
    }
    j["disk_oracle"] = rows;
    ctx.check("disk_diagonal_oracle", worst_oracle <= tol, worst_oracle, tol);
  }
  ctx.json("green.json", j);
}

using Command = std::function<void(RunContext&, const Setup&)>;

const std::map<std::string, Command>& registry() {
  static const std::map<std::string, Command> r{
      {"solve", cmd_solve},   {"continue", cmd_continue}, {"energy", cmd_energy},
      {"mt-check", cmd_mt_check}, {"testfn-sweep", cmd_testfn_sweep}, {"blowup", cmd_blowup},
      {"quantize", cmd_quantize}, {"degree", cmd_degree}, {"minmax", cmd_minmax},
      {"green-check", cmd_green_check}};
  return r;
}

void merge_section(Json& base, const Json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, value] : user.items()) {
    if (!base.contains(key)) throw ConfigError(path + "." + key, "unknown field");
    base[key] = value;
  }
}

}  // namespace

bool RunManifest::passed() const {
  return errors.empty() && !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

Json RunManifest::to_json() const {
  Json j;
  j["manifest_version"] = 1;
  j["command"] = command;
  j["seed"] = config.value("seed", 0);
  j["started"] = started;
  j["finished"] = finished;
  j["config"] = config;
  Json a = Json::array();
  for (const ArtifactRecord& r : artifacts) a.push_back({{"file", r.file}, {"sha256", r.sha256}, {"bytes", r.bytes}});
  j["artifacts"] = a;
  Json c = Json::array();
  for (const Check& k : checks) {
    Json e{{"name", k.name}, {"passed", k.passed}, {"value", k.value}, {"bound", k.bound}};
    if (!k.detail.empty()) e["detail"] = k.detail;
    c.push_back(e);
  }
  j["checks"] = c;
  j["errors"] = errors;
  j["passed"] = passed();
  return j;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"solve",    "continue", "energy", "mt-check", "testfn-sweep",
                                              "blowup",   "quantize", "degree", "minmax",   "green-check"};
  return names;
}

Json default_config(const std::string& command) { return defaults_for(command); }

Json resolve_config(const std::string& command, const Json& user_in) {
  Json config = defaults_for(command);
  if (user_in.is_null()) return config;
  Json user = user_in;
  if (user.contains("manifest_version")) {
    if (user.value("command", "") != command)
      throw ConfigError("command", "manifest was written by '" + user.value("command", "") + "'");
    user = user.at("config");
  }
  if (!user.is_object()) throw ConfigError("config", "expected an object");
  for (const auto& [key, value] : user.items()) {
    if (key == "domain" || key == "measure") {
      config[key] = value;
    } else if (key == "solver" || key == "sweep" || key == "analysis") {
      merge_section(config[key], value, key);
    } else if (key == "seed" || key == "threads") {
      if (!value.is_number_integer() || value.get<long long>() < 0)
        throw ConfigError(key, "expected a non-negative integer");
      config[key] = value;
    } else {
      throw ConfigError(key, "unknown section");
    }
  }
  return config;
}

void apply_override(Json& config, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like path=value");
  std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json* node = &config;
  std::size_t pos = 0;
  while (true) {
    auto dot = path.find('.', pos);
    std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (!node->is_object() || !node->contains(key)) throw ConfigError(path, "unknown field");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

fs::path default_output_root() {
  if (const char* env = std::getenv("MFE_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

RunManifest run(const std::string& command, const Json& config, const fs::path& out_dir) {
  auto it = registry().find(command);
  if (it == registry().end()) throw ConfigError("command", "unknown command '" + command + "'");
  RunManifest manifest;
  manifest.command = command;
  manifest.config = config;
  manifest.started = utc_now();

  Setup setup{domain_from_json(config.at("domain")),
              measure_from_json(config.at("measure")),
              solver_from_json(config.at("solver")),
              config.at("seed").get<std::uint64_t>(),
              Section(config.at("sweep"), "sweep"),
              Section(config.at("analysis"), "analysis")};
  int threads = config.at("threads").get<int>();
  set_thread_count(threads == 0 ? 1 : threads);

  fs::create_directories(out_dir);
  RunContext ctx(manifest, out_dir);
  try {
    it->second(ctx, setup);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    manifest.errors.emplace_back(e.what());
  }
  ctx.finish();
  manifest.finished = utc_now();
  write_json(out_dir / "manifest.json", manifest.to_json());
  return manifest;
}

}  // namespace mfe
