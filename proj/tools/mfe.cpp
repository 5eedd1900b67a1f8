// Command-line front end: one subcommand per experiment, every run leaves a
// manifest.json next to its artifacts.
#include "mfe/cli.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> sets;
  std::optional<double> lambda, h, tol, rho, threshold;
  std::optional<int> k;
  std::string lambda_range, regime, branch, domain, measure;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file, or a manifest.json to rerun");
  sub->add_option("--out", f.out, "Output directory (default: $MFE_OUTPUT_ROOT/<command>)");
  sub->add_option("--seed", f.seed, "Seed for every random choice");
  sub->add_option("--threads", f.threads, "Worker threads");
  sub->add_option("--set", f.sets, "Override any field: section.key=value (value parsed as JSON)");
  sub->add_option("--domain", f.domain, "Domain as a JSON object");
  sub->add_option("--measure", f.measure, "Intensity measure as a JSON object");
  sub->add_option("--lambda", f.lambda, "sweep.lambda");
  sub->add_option("--lambda-range", f.lambda_range, "sweep.lambda_start:sweep.lambda_end");
  sub->add_option("--h", f.h, "domain.h");
  sub->add_option("--tol", f.tol, "solver.tolerance");
  sub->add_option("--k", f.k, "analysis.k");
  sub->add_option("--rho", f.rho, "analysis.rho");
  sub->add_option("--threshold", f.threshold, "analysis.threshold");
  sub->add_option("--regime", f.regime, "analysis.regime: auto, nondeg or deg");
  sub->add_option("--branch", f.branch, "analysis.branch: a continue run directory or its manifest");
}

std::string num(double x) { return mfe::format_double(x); }

mfe::Json build_config(const std::string& command, const Flags& f) {
  mfe::Json user;
  if (!f.config.empty()) user = mfe::read_json(f.config);
  mfe::Json config = mfe::resolve_config(command, user);
  std::vector<std::string> sets;
  if (!f.domain.empty()) config["domain"] = mfe::Json::parse(f.domain);
  if (!f.measure.empty()) config["measure"] = mfe::Json::parse(f.measure);
  if (f.seed) sets.push_back("seed=" + std::to_string(*f.seed));
  if (f.threads) sets.push_back("threads=" + std::to_string(*f.threads));
  if (f.lambda) sets.push_back("sweep.lambda=" + num(*f.lambda));
  if (!f.lambda_range.empty()) {
    auto colon = f.lambda_range.find(':');
    if (colon == std::string::npos) throw mfe::ConfigError("--lambda-range", "expected start:end");
    sets.push_back("sweep.lambda_start=" + f.lambda_range.substr(0, colon));
    sets.push_back("sweep.lambda_end=" + f.lambda_range.substr(colon + 1));
  }
  if (f.h) sets.push_back("domain.h=" + num(*f.h));
  if (f.tol) sets.push_back("solver.tolerance=" + num(*f.tol));
  if (f.k) sets.push_back("analysis.k=" + std::to_string(*f.k));
  if (f.rho) sets.push_back("analysis.rho=" + num(*f.rho));
  if (f.threshold) sets.push_back("analysis.threshold=" + num(*f.threshold));
  if (!f.regime.empty()) sets.push_back("analysis.regime=\"" + f.regime + "\"");
  if (!f.branch.empty()) sets.push_back("analysis.branch=" + mfe::Json(f.branch).dump());
  for (const std::string& s : f.sets) sets.push_back(s);
  for (const std::string& s : sets) mfe::apply_override(config, s);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean field equation experiments"};
  app.set_help_flag("--help", "Print this help and exit");
  app.require_subcommand(1);
  Flags flags;
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print the resolved config and exit");
  for (const std::string& name : mfe::command_names()) add_flags(app.add_subcommand(name), flags);
  CLI11_PARSE(app, argc, argv);

  std::string command = app.get_subcommands().front()->get_name();
  try {
    mfe::Json config = build_config(command, flags);
    if (print_config) {
      std::cout << config.dump(2) << '\n';
      return 0;
    }
    std::filesystem::path out = flags.out.empty() ? mfe::default_output_root() / command : std::filesystem::path(flags.out);
    mfe::RunManifest m = mfe::run(command, config, out);
    for (const mfe::Check& c : m.checks)
      std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  value=" << num(c.value) << "  bound=" << num(c.bound)
                << (c.detail.empty() ? "" : "  (" + c.detail + ")") << '\n';
    for (const std::string& e : m.errors) std::cout << "ERROR " << e << '\n';
    std::cout << "manifest: " << (out / "manifest.json").string() << '\n';
    return m.passed() ? 0 : 1;
  } catch (const mfe::ConfigError& e) {
    std::cerr << "config error at " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
}
