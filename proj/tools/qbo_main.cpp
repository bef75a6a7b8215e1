// qbo command-line driver: benchmarks, oracle comparisons, gradient checks,
// and response-surface dumps.
//
// Exit codes: 0 success, 1 scientific validation failure, 2 config error,
// 3 runtime failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "qbo/experiment.hpp"

namespace {

int count_line(const std::string& text, size_t byte_pos) {
  int line = 1;
  for (size_t i = 0; i < byte_pos && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

qbo::json load_config_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw qbo::ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  try {
    return qbo::json::parse(text);
  } catch (const qbo::json::parse_error& e) {
    throw qbo::ConfigError(path + ":" + std::to_string(count_line(text, e.byte)) +
                           ": " + e.what());
  }
}

std::vector<qbo::Family> parse_families(const std::string& csv) {
  std::vector<qbo::Family> out;
  std::istringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(qbo::family_from_name(item));
  return out;
}

void write_report(const std::string& dir, const qbo::json& report) {
  std::filesystem::create_directories(dir);
  qbo::detail::write_file_atomic(std::filesystem::path(dir) / "report.json",
                                 report.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo acquisition functions with pathwise gradients"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run the benchmark grid");
  std::string config_path, output_dir;
  std::vector<std::string> overrides;
  int threads = 0;
  bool full_scale = false;
  std::int64_t seed = -1;
  run->add_option("--config", config_path, "JSON config file");
  run->add_option("--set", overrides, "override config field, key=value")
      ->take_all();
  run->add_option("--threads", threads, "worker thread cap (0 = all cores)");
  run->add_option("--output", output_dir, "output directory");
  run->add_flag("--full-scale", full_scale,
                "d=8, q=8, 256 evaluations, 16 tasks configuration");
  run->add_option("--seed", seed, "master seed");

  // gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "pathwise gradients vs central finite differences");
  std::string gc_families = "EI,PI,UCB,SR,ES_INNER";
  int gc_trials = 50;
  std::uint64_t gc_seed = 7;
  double gc_scale = 1.0;
  std::string gc_output = "qbo_out";
  gradcheck->add_option("--families", gc_families, "comma-separated families");
  gradcheck->add_option("--trials", gc_trials, "random configurations per family");
  gradcheck->add_option("--seed", gc_seed, "seed");
  gradcheck->add_option("--output", gc_output, "output directory");
  gradcheck
      ->add_option("--grad-scale", gc_scale,
                   "scale analytic gradients before comparing (detector test hook)")
      ->group("");

  // oracle
  auto* oracle = app.add_subcommand(
      "oracle", "MC estimators vs closed forms and quadrature");
  std::string or_families = "EI,PI,UCB,SR,ES_INNER";
  std::uint64_t or_seed = 11;
  int or_mc = 200000;
  std::string or_output = "qbo_out";
  oracle->add_option("--families", or_families, "comma-separated families");
  oracle->add_option("--seed", or_seed, "seed");
  oracle->add_option("--mc-samples", or_mc, "MC sample count for comparisons");
  oracle->add_option("--output", or_output, "output directory");

  // surface
  auto* surface = app.add_subcommand(
      "surface", "q=2 response-surface grid over a fixed 1-d posterior");
  std::string sf_family = "EI";
  int sf_grid = 64;
  std::uint64_t sf_seed = 5;
  std::string sf_output = "qbo_out";
  surface->add_option("--family", sf_family, "acquisition family");
  surface->add_option("--grid", sf_grid, "grid resolution per axis")
      ->check(CLI::Range(16, 4096));
  surface->add_option("--seed", sf_seed, "seed");
  surface->add_option("--output", sf_output, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      qbo::json cj;
      try {
        if (!config_path.empty()) cj = load_config_json(config_path);
        else cj = qbo::config_to_json(qbo::ExperimentConfig{});
        if (full_scale) {
          cj["dim"] = 8;
          cj["q"] = 8;
          cj["total_evals"] = 256;
          cj["n_tasks"] = 16;
          cj["n_repeats"] = 1;
          cj["optimizer"]["eval_budget"] = 32768;
          cj["optimizer"]["n_starts"] = 32;
          cj["optimizer"]["sgd_steps"] = 1024;
          cj["optimizer"]["lbfgs_max_iters"] = 50;
          cj["optimizer"]["n_candidates"] = 4096;
        }
        for (const std::string& o : overrides) qbo::apply_override(cj, o);
        qbo::ExperimentConfig cfg = qbo::config_from_json(cj);
        if (threads > 0) cfg.threads = threads;
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        if (seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed);
        qbo::validate_config(cfg);
        return qbo::run_experiment(cfg);
      } catch (const qbo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
      }
    }
    if (gradcheck->parsed()) {
      qbo::GradcheckOptions opts;
      opts.families = parse_families(gc_families);
      opts.trials = gc_trials;
      opts.seed = gc_seed;
      opts.grad_scale = gc_scale;
      bool all_pass = false;
      const qbo::json report = qbo::gradcheck_run(opts, all_pass);
      write_report(gc_output, report);
      std::cout << (all_pass ? "gradcheck: PASS" : "gradcheck: FAIL") << " ("
                << report["entries"].size() << " trials)\n";
      return all_pass ? 0 : 1;
    }
    if (oracle->parsed()) {
      qbo::OracleOptions opts;
      opts.families = parse_families(or_families);
      opts.seed = or_seed;
      opts.n_mc = or_mc;
      opts.n_mc_pair = or_mc;
      bool all_pass = false;
      const qbo::json report = qbo::oracle_run(opts, all_pass);
      write_report(or_output, report);
      std::cout << (all_pass ? "oracle: PASS" : "oracle: FAIL") << " ("
                << report["entries"].size() << " comparisons)\n";
      return all_pass ? 0 : 1;
    }
    if (surface->parsed()) {
      qbo::SurfaceOptions opts;
      opts.family = qbo::family_from_name(sf_family);
      opts.grid = sf_grid;
      opts.seed = sf_seed;
      std::filesystem::create_directories(sf_output);
      const std::string csv = qbo::surface_csv(opts);
      qbo::detail::write_file_atomic(
          std::filesystem::path(sf_output) /
              (std::string("surface_") + qbo::family_name(opts.family) + ".csv"),
          csv);
      return 0;
    }
  } catch (const qbo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
