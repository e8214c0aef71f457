// kanwx command line: config-driven benchmark harness for the weather
// forecasting models.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kanwx/benchmark.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kanwx - KAN / TKAN / RNN daily weather forecasting benchmark"};
  app.set_version_flag("--version", std::string("kanwx ") + kanwx::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string models_csv, targets_csv, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t workers = 0;

  CLI::App* run = app.add_subcommand("run", "run a benchmark config");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("--seed", seed, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });
  run->add_option("--models", models_csv,
                  "comma-separated model subset (overrides config)");
  run->add_option("--targets", targets_csv,
                  "comma-separated target subset (overrides config)");
  run->add_option("--out", out_dir, "output directory (overrides config)");
  run->add_option("--workers", workers, "parallel training jobs");

  CLI11_PARSE(app, argc, argv);

  try {
    std::ifstream in(config_path);
    if (!in) {
      std::fprintf(stderr, "error: cannot open config '%s'\n",
                   config_path.c_str());
      return 2;
    }
    nlohmann::json j;
    in >> j;
    kanwx::BenchmarkConfig cfg = kanwx::benchmark_config_from_json(j);

    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (workers > 0) cfg.workers = workers;
    if (!models_csv.empty()) {
      cfg.models.clear();
      for (const std::string& m : split_list(models_csv))
        cfg.models.push_back(kanwx::parse_model_kind(m));
    }
    if (!targets_csv.empty()) cfg.targets = split_list(targets_csv);

    const kanwx::BenchmarkReport report = kanwx::run_benchmark(cfg, true);
    std::size_t ok = 0;
    for (const kanwx::JobResult& job : report.jobs) ok += job.ok ? 1 : 0;
    std::printf("%zu/%zu jobs succeeded in %.1f s; outputs in %s\n", ok,
                report.jobs.size(),
                static_cast<double>(report.wall_ms) / 1000.0,
                cfg.output_dir.c_str());
    return report.all_ok ? 0 : 1;
  } catch (const kanwx::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
