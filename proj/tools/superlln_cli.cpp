#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "superlln/config.hpp"
#include "superlln/random.hpp"

int main(int argc, char** argv) {
  CLI::App app{"superlln: particle experiments for superdiffusion laws of large numbers"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out_dir;
  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("--config", config_path, "YAML config")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "override simulation.seed");
  run->add_option("--workers", workers, "worker threads (default: available parallelism)")
      ->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "output directory (overrides output.dir)");

  app.add_subcommand("list-examples", "print the example registry");

  int dim = 1;
  auto* fields = app.add_subcommand("check-fields", "finite-difference check of registry fields");
  fields->add_option("--dim", dim, "spatial dimension")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("list-examples")) {
      superlln::list_examples(std::cout);
      return 0;
    }
    if (app.got_subcommand("check-fields")) return superlln::check_fields(std::cout, dim) ? 0 : 1;

    superlln::RunConfig cfg = superlln::parse_config(config_path);
    if (seed) cfg.experiment.seed = *seed;
    cfg.experiment.workers = workers ? *workers : superlln::default_workers();
    if (out_dir) cfg.out_dir = *out_dir;
    const superlln::RunOutcome outcome = superlln::run(cfg);
    for (const auto& w : outcome.result.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& f : outcome.result.flags)
      std::cout << (f.passed ? "ok    " : "FAIL  ") << f.name << "  " << f.detail << '\n';
    std::cout << outcome.message << "\nartifacts in " << cfg.out_dir << '\n';
    return outcome.exit_code;
  } catch (const superlln::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
