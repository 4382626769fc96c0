// mv-ergo: run one experiment from a JSON config and write its artifacts.
#include <iostream>

#include "CLI11.hpp"
#include "mvlab/experiment.hpp"

using namespace mvlab;

namespace {

struct Options {
  std::string config;
  std::string output_dir;
  int threads = 0;
};

int execute(const std::string& experiment, const Options& o) {
  const auto cfg = lab::load_config(o.config, experiment);
  sim::set_num_threads(o.threads);
  const std::string out = o.output_dir.empty() ? cfg.output_dir : o.output_dir;
  const auto r = lab::run_experiment(cfg, out);
  std::cout << r.summary.dump(2) << "\n";
  for (const auto& f : r.files) std::cerr << "wrote " << (std::filesystem::path(out) / f).string() << "\n";
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"McKean-Vlasov ergodicity lab"};
  app.set_version_flag("--version", "mv-ergo " + lab::version_string());
  app.require_subcommand(1);

  Options opt;
  std::string chosen;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config,-c", opt.config, "experiment config (JSON)")->required();
    sub->add_option("--threads,-j", opt.threads, "worker threads (outputs do not depend on it)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--output-dir,-o", opt.output_dir, "artifact directory (overrides output_dir)");
  };
  for (const auto& name : lab::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    add_common(sub);
    sub->callback([&chosen, name] { chosen = name; });
  }
  auto* run = app.add_subcommand("run", "run the experiment named in the config");
  add_common(run);
  run->callback([&chosen] { chosen = ""; });
  auto* models = app.add_subcommand("list-models", "list builtin models and their parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : lab::exit_code::schema;
  }

  if (models->parsed()) {
    std::cout << lab::list_models();
    return lab::exit_code::ok;
  }
  try {
    return execute(chosen, opt);
  } catch (const lab::SchemaError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return lab::exit_code::schema;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return lab::exit_code::io;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lab::exit_code::error;
  }
}
