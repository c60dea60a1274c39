#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sensorscan/config.hpp"
#include "sensorscan/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kInternal = 1, kInvalid = 2, kMissing = 3 };

}  // namespace

int main(int argc, char** argv) {
  using namespace sensorscan;

  CLI::App app{"SensorSCAN fault detection and diagnosis pipeline"};
  app.require_subcommand(0, 1);
  bool print_schema = false;
  app.add_flag("--config-schema", print_schema, "print the JSON schema of the config file and exit");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string baseline;
  int seeds = 1;
  std::string axis;

  const char* names[] = {"synth", "ingest", "pretrain", "mine", "cluster", "match", "finetune", "evaluate", "ablate", "report"};
  const char* help[] = {
      "generate the synthetic dataset",
      "read a Run-CSV dataset",
      "self-supervised pretraining of the feature extractor",
      "embed training windows and mine nearest neighbors",
      "train the clustering head",
      "match clusters to process states",
      "fine-tune on a few labeled runs",
      "compute metrics and write reports",
      "run an ablation sweep",
      "re-render report tables",
  };
  for (std::size_t i = 0; i < std::size(names); ++i) {
    auto* cmd = app.add_subcommand(names[i], help[i]);
    cmd->add_option("--config", config_path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "override the global seed");
    cmd->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    if (std::string(names[i]) == "evaluate") {
      cmd->add_option("--baseline", baseline, "also evaluate a baseline")->check(CLI::IsMember({"pca-kmeans"}));
      cmd->add_option("--seeds", seeds, "run the whole pipeline for N consecutive seeds")->check(CLI::PositiveNumber);
    }
    if (std::string(names[i]) == "ablate")
      cmd->add_option("--axis", axis, "ablation axis")
          ->check(CLI::IsMember({"ssl-tasks", "mining", "n-clusters", "fault-subset"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  if (print_schema) {
    std::cout << config::config_schema() << "\n";
    return kOk;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return kInvalid;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    tune_allocator();
    set_default_jobs(jobs);
    auto cfg = config::load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.propagate();
    }
    pipeline::CommandOptions opts;
    opts.baseline = baseline == "pca-kmeans";
    opts.seeds = seeds;
    if (!axis.empty()) opts.axis = axis;

    if (command == "synth") pipeline::cmd_synth(cfg);
    else if (command == "ingest") pipeline::cmd_ingest(cfg);
    else if (command == "pretrain") pipeline::cmd_pretrain(cfg);
    else if (command == "mine") pipeline::cmd_mine(cfg);
    else if (command == "cluster") pipeline::cmd_cluster(cfg);
    else if (command == "match") pipeline::cmd_match(cfg);
    else if (command == "finetune") pipeline::cmd_finetune(cfg);
    else if (command == "evaluate") pipeline::cmd_evaluate(cfg, opts);
    else if (command == "ablate") pipeline::cmd_ablate(cfg, opts);
    else if (command == "report") pipeline::cmd_report(cfg);
    return kOk;
  } catch (const MissingArtifactError& e) {
    std::cerr << "sensorscan " << command << ": missing prerequisite (" << e.stage() << "): " << e.what() << "\n";
    return kMissing;
  } catch (const ValidationError& e) {
    std::cerr << "sensorscan " << command << ": " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "sensorscan " << command << ": internal error: " << e.what() << "\n";
    return kInternal;
  }
}
