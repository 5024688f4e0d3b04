// Experiment driver for the poe_debias library. Thin by design: argument
// parsing and output live here, everything else goes through the C API.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "poe_debias.h"

namespace {

int finish(poe_status status, char* json) {
  if (json != nullptr) {
    std::fputs(json, stdout);
    poe_string_free(json);
  }
  if (status != POE_OK) {
    std::fprintf(stderr, "error: %s\n", poe_last_error());
  }
  return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Product-of-experts debiased training experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(poe_version()));

  std::string config_path;
  std::string out_path;
  std::size_t seeds = 0;
  std::size_t jobs = 1;

  CLI::App* gen = app.add_subcommand(
      "gen", "Generate a synthetic dataset file and print its statistics");
  gen->add_option("--config", config_path, "Experiment config file")
      ->required();
  gen->add_option("--out", out_path, "Output dataset path")->required();

  CLI::App* run = app.add_subcommand(
      "run", "Two-stage training run: weak learner plus CE/PoE/PoE+CE mains");
  run->add_option("--config", config_path, "Experiment config file")
      ->required();
  run->add_option("--out", out_path, "Run output directory")->required();

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Sweep the config's declared axis across seeds");
  sweep->add_option("--config", config_path, "Experiment config file")
      ->required();
  sweep->add_option("--out", out_path, "Sweep output directory")->required();
  sweep->add_option("--seeds", seeds, "Override sweep.seeds");
  sweep->add_option("--jobs", jobs, "Worker threads");

  CLI::App* analyze = app.add_subcommand(
      "analyze", "Post-hoc analyses over a run directory");
  analyze->add_option("--config", config_path, "Experiment config file");
  analyze->add_option("--out", out_path, "Run directory to analyze")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // CLI11's own exit codes are remapped onto the config-error contract,
    // keeping 0 for --help/--version.
    return code == 0 ? 0 : static_cast<int>(POE_ERROR_CONFIG);
  }

  char* json = nullptr;
  poe_status status = POE_ERROR_CONFIG;
  if (gen->parsed()) {
    status = poe_cmd_gen(config_path.c_str(), out_path.c_str(), &json);
  } else if (run->parsed()) {
    status = poe_cmd_run(config_path.c_str(), out_path.c_str(), &json);
  } else if (sweep->parsed()) {
    status =
        poe_cmd_sweep(config_path.c_str(), out_path.c_str(), seeds, jobs, &json);
  } else if (analyze->parsed()) {
    status =
        poe_cmd_analyze(config_path.empty() ? nullptr : config_path.c_str(),
                        out_path.c_str(), &json);
  }
  return finish(status, json);
}
