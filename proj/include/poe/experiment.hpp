#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "poe/analysis.hpp"
#include "poe/config.hpp"
#include "poe/trainer.hpp"

namespace poe {

struct SplitAccuracy {
  double train = 0.0;
  double eval_clean = 0.0;
  double eval_anti = 0.0;
};

// One fully trained experiment cell: the weak learner plus the three main
// variants (CE baseline, PoE, PoE+CE) on the same bundle, same main init.
struct CellResult {
  DatasetBundle bundle;
  TrainRun weak_run;
  FrozenWeakLogits frozen;
  TrainRun main_ce;
  TrainRun main_poe;
  TrainRun main_poe_ce;
  std::map<std::string, SplitAccuracy> accuracy;  // keyed by variant name
};

CellResult run_cell(const ExperimentConfig& config, std::size_t seed_index);

std::string metrics_json(const CellResult& cell, const ExperimentConfig& config,
                         std::size_t seed_index);

// CLI-level operations. Each writes its artifacts (atomically) and returns
// the JSON summary it also persisted.
std::string cmd_gen(const std::string& config_path,
                    const std::string& out_path);
std::string cmd_run(const std::string& config_path,
                    const std::string& out_dir);
std::string cmd_sweep(const std::string& config_path,
                      const std::string& out_dir, std::size_t seeds_override,
                      std::size_t jobs);
// config_path may be empty: the run directory's config.resolved is used.
std::string cmd_analyze(const std::string& config_path,
                        const std::string& run_dir);

// Dataset statistics used by cmd_gen and the C API: alignment/presence
// rates plus Bayes ceiling estimates from the closed-form posterior.
std::string bundle_stats_json(const DatasetBundle& bundle);

void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace poe
