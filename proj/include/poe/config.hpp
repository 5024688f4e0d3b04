#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "poe/biasgen.hpp"
#include "poe/model.hpp"
#include "poe/trainer.hpp"

namespace poe {

// One model-plus-training section of an experiment config (weak.* / main.*).
struct ModelSection {
  Arch arch = Arch::Linear;
  std::size_t hidden_width = 0;
  std::optional<std::uint64_t> init_seed;   // derived from the base seed if unset
  std::optional<std::uint64_t> train_seed;  // likewise
  TrainConfig train;  // loss_mode, alpha and seed are filled in per variant
};

struct SweepSection {
  std::string axis;  // empty = no sweep declared
  std::vector<double> values;
  std::size_t seeds = 1;
};

// Flat `key = value` experiment description with section prefixes
// (gen.*, weak.*, main.*, sweep.*). `#` starts a comment. The environment
// variable POE_DEBIAS_SEED overrides `seed`.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  GenSpec gen;
  bool gen_seed_explicit = false;
  ModelSection weak;
  ModelSection main;
  double alpha = 0.3;  // main.alpha, the CE weight of the multi-loss
  SweepSection sweep;
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

// Every effective value, defaults materialized; reparses to an identical
// config. Used for the run directory's config.resolved.
std::string resolved_config_text(const ExperimentConfig& config);

// Derived per-cell seeds; seed_index enumerates repeat runs of a sweep cell.
struct CellSeeds {
  std::uint64_t gen = 0;
  std::uint64_t weak_init = 0;
  std::uint64_t weak_train = 0;
  std::uint64_t main_init = 0;
  std::uint64_t main_train = 0;
};

CellSeeds derive_cell_seeds(const ExperimentConfig& config,
                            std::size_t seed_index);

// Overridable sweep knobs: gen.p_cheat, gen.bias_rho, gen.signal_strength,
// weak.hidden_width (0 switches the arch to linear), main.alpha.
void apply_knob(ExperimentConfig& config, const std::string& axis,
                double value);

}  // namespace poe
