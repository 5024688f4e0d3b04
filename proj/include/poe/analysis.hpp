#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "poe/biasgen.hpp"
#include "poe/numkernel.hpp"
#include "poe/trainer.hpp"

namespace poe {

// The three weak-learner gradient regimes: correctness is argmax match,
// certainty is prediction entropy below a threshold.
enum class Regime { CertainCorrect, CertainIncorrect, Uncertain };

// The paper never quantifies "low entropy"; a scale-free fraction of the
// maximal entropy ln K generalizes across class counts.
double default_certainty_threshold(std::size_t num_classes);

struct DensityGrid {
  double x_lo = 0.0, x_hi = 0.0;  // correctness-signed loss
  double y_lo = 0.0, y_hi = 0.0;  // prediction entropy
  std::size_t nx = 0, ny = 0;
  std::vector<std::uint64_t> counts;  // row-major [iy * nx + ix]
};

struct RegimeProjection {
  std::vector<Regime> tags;
  std::vector<double> signed_loss;  // negative when correct
  std::vector<double> entropy;
  DensityGrid grid;
};

RegimeProjection project_regimes(std::span<const num::LogitVector> weak_logits,
                                 std::span<const std::size_t> gold_labels,
                                 double entropy_threshold,
                                 std::size_t grid_nx = 40,
                                 std::size_t grid_ny = 20);

struct BiasReportRow {
  std::uint64_t id = 0;
  double loss = 0.0;
  double entropy = 0.0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

struct TokenLift {
  std::uint32_t token = 0;
  std::size_t predicted_class = 0;
  double lift = 0.0;
  std::uint64_t support = 0;  // occurrences within the selected slice
};

struct BiasReport {
  std::vector<BiasReportRow> selected;  // sorted by loss descending
  std::vector<TokenLift> token_association;
  bool truncated = false;  // fewer certain candidates than top_k
};

// Selects the top_k highest-loss examples among those the weak model is
// certain about, then scores every (token, predicted class) pair by
// lift = P(token | selected, predicted=c) / P(token | corpus).
BiasReport bias_report(std::span<const num::LogitVector> weak_logits,
                       std::span<const Example> data, std::size_t top_k,
                       double entropy_threshold);

// Pearson correlation between per-example losses of two models on an
// aligned eval split.
double loss_correlation(std::span<const double> weak_losses,
                        std::span<const double> model_losses);

struct DataMapPoint {
  std::uint64_t example_id = 0;
  double confidence = 0.0;   // mean gold-label probability across epochs
  double variability = 0.0;  // population standard deviation across epochs
};

std::vector<DataMapPoint> data_map(const TrainRun& run);

struct GroupStats {
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double mean_variability = 0.0;
};

enum class Region { EasyToLearn, Ambiguous, HardToLearn };

struct OverlapSummary {
  GroupStats groups[3];          // indexed by Regime
  std::uint64_t cross[3][3] = {};  // [Regime][Region] counts
  bool degenerate = false;       // fewer than 3 points: no terciles
};

// Rank-tercile regions: easy-to-learn = top confidence third and bottom
// variability third; ambiguous = top variability third; hard-to-learn =
// bottom confidence third.
OverlapSummary region_group_overlap(std::span<const DataMapPoint> map,
                                    std::span<const Regime> regimes);

// Spearman rank correlation (average ranks on ties). Throws
// UndefinedCorrelation when either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

enum class Trend { Increasing, Decreasing, NoTrend };

struct TrendVerdict {
  bool defined = false;
  double spearman = 0.0;
  Trend trend = Trend::NoTrend;
};

struct SweepTrend {
  TrendVerdict in_dist;
  TrendVerdict anti_bias;
};

// Monotone-trend verdicts over multi-seed mean accuracies per knob value.
SweepTrend sweep_aggregate(std::span<const double> knob_values,
                           std::span<const double> in_dist_acc,
                           std::span<const double> anti_bias_acc);

}  // namespace poe
