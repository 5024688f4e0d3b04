#include "poe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "poe/errors.hpp"

namespace poe {

double default_certainty_threshold(std::size_t num_classes) {
  return 0.5 * std::log(static_cast<double>(num_classes));
}

RegimeProjection project_regimes(std::span<const num::LogitVector> weak_logits,
                                 std::span<const std::size_t> gold_labels,
                                 double entropy_threshold, std::size_t grid_nx,
                                 std::size_t grid_ny) {
  if (weak_logits.size() != gold_labels.size()) {
    throw ShapeError("project_regimes: logits/labels length mismatch");
  }
  if (weak_logits.empty()) {
    throw InvalidInput("project_regimes: empty input");
  }
  const std::size_t k = weak_logits.front().size();
  const double max_entropy = std::log(static_cast<double>(k));
  if (!(entropy_threshold > 0.0 && entropy_threshold < max_entropy)) {
    throw InvalidInput("project_regimes: threshold must lie in (0, ln K)");
  }

  RegimeProjection out;
  const std::size_t n = weak_logits.size();
  out.tags.reserve(n);
  out.signed_loss.reserve(n);
  out.entropy.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& z = weak_logits[i];
    if (z.size() != k) {
      throw ShapeError("project_regimes: ragged logit vectors");
    }
    const std::size_t gold = gold_labels[i];
    const double loss = num::cross_entropy(z, gold);
    const num::ProbVector p = num::softmax(z);
    const double h = num::categorical_entropy(p);
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (z[j] > z[best]) best = j;
    }
    const bool correct = best == gold;
    const bool certain = h < entropy_threshold;
    out.tags.push_back(!certain ? Regime::Uncertain
                                : (correct ? Regime::CertainCorrect
                                           : Regime::CertainIncorrect));
    out.signed_loss.push_back(correct ? -loss : loss);
    out.entropy.push_back(h);
  }

  DensityGrid& grid = out.grid;
  grid.nx = grid_nx;
  grid.ny = grid_ny;
  const auto [x_min, x_max] =
      std::minmax_element(out.signed_loss.begin(), out.signed_loss.end());
  grid.x_lo = *x_min;
  grid.x_hi = *x_max + 1e-12;
  grid.y_lo = 0.0;
  grid.y_hi = max_entropy;
  grid.counts.assign(grid_nx * grid_ny, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto bin = [](double v, double lo, double hi, std::size_t cells) {
      const double f = (v - lo) / (hi - lo);
      const auto idx = static_cast<long>(f * static_cast<double>(cells));
      return static_cast<std::size_t>(
          std::clamp<long>(idx, 0, static_cast<long>(cells) - 1));
    };
    const std::size_t ix = bin(out.signed_loss[i], grid.x_lo, grid.x_hi, grid_nx);
    const std::size_t iy = bin(out.entropy[i], grid.y_lo, grid.y_hi, grid_ny);
    ++grid.counts[iy * grid_nx + ix];
  }
  return out;
}

BiasReport bias_report(std::span<const num::LogitVector> weak_logits,
                       std::span<const Example> data, std::size_t top_k,
                       double entropy_threshold) {
  if (weak_logits.size() != data.size()) {
    throw ShapeError("bias_report: logits/data length mismatch");
  }
  if (top_k > data.size()) {
    throw InvalidInput("bias_report: top_k exceeds dataset size");
  }
  BiasReport report;
  if (top_k == 0) {
    return report;
  }

  std::vector<BiasReportRow> candidates;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& z = weak_logits[i];
    const num::ProbVector p = num::softmax(z);
    const double h = num::categorical_entropy(p);
    if (h >= entropy_threshold) {
      continue;
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < z.size(); ++j) {
      if (z[j] > z[best]) best = j;
    }
    candidates.push_back({data[i].id, num::cross_entropy(z, data[i].gold), h,
                          best, data[i].gold});
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const BiasReportRow& a, const BiasReportRow& b) {
              if (a.loss != b.loss) return a.loss > b.loss;
              return a.id < b.id;
            });
  if (candidates.size() < top_k) {
    report.truncated = true;
  } else {
    candidates.resize(top_k);
  }
  report.selected = std::move(candidates);

  // Corpus presence counts (an example counts once per token it contains).
  std::map<std::uint32_t, std::uint64_t> corpus_presence;
  for (const Example& ex : data) {
    for (std::uint32_t t : ex.features.indices) {
      ++corpus_presence[t];
    }
  }

  // Presence counts within the selected slice, per predicted class.
  std::map<std::size_t, std::uint64_t> class_sizes;
  std::map<std::pair<std::size_t, std::uint32_t>, std::uint64_t> slice_presence;
  std::map<std::uint64_t, const Example*> by_id;
  for (const Example& ex : data) {
    by_id[ex.id] = &ex;
  }
  for (const BiasReportRow& row : report.selected) {
    ++class_sizes[row.predicted];
    for (std::uint32_t t : by_id.at(row.id)->features.indices) {
      ++slice_presence[{row.predicted, t}];
    }
  }

  const double corpus_n = static_cast<double>(data.size());
  for (const auto& [key, count] : slice_presence) {
    const auto& [cls, token] = key;
    const double p_corpus =
        static_cast<double>(corpus_presence.at(token)) / corpus_n;
    const double p_slice = static_cast<double>(count) /
                           static_cast<double>(class_sizes.at(cls));
    report.token_association.push_back(
        {token, cls, p_slice / p_corpus, count});
  }
  std::sort(report.token_association.begin(), report.token_association.end(),
            [](const TokenLift& a, const TokenLift& b) {
              if (a.predicted_class != b.predicted_class) {
                return a.predicted_class < b.predicted_class;
              }
              if (a.lift != b.lift) return a.lift > b.lift;
              return a.token < b.token;
            });
  return report;
}

double loss_correlation(std::span<const double> weak_losses,
                        std::span<const double> model_losses) {
  return num::pearson(weak_losses, model_losses);
}

std::vector<DataMapPoint> data_map(const TrainRun& run) {
  const std::size_t epochs = run.per_epoch_gold_prob.size();
  if (epochs < 2) {
    throw InvalidInput("data_map: need at least 2 epochs of dynamics");
  }
  const std::size_t n = run.example_ids.size();
  std::vector<DataMapPoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t e = 0; e < epochs; ++e) {
      mean += run.per_epoch_gold_prob[e][i];
    }
    mean /= static_cast<double>(epochs);
    double var = 0.0;
    for (std::size_t e = 0; e < epochs; ++e) {
      const double d = run.per_epoch_gold_prob[e][i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(epochs);
    out[i] = {run.example_ids[i], mean, std::sqrt(var)};
  }
  return out;
}

OverlapSummary region_group_overlap(std::span<const DataMapPoint> map,
                                    std::span<const Regime> regimes) {
  if (map.size() != regimes.size()) {
    throw ShapeError("region_group_overlap: map/regimes length mismatch");
  }
  if (map.empty()) {
    throw InvalidInput("region_group_overlap: empty input");
  }
  OverlapSummary summary;
  const std::size_t n = map.size();
  for (std::size_t i = 0; i < n; ++i) {
    GroupStats& g = summary.groups[static_cast<std::size_t>(regimes[i])];
    ++g.count;
    g.mean_confidence += map[i].confidence;
    g.mean_variability += map[i].variability;
  }
  for (GroupStats& g : summary.groups) {
    if (g.count > 0) {
      g.mean_confidence /= static_cast<double>(g.count);
      g.mean_variability /= static_cast<double>(g.count);
    }
  }

  if (n < 3) {
    summary.degenerate = true;
    return summary;
  }

  // Rank terciles (ties broken by index for determinism).
  auto ranked = [&](auto key) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return key(map[a]) < key(map[b]);
    });
    std::vector<std::size_t> rank(n);
    for (std::size_t r = 0; r < n; ++r) {
      rank[idx[r]] = r;
    }
    return rank;
  };
  const std::vector<std::size_t> conf_rank =
      ranked([](const DataMapPoint& p) { return p.confidence; });
  const std::vector<std::size_t> var_rank =
      ranked([](const DataMapPoint& p) { return p.variability; });
  const std::size_t third = n / 3;

  for (std::size_t i = 0; i < n; ++i) {
    const bool top_conf = conf_rank[i] >= n - third;
    const bool bottom_conf = conf_rank[i] < third;
    const bool top_var = var_rank[i] >= n - third;
    const bool bottom_var = var_rank[i] < third;
    const auto g = static_cast<std::size_t>(regimes[i]);
    if (top_conf && bottom_var) {
      ++summary.cross[g][static_cast<std::size_t>(Region::EasyToLearn)];
    }
    if (top_var) {
      ++summary.cross[g][static_cast<std::size_t>(Region::Ambiguous)];
    }
    if (bottom_conf) {
      ++summary.cross[g][static_cast<std::size_t>(Region::HardToLearn)];
    }
  }
  return summary;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) {
      ++j;
    }
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t t = i; t <= j; ++t) {
      rank[idx[t]] = avg;
    }
    i = j + 1;
  }
  return rank;
}

TrendVerdict trend_of(std::span<const double> knob,
                      std::span<const double> acc) {
  TrendVerdict verdict;
  try {
    verdict.spearman = spearman(knob, acc);
    verdict.defined = true;
    verdict.trend = verdict.spearman > 0.0
                        ? Trend::Increasing
                        : (verdict.spearman < 0.0 ? Trend::Decreasing
                                                  : Trend::NoTrend);
  } catch (const UndefinedCorrelation&) {
    verdict.defined = false;
    verdict.trend = Trend::NoTrend;
  }
  return verdict;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("spearman: lengths differ");
  }
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  return num::pearson(ra, rb);
}

SweepTrend sweep_aggregate(std::span<const double> knob_values,
                           std::span<const double> in_dist_acc,
                           std::span<const double> anti_bias_acc) {
  if (knob_values.size() < 3) {
    throw InvalidInput("sweep_aggregate: need at least 3 knob values");
  }
  if (in_dist_acc.size() != knob_values.size() ||
      anti_bias_acc.size() != knob_values.size()) {
    throw ShapeError("sweep_aggregate: accuracy series length mismatch");
  }
  SweepTrend trend;
  trend.in_dist = trend_of(knob_values, in_dist_acc);
  trend.anti_bias = trend_of(knob_values, anti_bias_acc);
  return trend;
}

}  // namespace poe
