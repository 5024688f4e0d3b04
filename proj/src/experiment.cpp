#include "poe/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "poe/errors.hpp"

namespace poe {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) {
      throw IoError("cannot open '" + tmp + "' for writing");
    }
    os << content;
    if (!os.good()) {
      throw IoError("write failed for '" + tmp + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw IoError("rename '" + tmp + "' -> '" + path + "': " + ec.message());
  }
}

namespace {

SplitAccuracy split_accuracy(const Model& model, const DatasetBundle& bundle) {
  SplitAccuracy acc;
  acc.train = accuracy(predict_all(model, bundle.train));
  acc.eval_clean = accuracy(predict_all(model, bundle.eval_clean));
  acc.eval_anti = accuracy(predict_all(model, bundle.eval_anti));
  return acc;
}

ModelSpec make_spec(const ModelSection& section, const GenSpec& gen,
                    std::uint64_t init_seed) {
  ModelSpec spec;
  spec.arch = section.arch;
  spec.feature_dim = gen.feature_dim;
  spec.hidden_width = section.hidden_width;
  spec.num_classes = gen.num_classes;
  spec.init_seed = init_seed;
  return spec;
}

json accuracy_json(const std::map<std::string, SplitAccuracy>& acc) {
  json out;
  for (const auto& [name, a] : acc) {
    out[name] = {{"train", a.train},
                 {"eval_clean", a.eval_clean},
                 {"eval_anti", a.eval_anti}};
  }
  return out;
}

std::string dynamics_csv_string(const TrainRun& run) {
  std::ostringstream os;
  write_dynamics_csv(run, os);
  return os.str();
}

std::string model_dump_string(const Model& model) {
  std::ostringstream os;
  write_model(model, os);
  return os.str();
}

std::string bundle_dump_string(const DatasetBundle& bundle) {
  std::ostringstream os;
  write_bundle(bundle, os);
  return os.str();
}

char regime_letter(Regime r) {
  switch (r) {
    case Regime::CertainCorrect:
      return 'C';
    case Regime::CertainIncorrect:
      return 'I';
    case Regime::Uncertain:
      return 'U';
  }
  return '?';
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const char* trend_name(const TrendVerdict& v) {
  if (!v.defined) return "no_trend";
  switch (v.trend) {
    case Trend::Increasing:
      return "increasing";
    case Trend::Decreasing:
      return "decreasing";
    case Trend::NoTrend:
      return "no_trend";
  }
  return "no_trend";
}

}  // namespace

CellResult run_cell(const ExperimentConfig& config, std::size_t seed_index) {
  const CellSeeds seeds = derive_cell_seeds(config, seed_index);

  CellResult cell;
  GenSpec gen = config.gen;
  gen.seed = seeds.gen;
  cell.bundle = generate(gen);

  // Stage A: the weak learner, plain cross-entropy.
  TrainConfig weak_cfg = config.weak.train;
  weak_cfg.loss_mode = LossMode::CE;
  weak_cfg.alpha = 0.0;
  weak_cfg.seed = seeds.weak_train;
  const ModelSpec weak_spec =
      make_spec(config.weak, config.gen, seeds.weak_init);
  cell.weak_run = train(init_model(weak_spec), cell.bundle.train, weak_cfg);

  const Model& weak = cell.weak_run.final_model;
  for (const auto* split :
       {&cell.bundle.train, &cell.bundle.eval_clean, &cell.bundle.eval_anti}) {
    for (const Example& ex : *split) {
      cell.frozen.by_id.emplace(ex.id, forward(weak, ex.features));
    }
  }

  // Stage B: three main variants off one shared init, differing only in loss.
  const ModelSpec main_spec =
      make_spec(config.main, config.gen, seeds.main_init);
  TrainConfig main_cfg = config.main.train;
  main_cfg.seed = seeds.main_train;

  main_cfg.loss_mode = LossMode::CE;
  main_cfg.alpha = 0.0;
  cell.main_ce = train(init_model(main_spec), cell.bundle.train, main_cfg);

  main_cfg.loss_mode = LossMode::PoE;
  cell.main_poe =
      train(init_model(main_spec), cell.bundle.train, main_cfg, &cell.frozen);

  main_cfg.loss_mode = LossMode::PoE_CE;
  main_cfg.alpha = config.alpha;
  cell.main_poe_ce =
      train(init_model(main_spec), cell.bundle.train, main_cfg, &cell.frozen);

  cell.accuracy["weak_ce"] = split_accuracy(weak, cell.bundle);
  cell.accuracy["main_ce"] =
      split_accuracy(cell.main_ce.final_model, cell.bundle);
  cell.accuracy["main_poe"] =
      split_accuracy(cell.main_poe.final_model, cell.bundle);
  cell.accuracy["main_poe_ce"] =
      split_accuracy(cell.main_poe_ce.final_model, cell.bundle);
  return cell;
}

std::string metrics_json(const CellResult& cell,
                         const ExperimentConfig& config,
                         std::size_t seed_index) {
  json doc;
  doc["base_seed"] = config.seed;
  doc["seed_index"] = seed_index;
  doc["alpha"] = config.alpha;
  doc["weak_logits_checkpoint"] = "final";
  doc["accuracy"] = accuracy_json(cell.accuracy);
  return doc.dump(2) + "\n";
}

std::string bundle_stats_json(const DatasetBundle& bundle) {
  const auto& spec = bundle.spec;
  json doc;
  doc["num_classes"] = spec.num_classes;
  doc["train_size"] = bundle.train.size();
  doc["eval_size"] = bundle.eval_clean.size();

  std::size_t carriers = 0, aligned = 0;
  for (const Example& ex : bundle.train) {
    carriers += ex.provenance.bias_present ? 1 : 0;
    aligned += ex.provenance.bias_aligned ? 1 : 0;
  }
  doc["train_bias_present_rate"] =
      static_cast<double>(carriers) / static_cast<double>(bundle.train.size());
  doc["train_bias_aligned_rate_among_carriers"] =
      carriers == 0 ? 0.0
                    : static_cast<double>(aligned) /
                          static_cast<double>(carriers);

  // Bayes ceilings: signal-only posterior on eval_clean is the robust
  // ceiling; the bias-aware posterior on train is the biased ceiling.
  auto oracle_accuracy = [&](std::span<const Example> split, bool use_bias) {
    std::size_t hits = 0;
    for (const Example& ex : split) {
      const num::ProbVector post = bayes_oracle(spec, ex, use_bias);
      std::size_t best = 0;
      for (std::size_t j = 1; j < post.size(); ++j) {
        if (post[j] > post[best]) best = j;
      }
      hits += best == ex.gold ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(split.size());
  };
  doc["bayes_signal_only_eval_clean"] =
      oracle_accuracy(bundle.eval_clean, false);
  doc["bayes_with_bias_train"] = oracle_accuracy(bundle.train, true);
  return doc.dump(2) + "\n";
}

std::string cmd_gen(const std::string& config_path,
                    const std::string& out_path) {
  const ExperimentConfig config = load_experiment_config(config_path);
  GenSpec gen = config.gen;
  gen.seed = derive_cell_seeds(config, 0).gen;
  const DatasetBundle bundle = generate(gen);
  write_file_atomic(out_path, bundle_dump_string(bundle));
  json doc = json::parse(bundle_stats_json(bundle));
  doc["path"] = out_path;
  return doc.dump(2) + "\n";
}

std::string cmd_run(const std::string& config_path,
                    const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig config = load_experiment_config(config_path);
  fs::create_directories(out_dir);

  const CellResult cell = run_cell(config, 0);
  const std::string metrics = metrics_json(cell, config, 0);

  write_file_atomic(out_dir + "/config.resolved",
                    resolved_config_text(config));
  write_file_atomic(out_dir + "/dataset.tsv", bundle_dump_string(cell.bundle));
  write_file_atomic(out_dir + "/weak.model",
                    model_dump_string(cell.weak_run.final_model));
  write_file_atomic(out_dir + "/main_ce.model",
                    model_dump_string(cell.main_ce.final_model));
  write_file_atomic(out_dir + "/main_poe.model",
                    model_dump_string(cell.main_poe.final_model));
  write_file_atomic(out_dir + "/main_poe_ce.model",
                    model_dump_string(cell.main_poe_ce.final_model));
  write_file_atomic(out_dir + "/dynamics_weak_ce.csv",
                    dynamics_csv_string(cell.weak_run));
  write_file_atomic(out_dir + "/dynamics_main_ce.csv",
                    dynamics_csv_string(cell.main_ce));
  write_file_atomic(out_dir + "/dynamics_main_poe.csv",
                    dynamics_csv_string(cell.main_poe));
  write_file_atomic(out_dir + "/dynamics_main_poe_ce.csv",
                    dynamics_csv_string(cell.main_poe_ce));
  write_file_atomic(out_dir + "/metrics.json", metrics);

  // Wall-clock and host facts live only here, outside the determinism
  // contract.
  const auto t1 = std::chrono::steady_clock::now();
  char host[256] = "unknown";
  gethostname(host, sizeof(host) - 1);
  std::ostringstream log;
  log << "completed_unix_time="
      << std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
             .count()
      << "\ntotal_seconds=" << std::chrono::duration<double>(t1 - t0).count()
      << "\nhost=" << host << "\n";
  write_file_atomic(out_dir + "/run.log", log.str());
  return metrics;
}

std::string cmd_sweep(const std::string& config_path,
                      const std::string& out_dir, std::size_t seeds_override,
                      std::size_t jobs) {
  const ExperimentConfig base = load_experiment_config(config_path);
  if (base.sweep.axis.empty()) {
    throw InvalidConfig("sweep: config declares no sweep.axis");
  }
  fs::create_directories(out_dir);
  const std::size_t num_seeds =
      seeds_override > 0 ? seeds_override : base.sweep.seeds;
  if (jobs == 0) jobs = 1;

  struct Cell {
    double value = 0.0;
    std::size_t seed_index = 0;
    std::map<std::string, SplitAccuracy> accuracy;
    std::string error;
  };
  std::vector<Cell> cells;
  for (double value : base.sweep.values) {
    for (std::size_t s = 0; s < num_seeds; ++s) {
      cells.push_back({value, s, {}, {}});
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) break;
      Cell& cell = cells[i];
      try {
        ExperimentConfig cfg = base;
        apply_knob(cfg, base.sweep.axis, cell.value);
        validate(cfg.gen);
        cell.accuracy = run_cell(cfg, cell.seed_index).accuracy;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(jobs, cells.size()); ++t) {
    pool.emplace_back(worker);
  }
  for (auto& t : pool) {
    t.join();
  }

  // One row per (value, seed, variant, split); cells are already ordered.
  std::ostringstream csv;
  csv << "axis,value,seed_index,variant,split,accuracy\n";
  for (const Cell& cell : cells) {
    if (!cell.error.empty()) continue;
    for (const auto& [variant, acc] : cell.accuracy) {
      const std::pair<const char*, double> rows[] = {
          {"train", acc.train},
          {"eval_clean", acc.eval_clean},
          {"eval_anti", acc.eval_anti}};
      for (const auto& [split, v] : rows) {
        csv << base.sweep.axis << ',' << fmt(cell.value) << ','
            << cell.seed_index << ',' << variant << ',' << split << ','
            << fmt(v) << '\n';
      }
    }
  }
  write_file_atomic(out_dir + "/sweep.csv", csv.str());

  // Seed-mean accuracies per value, then trend verdicts per variant.
  json summary;
  summary["axis"] = base.sweep.axis;
  summary["seeds"] = num_seeds;
  json errors = json::array();
  for (const Cell& cell : cells) {
    if (!cell.error.empty()) {
      errors.push_back({{"value", cell.value},
                        {"seed_index", cell.seed_index},
                        {"error", cell.error}});
    }
  }
  summary["errors"] = errors;

  const char* variants[] = {"weak_ce", "main_ce", "main_poe", "main_poe_ce"};
  for (const char* variant : variants) {
    std::vector<double> knob, clean, anti;
    json means = json::array();
    for (double value : base.sweep.values) {
      double sum_clean = 0.0, sum_anti = 0.0;
      std::size_t n = 0;
      for (const Cell& cell : cells) {
        if (cell.value != value || !cell.error.empty()) continue;
        const auto it = cell.accuracy.find(variant);
        if (it == cell.accuracy.end()) continue;
        sum_clean += it->second.eval_clean;
        sum_anti += it->second.eval_anti;
        ++n;
      }
      if (n == 0) continue;
      knob.push_back(value);
      clean.push_back(sum_clean / static_cast<double>(n));
      anti.push_back(sum_anti / static_cast<double>(n));
      means.push_back({{"value", value},
                       {"eval_clean_mean", clean.back()},
                       {"eval_anti_mean", anti.back()}});
    }
    json entry;
    entry["means"] = means;
    if (knob.size() >= 3) {
      const SweepTrend trend = sweep_aggregate(knob, clean, anti);
      entry["eval_clean_spearman"] =
          trend.in_dist.defined ? json(trend.in_dist.spearman) : json();
      entry["eval_clean_trend"] = trend_name(trend.in_dist);
      entry["eval_anti_spearman"] =
          trend.anti_bias.defined ? json(trend.anti_bias.spearman) : json();
      entry["eval_anti_trend"] = trend_name(trend.anti_bias);
    }
    summary["variants"][variant] = entry;
  }

  const std::string summary_text = summary.dump(2) + "\n";
  write_file_atomic(out_dir + "/sweep_summary.json", summary_text);
  return summary_text;
}

std::string cmd_analyze(const std::string& config_path,
                        const std::string& run_dir) {
  if (!config_path.empty()) {
    (void)load_experiment_config(config_path);  // fail fast on a bad config
  }
  const DatasetBundle bundle = load_bundle(run_dir + "/dataset.tsv");
  const Model weak = load_model(run_dir + "/weak.model");
  const Model main_ce = load_model(run_dir + "/main_ce.model");
  const Model main_poe = load_model(run_dir + "/main_poe.model");
  const Model main_poe_ce = load_model(run_dir + "/main_poe_ce.model");

  const std::string analysis_dir = run_dir + "/analysis";
  fs::create_directories(analysis_dir);

  const double threshold = default_certainty_threshold(bundle.spec.num_classes);
  json summary;
  summary["certainty_entropy_threshold"] = threshold;

  // Regime projection of the weak model over the training split.
  const Predictions weak_train = predict_all(weak, bundle.train);
  std::vector<std::size_t> gold;
  gold.reserve(bundle.train.size());
  for (const Example& ex : bundle.train) {
    gold.push_back(ex.gold);
  }
  const RegimeProjection proj =
      project_regimes(weak_train.logits, gold, threshold);
  {
    std::ostringstream os;
    os << "example_id,signed_loss,entropy,regime\n";
    for (std::size_t i = 0; i < bundle.train.size(); ++i) {
      os << bundle.train[i].id << ',' << fmt(proj.signed_loss[i]) << ','
         << fmt(proj.entropy[i]) << ',' << regime_letter(proj.tags[i]) << '\n';
    }
    write_file_atomic(analysis_dir + "/regimes.csv", os.str());
  }
  {
    const DensityGrid& g = proj.grid;
    std::ostringstream os;
    os << "ix,iy,x_center,y_center,count,log1p_count\n";
    for (std::size_t iy = 0; iy < g.ny; ++iy) {
      for (std::size_t ix = 0; ix < g.nx; ++ix) {
        const double xc = g.x_lo + (static_cast<double>(ix) + 0.5) *
                                       (g.x_hi - g.x_lo) /
                                       static_cast<double>(g.nx);
        const double yc = g.y_lo + (static_cast<double>(iy) + 0.5) *
                                       (g.y_hi - g.y_lo) /
                                       static_cast<double>(g.ny);
        const auto c = g.counts[iy * g.nx + ix];
        os << ix << ',' << iy << ',' << fmt(xc) << ',' << fmt(yc) << ',' << c
           << ',' << fmt(std::log1p(static_cast<double>(c))) << '\n';
      }
    }
    write_file_atomic(analysis_dir + "/density_grid.csv", os.str());
  }
  std::size_t counts[3] = {};
  for (Regime r : proj.tags) {
    ++counts[static_cast<std::size_t>(r)];
  }
  summary["regimes"] = {{"certain_correct", counts[0]},
                        {"certain_incorrect", counts[1]},
                        {"uncertain", counts[2]}};

  // Bias discovery over the training split.
  const std::size_t top_k =
      std::min<std::size_t>(bundle.train.size(), bundle.train.size() / 10);
  const BiasReport report =
      bias_report(weak_train.logits, bundle.train, top_k, threshold);
  {
    std::ostringstream os;
    os << "example_id,loss,entropy,predicted,gold\n";
    for (const BiasReportRow& row : report.selected) {
      os << row.id << ',' << fmt(row.loss) << ',' << fmt(row.entropy) << ','
         << row.predicted << ',' << row.gold << '\n';
    }
    write_file_atomic(analysis_dir + "/bias_selected.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "token,predicted_class,lift,support,is_reserved_bias_token\n";
    for (const TokenLift& tl : report.token_association) {
      os << tl.token << ',' << tl.predicted_class << ',' << fmt(tl.lift) << ','
         << tl.support << ','
         << (tl.token >= bundle.spec.vocab_size ? 1 : 0) << '\n';
    }
    write_file_atomic(analysis_dir + "/bias_lift.csv", os.str());
  }
  {
    json top_tokens;
    for (std::size_t cls = 0; cls < bundle.spec.num_classes; ++cls) {
      for (const TokenLift& tl : report.token_association) {
        if (tl.predicted_class == cls) {  // association is sorted by lift
          top_tokens[std::to_string(cls)] = {
              {"token", tl.token},
              {"lift", tl.lift},
              {"is_reserved_bias_token", tl.token >= bundle.spec.vocab_size}};
          break;
        }
      }
    }
    summary["bias_report"] = {{"top_k", top_k},
                              {"truncated", report.truncated},
                              {"top_token_per_predicted_class", top_tokens}};
  }

  // Data map of the weak learner's training dynamics, plus regime overlap.
  {
    std::ifstream is(run_dir + "/dynamics_weak_ce.csv", std::ios::binary);
    if (!is) {
      throw IoError("analyze: missing dynamics_weak_ce.csv in '" + run_dir +
                    "'");
    }
    const TrainRun weak_dyn = read_dynamics_csv(is);
    const std::vector<DataMapPoint> map = data_map(weak_dyn);
    std::ostringstream os;
    os << "example_id,confidence,variability,regime\n";
    for (std::size_t i = 0; i < map.size(); ++i) {
      os << map[i].example_id << ',' << fmt(map[i].confidence) << ','
         << fmt(map[i].variability) << ',' << regime_letter(proj.tags[i])
         << '\n';
    }
    write_file_atomic(analysis_dir + "/data_map_weak.csv", os.str());

    const OverlapSummary overlap = region_group_overlap(map, proj.tags);
    const char* group_names[3] = {"certain_correct", "certain_incorrect",
                                  "uncertain"};
    const char* region_names[3] = {"easy_to_learn", "ambiguous",
                                   "hard_to_learn"};
    json groups;
    for (std::size_t g = 0; g < 3; ++g) {
      json row = {{"count", overlap.groups[g].count},
                  {"mean_confidence", overlap.groups[g].mean_confidence},
                  {"mean_variability", overlap.groups[g].mean_variability}};
      for (std::size_t r = 0; r < 3; ++r) {
        row["region_counts"][region_names[r]] = overlap.cross[g][r];
      }
      groups[group_names[g]] = row;
    }
    summary["data_map_overlap"] = {{"degenerate", overlap.degenerate},
                                   {"groups", groups}};
  }

  // Pearson loss correlations against the weak learner on the eval splits.
  {
    json corr;
    const Predictions weak_clean = predict_all(weak, bundle.eval_clean);
    const Predictions weak_anti = predict_all(weak, bundle.eval_anti);
    const std::pair<const char*, const Model*> mains[] = {
        {"main_ce", &main_ce},
        {"main_poe", &main_poe},
        {"main_poe_ce", &main_poe_ce}};
    for (const auto& [name, model] : mains) {
      corr[name]["eval_clean"] = loss_correlation(
          weak_clean.losses, predict_all(*model, bundle.eval_clean).losses);
      corr[name]["eval_anti"] = loss_correlation(
          weak_anti.losses, predict_all(*model, bundle.eval_anti).losses);
    }
    summary["weak_loss_correlation"] = corr;
  }

  const std::string text = summary.dump(2) + "\n";
  write_file_atomic(analysis_dir + "/summary.json", text);
  return text;
}

}  // namespace poe
