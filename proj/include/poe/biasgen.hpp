#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "poe/model.hpp"
#include "poe/numkernel.hpp"

namespace poe {

// Generative recipe for one synthetic classification dataset.
//
// Token universe: signal tokens [0, vocab_size) are partitioned into
// num_classes contiguous blocks (sizes differ by at most one); one reserved
// bias token per class lives at vocab_size + c. Token id == feature index,
// which requires feature_dim >= vocab_size + num_classes and keeps the
// Bayes posterior closed-form.
//
// Bias channel, at most one active:
//   p_cheat > 0  (cheating): every train example carries a bias token; it
//     names the gold class with probability p_cheat, else a uniformly
//     chosen wrong class.
//   bias_rho > 0 (soft): a train example carries a bias token with
//     probability bias_rho; when present it names the gold class with
//     probability bias_rho, else a uniformly chosen wrong class. Among
//     carriers the aligned fraction is bias_rho, and the bias-free
//     remainder keeps all three weak-certainty regimes populated.
//   both zero: no bias tokens anywhere.
//
// Evaluation splits: eval_clean carries the bias token at the train
// presence rate but with a uniformly random class (uninformative);
// eval_anti always carries a bias token naming a wrong class.
struct GenSpec {
  std::size_t num_classes = 3;
  std::size_t vocab_size = 200;
  std::size_t feature_dim = 256;
  std::size_t tokens_per_example = 8;
  double signal_strength = 0.8;  // q in (1/K, 1]
  double p_cheat = 0.0;
  double bias_rho = 0.0;
  std::size_t train_size = 5000;
  std::size_t eval_size = 2000;
  std::uint64_t seed = 0;

  bool operator==(const GenSpec&) const = default;

  std::uint32_t bias_token(std::size_t cls) const {
    return static_cast<std::uint32_t>(vocab_size + cls);
  }
  // [lo, hi) signal-token block owned by class `cls`.
  std::uint32_t block_lo(std::size_t cls) const;
  std::uint32_t block_hi(std::size_t cls) const;
};

void validate(const GenSpec& spec);

struct Provenance {
  bool bias_present = false;
  bool bias_aligned = false;
  bool operator==(const Provenance&) const = default;
};

struct Example {
  std::uint64_t id = 0;
  FeatureVector features;
  std::size_t gold = 0;
  Provenance provenance;
};

bool operator==(const Example& a, const Example& b);

struct DatasetBundle {
  GenSpec spec;
  std::vector<Example> train;
  std::vector<Example> eval_clean;
  std::vector<Example> eval_anti;
};

bool operator==(const DatasetBundle& a, const DatasetBundle& b);

DatasetBundle generate(const GenSpec& spec);

// Exact class posterior of an example under the train-split generative
// process, optionally conditioning on the bias token.
num::ProbVector bayes_oracle(const GenSpec& spec, const Example& x,
                             bool use_bias);

// Line-oriented textual format, LF endings:
//   # poe-dataset v1
//   # genspec key=value ...
//   # split train|eval_clean|eval_anti
//   id<TAB>gold<TAB>bias_present<TAB>bias_aligned<TAB>idx:count,idx:count,...
void save_bundle(const DatasetBundle& bundle, const std::string& path);
DatasetBundle load_bundle(const std::string& path);
void write_bundle(const DatasetBundle& bundle, std::ostream& os);
DatasetBundle read_bundle(std::istream& is);

}  // namespace poe
