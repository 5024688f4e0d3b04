#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "poe/numkernel.hpp"

namespace poe {

// Sparse token-bag features: strictly increasing indices into a feature
// space of dimension D, with positive per-token multiplicities.
struct FeatureVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> counts;
};

enum class Arch { Linear, Mlp };

struct ModelSpec {
  Arch arch = Arch::Linear;
  std::size_t feature_dim = 0;
  std::size_t hidden_width = 0;  // 0 iff arch == Linear
  std::size_t num_classes = 0;
  std::uint64_t init_seed = 0;

  std::size_t param_count() const;
};

// Flat parameter store. Layout contract (row-major throughout):
//   Linear: [ W (K x D), b (K) ]
//   Mlp:    [ W1 (H x D), b1 (H), W2 (K x H), b2 (K) ]
// The optimizer and the gradient checker index into this layout directly,
// so it must never change without a dump-format version bump.
struct Model {
  ModelSpec spec;
  std::vector<double> parameters;
};

using Gradient = std::vector<double>;

enum class LossMode { CE, PoE, PoE_CE };

// Deterministic init: weights uniform(-s, s) with s = sqrt(6/(fan_in+fan_out)),
// biases zero. Identical spec (including init_seed) gives identical bits.
Model init_model(const ModelSpec& spec);

// Linear: logits = W x + b. Mlp: one tanh hidden layer. Only the active
// features of x are touched.
num::LogitVector forward(const Model& model, const FeatureVector& x);

struct LossGrad {
  double loss = 0.0;
  Gradient grad;
};

// Loss and analytic parameter gradient of cross_entropy(forward(model,x), gold).
LossGrad grad_ce(const Model& model, const FeatureVector& x, std::size_t gold);

// PoE loss against frozen weak logits: cross_entropy(w + m, gold) with the
// gradient flowing through m only (output-logit gradient softmax(w+m) - onehot).
LossGrad grad_poe(const Model& model, const FeatureVector& x, std::size_t gold,
                  std::span<const double> frozen_w);

// poe_loss + alpha * ce_loss on the model's own logits; alpha = 0 reduces
// exactly to grad_poe.
LossGrad grad_multiloss(const Model& model, const FeatureVector& x,
                        std::size_t gold, std::span<const double> frozen_w,
                        double alpha);

struct GradProbe {
  FeatureVector x;
  std::size_t gold = 0;
  LossMode mode = LossMode::CE;
  num::LogitVector frozen_w;  // required for PoE / PoE_CE
  double alpha = 0.0;
};

// Central finite differences over every parameter. Returns the maximum of
// |analytic - numeric| / max(|analytic|, |numeric|, scale_floor) so that a
// result below rel_tol simultaneously enforces relative error rel_tol on
// entries above scale_floor and absolute error rel_tol*scale_floor below it
// (with the default floor 1e-3 that is 1e-9 absolute near zero).
double grad_check(const Model& model, const GradProbe& probe, double epsilon,
                  double scale_floor = 1e-3);

// Versioned textual dump; round trip is bit-exact.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);
void write_model(const Model& model, std::ostream& os);
Model read_model(std::istream& is);

}  // namespace poe
