#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace poe::num {

// Semantic aliases shared across the library. Logits are unnormalized
// scores in nats; probability vectors have entries in [0,1] summing to 1
// within 1e-9. All losses and entropies below are in nats.
using LogitVector = std::vector<double>;
using ProbVector = std::vector<double>;

// max(x,0) + log1p(exp(-|x|)); overflow-free for any finite x.
double softplus(double x);

// log(sum exp(z_j)) via max subtraction.
double log_sum_exp(std::span<const double> logits);

// Numerically stable softmax. Requires K >= 2 finite entries.
ProbVector softmax(std::span<const double> logits);

// Elementwise logit sum: softmax(w + m) is proportional to
// softmax(w) * softmax(m), the product-of-experts combination.
LogitVector poe_combine(std::span<const double> w, std::span<const double> m);

// -log softmax(logits)[gold], computed through log-sum-exp.
double cross_entropy(std::span<const double> logits, std::size_t gold);

// PoE cross-entropy for a single positive example in the binary
// sigmoid parameterization: -m - w + log(1 + exp(m + w)). Equals
// cross_entropy([m + w, 0], 0) exactly.
double poe_binary_loss(double m, double w);

// -p log p - (1-p) log(1-p), with the 0 log 0 := 0 convention.
double binary_entropy(double p);

// -sum p_j log p_j over a probability vector; in [0, ln K].
double categorical_entropy(std::span<const double> probs);

// Pearson correlation coefficient. Throws UndefinedCorrelation if either
// input is constant.
double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace poe::num
