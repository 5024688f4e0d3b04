#include "poe/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "poe/errors.hpp"

namespace poe::num {

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw InvalidInput(std::string(what) + ": non-finite entry");
    }
  }
}

}  // namespace

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double log_sum_exp(std::span<const double> logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) {
    s += std::exp(z - m);
  }
  return m + std::log(s);
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.size() < 2) {
    throw InvalidInput("softmax: need at least 2 classes");
  }
  require_finite(logits, "softmax");
  double m = *std::max_element(logits.begin(), logits.end());
  ProbVector out(logits.size());
  double s = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp(logits[j] - m);
    s += out[j];
  }
  for (double& p : out) {
    p /= s;
  }
  return out;
}

LogitVector poe_combine(std::span<const double> w, std::span<const double> m) {
  if (w.size() != m.size()) {
    throw ShapeError("poe_combine: logit lengths differ (" +
                     std::to_string(w.size()) + " vs " +
                     std::to_string(m.size()) + ")");
  }
  LogitVector e(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    e[j] = w[j] + m[j];
  }
  return e;
}

double cross_entropy(std::span<const double> logits, std::size_t gold) {
  if (logits.size() < 2) {
    throw InvalidInput("cross_entropy: need at least 2 classes");
  }
  if (gold >= logits.size()) {
    throw InvalidLabel("cross_entropy: label " + std::to_string(gold) +
                       " out of range for K=" + std::to_string(logits.size()));
  }
  require_finite(logits, "cross_entropy");
  return log_sum_exp(logits) - logits[gold];
}

double poe_binary_loss(double m, double w) {
  if (!std::isfinite(m) || !std::isfinite(w)) {
    throw InvalidInput("poe_binary_loss: non-finite logit");
  }
  // -m - w + log(1 + exp(m + w)) == softplus(-(m + w))
  return softplus(-(m + w));
}

double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InvalidInput("binary_entropy: p must lie in [0,1]");
  }
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
  return h;
}

double categorical_entropy(std::span<const double> probs) {
  if (probs.size() < 2) {
    throw InvalidInput("categorical_entropy: need at least 2 classes");
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < -1e-12 || p > 1.0 + 1e-12) {
      throw InvalidInput("categorical_entropy: entry outside [0,1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InvalidInput("categorical_entropy: probabilities sum to " +
                       std::to_string(sum));
  }
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) {
      h -= p * std::log(p);
    }
  }
  return std::max(h, 0.0);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("pearson: lengths differ");
  }
  if (a.size() < 2) {
    throw InvalidInput("pearson: need at least 2 samples");
  }
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw UndefinedCorrelation("pearson: constant input");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace poe::num
