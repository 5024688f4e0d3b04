#include "poe/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "poe/errors.hpp"
#include "poe/rng.hpp"

namespace poe {

namespace {

void validate_spec(const ModelSpec& spec) {
  if (spec.feature_dim < 1) {
    throw InvalidConfig("model: feature_dim must be >= 1");
  }
  if (spec.num_classes < 2) {
    throw InvalidConfig("model: num_classes must be >= 2");
  }
  if ((spec.arch == Arch::Linear) != (spec.hidden_width == 0)) {
    throw InvalidConfig("model: hidden_width must be 0 iff arch is linear");
  }
}

void validate_features(const Model& model, const FeatureVector& x) {
  if (x.indices.size() != x.counts.size()) {
    throw ShapeError("features: indices/counts length mismatch");
  }
  std::uint32_t prev = 0;
  for (std::size_t i = 0; i < x.indices.size(); ++i) {
    if (x.indices[i] >= model.spec.feature_dim) {
      throw ShapeError("features: index " + std::to_string(x.indices[i]) +
                       " outside feature_dim " +
                       std::to_string(model.spec.feature_dim));
    }
    if (i > 0 && x.indices[i] <= prev) {
      throw ShapeError("features: indices must be strictly increasing");
    }
    if (!(x.counts[i] > 0.0)) {
      throw InvalidInput("features: counts must be positive");
    }
    prev = x.indices[i];
  }
}

// Hidden activations for the MLP path; empty for Linear.
std::vector<double> hidden_layer(const Model& model, const FeatureVector& x) {
  const auto& s = model.spec;
  const double* w1 = model.parameters.data();
  const double* b1 = w1 + s.hidden_width * s.feature_dim;
  std::vector<double> h(s.hidden_width);
  for (std::size_t k = 0; k < s.hidden_width; ++k) {
    double z = b1[k];
    const double* row = w1 + k * s.feature_dim;
    for (std::size_t i = 0; i < x.indices.size(); ++i) {
      z += row[x.indices[i]] * x.counts[i];
    }
    h[k] = std::tanh(z);
  }
  return h;
}

num::LogitVector output_from_hidden(const Model& model,
                                    std::span<const double> h) {
  const auto& s = model.spec;
  const std::size_t off = s.hidden_width * s.feature_dim + s.hidden_width;
  const double* w2 = model.parameters.data() + off;
  const double* b2 = w2 + s.num_classes * s.hidden_width;
  num::LogitVector z(s.num_classes);
  for (std::size_t j = 0; j < s.num_classes; ++j) {
    double v = b2[j];
    const double* row = w2 + j * s.hidden_width;
    for (std::size_t k = 0; k < s.hidden_width; ++k) {
      v += row[k] * h[k];
    }
    z[j] = v;
  }
  return z;
}

// Backpropagates an output-logit residual dz (length K) into a parameter
// gradient. Shared by all loss modes: they differ only in dz.
LossGrad backward(const Model& model, const FeatureVector& x,
                  std::span<const double> dz, double loss,
                  const std::vector<double>& h) {
  const auto& s = model.spec;
  LossGrad out;
  out.loss = loss;
  out.grad.assign(model.parameters.size(), 0.0);

  if (s.arch == Arch::Linear) {
    // grad W[j,d] = dz_j * x_d (active d only); grad b_j = dz_j
    double* gw = out.grad.data();
    double* gb = gw + s.num_classes * s.feature_dim;
    for (std::size_t j = 0; j < s.num_classes; ++j) {
      double* row = gw + j * s.feature_dim;
      for (std::size_t i = 0; i < x.indices.size(); ++i) {
        row[x.indices[i]] += dz[j] * x.counts[i];
      }
      gb[j] = dz[j];
    }
    return out;
  }

  const std::size_t off1 = s.hidden_width * s.feature_dim;
  const std::size_t off2 = off1 + s.hidden_width;
  const double* w2 = model.parameters.data() + off2;
  double* gw1 = out.grad.data();
  double* gb1 = gw1 + off1;
  double* gw2 = gw1 + off2;
  double* gb2 = gw2 + s.num_classes * s.hidden_width;

  // Output layer.
  for (std::size_t j = 0; j < s.num_classes; ++j) {
    double* row = gw2 + j * s.hidden_width;
    for (std::size_t k = 0; k < s.hidden_width; ++k) {
      row[k] = dz[j] * h[k];
    }
    gb2[j] = dz[j];
  }
  // Hidden layer: dz1_k = (W2^T dz)_k * (1 - h_k^2).
  for (std::size_t k = 0; k < s.hidden_width; ++k) {
    double dh = 0.0;
    for (std::size_t j = 0; j < s.num_classes; ++j) {
      dh += w2[j * s.hidden_width + k] * dz[j];
    }
    const double dz1 = dh * (1.0 - h[k] * h[k]);
    double* row = gw1 + k * s.feature_dim;
    for (std::size_t i = 0; i < x.indices.size(); ++i) {
      row[x.indices[i]] += dz1 * x.counts[i];
    }
    gb1[k] = dz1;
  }
  return out;
}

double eval_probe_loss(const Model& model, const GradProbe& probe) {
  const num::LogitVector m = forward(model, probe.x);
  switch (probe.mode) {
    case LossMode::CE:
      return num::cross_entropy(m, probe.gold);
    case LossMode::PoE:
      return num::cross_entropy(num::poe_combine(probe.frozen_w, m),
                                probe.gold);
    case LossMode::PoE_CE:
      return num::cross_entropy(num::poe_combine(probe.frozen_w, m),
                                probe.gold) +
             probe.alpha * num::cross_entropy(m, probe.gold);
  }
  throw InvalidConfig("grad_check: unknown loss mode");
}

}  // namespace

std::size_t ModelSpec::param_count() const {
  if (arch == Arch::Linear) {
    return num_classes * feature_dim + num_classes;
  }
  return hidden_width * feature_dim + hidden_width +
         num_classes * hidden_width + num_classes;
}

Model init_model(const ModelSpec& spec) {
  validate_spec(spec);
  Model model;
  model.spec = spec;
  model.parameters.assign(spec.param_count(), 0.0);
  Rng rng(spec.init_seed);

  auto fill_uniform = [&](double* w, std::size_t n, std::size_t fan_in,
                          std::size_t fan_out) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = rng.uniform(-s, s);
    }
  };

  double* p = model.parameters.data();
  if (spec.arch == Arch::Linear) {
    fill_uniform(p, spec.num_classes * spec.feature_dim, spec.feature_dim,
                 spec.num_classes);
  } else {
    fill_uniform(p, spec.hidden_width * spec.feature_dim, spec.feature_dim,
                 spec.hidden_width);
    const std::size_t off2 =
        spec.hidden_width * spec.feature_dim + spec.hidden_width;
    fill_uniform(p + off2, spec.num_classes * spec.hidden_width,
                 spec.hidden_width, spec.num_classes);
  }
  return model;
}

num::LogitVector forward(const Model& model, const FeatureVector& x) {
  validate_features(model, x);
  const auto& s = model.spec;
  if (s.arch == Arch::Linear) {
    const double* w = model.parameters.data();
    const double* b = w + s.num_classes * s.feature_dim;
    num::LogitVector z(s.num_classes);
    for (std::size_t j = 0; j < s.num_classes; ++j) {
      double v = b[j];
      const double* row = w + j * s.feature_dim;
      for (std::size_t i = 0; i < x.indices.size(); ++i) {
        v += row[x.indices[i]] * x.counts[i];
      }
      z[j] = v;
    }
    return z;
  }
  return output_from_hidden(model, hidden_layer(model, x));
}

LossGrad grad_ce(const Model& model, const FeatureVector& x,
                 std::size_t gold) {
  std::vector<double> h;
  num::LogitVector m;
  if (model.spec.arch == Arch::Linear) {
    m = forward(model, x);
  } else {
    validate_features(model, x);
    h = hidden_layer(model, x);
    m = output_from_hidden(model, h);
  }
  const double loss = num::cross_entropy(m, gold);
  num::ProbVector dz = num::softmax(m);
  dz[gold] -= 1.0;
  return backward(model, x, dz, loss, h);
}

LossGrad grad_poe(const Model& model, const FeatureVector& x, std::size_t gold,
                  std::span<const double> frozen_w) {
  std::vector<double> h;
  num::LogitVector m;
  if (model.spec.arch == Arch::Linear) {
    m = forward(model, x);
  } else {
    validate_features(model, x);
    h = hidden_layer(model, x);
    m = output_from_hidden(model, h);
  }
  const num::LogitVector e = num::poe_combine(frozen_w, m);
  const double loss = num::cross_entropy(e, gold);
  num::ProbVector dz = num::softmax(e);
  dz[gold] -= 1.0;
  return backward(model, x, dz, loss, h);
}

LossGrad grad_multiloss(const Model& model, const FeatureVector& x,
                        std::size_t gold, std::span<const double> frozen_w,
                        double alpha) {
  if (!(alpha >= 0.0)) {
    throw InvalidConfig("grad_multiloss: alpha must be >= 0");
  }
  std::vector<double> h;
  num::LogitVector m;
  if (model.spec.arch == Arch::Linear) {
    m = forward(model, x);
  } else {
    validate_features(model, x);
    h = hidden_layer(model, x);
    m = output_from_hidden(model, h);
  }
  const num::LogitVector e = num::poe_combine(frozen_w, m);
  const double poe_loss = num::cross_entropy(e, gold);
  const double ce_loss = num::cross_entropy(m, gold);

  num::ProbVector dz = num::softmax(e);
  dz[gold] -= 1.0;
  if (alpha > 0.0) {
    const num::ProbVector pm = num::softmax(m);
    for (std::size_t j = 0; j < dz.size(); ++j) {
      dz[j] += alpha * pm[j];
    }
    dz[gold] -= alpha;
  }
  return backward(model, x, dz, poe_loss + alpha * ce_loss, h);
}

double grad_check(const Model& model, const GradProbe& probe, double epsilon,
                  double scale_floor) {
  if (!(epsilon > 0.0)) {
    throw InvalidInput("grad_check: epsilon must be positive");
  }
  LossGrad analytic;
  switch (probe.mode) {
    case LossMode::CE:
      analytic = grad_ce(model, probe.x, probe.gold);
      break;
    case LossMode::PoE:
      analytic = grad_poe(model, probe.x, probe.gold, probe.frozen_w);
      break;
    case LossMode::PoE_CE:
      analytic = grad_multiloss(model, probe.x, probe.gold, probe.frozen_w,
                                probe.alpha);
      break;
  }

  Model perturbed = model;
  double worst = 0.0;
  for (std::size_t i = 0; i < model.parameters.size(); ++i) {
    const double orig = model.parameters[i];
    perturbed.parameters[i] = orig + epsilon;
    const double up = eval_probe_loss(perturbed, probe);
    perturbed.parameters[i] = orig - epsilon;
    const double down = eval_probe_loss(perturbed, probe);
    perturbed.parameters[i] = orig;

    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic.grad[i];
    const double denom =
        std::max({std::abs(a), std::abs(numeric), scale_floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

void write_model(const Model& model, std::ostream& os) {
  char buf[64];
  os << "# poe-model v1\n";
  os << "arch=" << (model.spec.arch == Arch::Linear ? "linear" : "mlp")
     << " feature_dim=" << model.spec.feature_dim
     << " hidden_width=" << model.spec.hidden_width
     << " num_classes=" << model.spec.num_classes
     << " init_seed=" << model.spec.init_seed << "\n";
  for (double p : model.parameters) {
    std::snprintf(buf, sizeof(buf), "%.17g", p);
    os << buf << "\n";
  }
}

Model read_model(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;

  auto next_line = [&]() {
    if (!std::getline(is, line)) {
      throw ParseError("model: unexpected end of file", lineno);
    }
    ++lineno;
  };

  next_line();
  if (line != "# poe-model v1") {
    throw ParseError("model: bad magic line", lineno);
  }
  next_line();
  Model model;
  {
    std::istringstream hs(line);
    std::string kv;
    while (hs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw ParseError("model: bad header token '" + kv + "'", lineno);
      }
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      try {
        if (key == "arch") {
          if (val == "linear") {
            model.spec.arch = Arch::Linear;
          } else if (val == "mlp") {
            model.spec.arch = Arch::Mlp;
          } else {
            throw ParseError("model: unknown arch '" + val + "'", lineno);
          }
        } else if (key == "feature_dim") {
          model.spec.feature_dim = std::stoull(val);
        } else if (key == "hidden_width") {
          model.spec.hidden_width = std::stoull(val);
        } else if (key == "num_classes") {
          model.spec.num_classes = std::stoull(val);
        } else if (key == "init_seed") {
          model.spec.init_seed = std::stoull(val);
        } else {
          throw ParseError("model: unknown header key '" + key + "'", lineno);
        }
      } catch (const std::invalid_argument&) {
        throw ParseError("model: bad value for '" + key + "'", lineno);
      } catch (const std::out_of_range&) {
        throw ParseError("model: value out of range for '" + key + "'",
                         lineno);
      }
    }
  }
  validate_spec(model.spec);
  const std::size_t n = model.spec.param_count();
  model.parameters.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    next_line();
    char* end = nullptr;
    const double v = std::strtod(line.c_str(), &end);
    if (end == line.c_str() || !std::isfinite(v)) {
      throw ParseError("model: bad parameter value '" + line + "'", lineno);
    }
    model.parameters.push_back(v);
  }
  return model;
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw IoError("model: cannot open '" + path + "' for writing");
  }
  write_model(model, os);
  if (!os.good()) {
    throw IoError("model: write failed for '" + path + "'");
  }
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("model: cannot open '" + path + "'");
  }
  return read_model(is);
}

}  // namespace poe
