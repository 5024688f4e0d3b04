#include "poe/biasgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "poe/errors.hpp"
#include "poe/rng.hpp"

namespace poe {

namespace {

enum class BiasMode { None, Cheat, Soft };

BiasMode bias_mode(const GenSpec& spec) {
  if (spec.p_cheat > 0.0) return BiasMode::Cheat;
  if (spec.bias_rho > 0.0) return BiasMode::Soft;
  return BiasMode::None;
}

// Alignment probability of the active bias channel.
double align_prob(const GenSpec& spec) {
  return spec.p_cheat > 0.0 ? spec.p_cheat : spec.bias_rho;
}

std::size_t draw_wrong_class(Rng& rng, std::size_t gold, std::size_t k) {
  std::size_t r = static_cast<std::size_t>(rng.uniform_int(k - 1));
  return r + (r >= gold ? 1 : 0);
}

FeatureVector bag_to_features(std::map<std::uint32_t, double>& bag) {
  FeatureVector fv;
  fv.indices.reserve(bag.size());
  fv.counts.reserve(bag.size());
  for (const auto& [idx, count] : bag) {
    fv.indices.push_back(idx);
    fv.counts.push_back(count);
  }
  return fv;
}

enum class Split { Train, EvalClean, EvalAnti };

Example draw_example(const GenSpec& spec, Rng& rng, std::uint64_t id,
                     Split split) {
  const std::size_t k = spec.num_classes;
  Example ex;
  ex.id = id;
  ex.gold = static_cast<std::size_t>(rng.uniform_int(k));

  const BiasMode mode = bias_mode(spec);
  bool present = false;
  std::size_t bias_class = 0;
  if (mode != BiasMode::None) {
    switch (split) {
      case Split::Train: {
        present = mode == BiasMode::Cheat ||
                  rng.uniform01() < spec.bias_rho;
        if (present) {
          const bool aligned = rng.uniform01() < align_prob(spec);
          bias_class =
              aligned ? ex.gold : draw_wrong_class(rng, ex.gold, k);
        }
        break;
      }
      case Split::EvalClean: {
        present = mode == BiasMode::Cheat ||
                  rng.uniform01() < spec.bias_rho;
        if (present) {
          bias_class = static_cast<std::size_t>(rng.uniform_int(k));
        }
        break;
      }
      case Split::EvalAnti: {
        present = true;
        bias_class = draw_wrong_class(rng, ex.gold, k);
        break;
      }
    }
  }
  ex.provenance.bias_present = present;
  ex.provenance.bias_aligned = present && bias_class == ex.gold;

  std::map<std::uint32_t, double> bag;
  if (present) {
    bag[spec.bias_token(bias_class)] += 1.0;
  }
  for (std::size_t t = 0; t < spec.tokens_per_example; ++t) {
    const bool agree = rng.uniform01() < spec.signal_strength;
    const std::size_t cls =
        agree ? ex.gold : draw_wrong_class(rng, ex.gold, k);
    const std::uint32_t lo = spec.block_lo(cls);
    const std::uint32_t width = spec.block_hi(cls) - lo;
    bag[lo + static_cast<std::uint32_t>(rng.uniform_int(width))] += 1.0;
  }
  ex.features = bag_to_features(bag);
  return ex;
}

}  // namespace

std::uint32_t GenSpec::block_lo(std::size_t cls) const {
  return static_cast<std::uint32_t>(cls * vocab_size / num_classes);
}

std::uint32_t GenSpec::block_hi(std::size_t cls) const {
  return static_cast<std::uint32_t>((cls + 1) * vocab_size / num_classes);
}

void validate(const GenSpec& spec) {
  if (spec.num_classes < 2) {
    throw InvalidConfig("gen.num_classes must be >= 2");
  }
  if (spec.vocab_size < spec.num_classes) {
    throw InvalidConfig("gen.vocab_size must be >= gen.num_classes");
  }
  if (spec.feature_dim < spec.vocab_size + spec.num_classes) {
    throw InvalidConfig(
        "gen.feature_dim must be >= vocab_size + num_classes (reserved bias "
        "tokens)");
  }
  if (spec.tokens_per_example < 1) {
    throw InvalidConfig("gen.tokens_per_example must be >= 1");
  }
  const double chance = 1.0 / static_cast<double>(spec.num_classes);
  if (!(spec.signal_strength > chance && spec.signal_strength <= 1.0)) {
    throw InvalidConfig("gen.signal_strength must lie in (1/K, 1]");
  }
  if (!(spec.p_cheat >= 0.0 && spec.p_cheat <= 1.0)) {
    throw InvalidConfig("gen.p_cheat must lie in [0, 1]");
  }
  if (!(spec.bias_rho >= 0.0 && spec.bias_rho <= 1.0)) {
    throw InvalidConfig("gen.bias_rho must lie in [0, 1]");
  }
  if (spec.p_cheat > 0.0 && spec.bias_rho > 0.0) {
    throw InvalidConfig("gen.p_cheat and gen.bias_rho cannot both be active");
  }
  if (spec.train_size < 1 || spec.eval_size < 1) {
    throw InvalidConfig("gen.train_size and gen.eval_size must be >= 1");
  }
}

bool operator==(const Example& a, const Example& b) {
  return a.id == b.id && a.gold == b.gold && a.provenance == b.provenance &&
         a.features.indices == b.features.indices &&
         a.features.counts == b.features.counts;
}

bool operator==(const DatasetBundle& a, const DatasetBundle& b) {
  return a.spec == b.spec && a.train == b.train &&
         a.eval_clean == b.eval_clean && a.eval_anti == b.eval_anti;
}

DatasetBundle generate(const GenSpec& spec) {
  validate(spec);
  DatasetBundle bundle;
  bundle.spec = spec;
  Rng rng(spec.seed);

  std::uint64_t id = 0;
  bundle.train.reserve(spec.train_size);
  for (std::size_t i = 0; i < spec.train_size; ++i) {
    bundle.train.push_back(draw_example(spec, rng, id++, Split::Train));
  }
  bundle.eval_clean.reserve(spec.eval_size);
  for (std::size_t i = 0; i < spec.eval_size; ++i) {
    bundle.eval_clean.push_back(
        draw_example(spec, rng, id++, Split::EvalClean));
  }
  bundle.eval_anti.reserve(spec.eval_size);
  for (std::size_t i = 0; i < spec.eval_size; ++i) {
    bundle.eval_anti.push_back(draw_example(spec, rng, id++, Split::EvalAnti));
  }
  return bundle;
}

num::ProbVector bayes_oracle(const GenSpec& spec, const Example& x,
                             bool use_bias) {
  validate(spec);
  const std::size_t k = spec.num_classes;
  const double q = spec.signal_strength;
  const BiasMode mode = bias_mode(spec);

  std::vector<double> logpost(k, 0.0);  // uniform prior

  for (std::size_t i = 0; i < x.features.indices.size(); ++i) {
    const std::uint32_t token = x.features.indices[i];
    const double count = x.features.counts[i];

    if (token >= spec.vocab_size) {
      // Reserved bias token.
      if (token >= spec.vocab_size + k || mode == BiasMode::None) {
        throw InvalidInput("bayes_oracle: token " + std::to_string(token) +
                           " outside the generative vocabulary");
      }
      if (!use_bias) {
        continue;
      }
      const std::size_t cls = token - spec.vocab_size;
      const double p = align_prob(spec);
      for (std::size_t g = 0; g < k; ++g) {
        const double lik =
            (cls == g) ? p : (1.0 - p) / static_cast<double>(k - 1);
        logpost[g] += count * std::log(lik);
      }
      continue;
    }

    // Signal token: locate its block.
    std::size_t cls = 0;
    while (!(token >= spec.block_lo(cls) && token < spec.block_hi(cls))) {
      ++cls;
    }
    const double width =
        static_cast<double>(spec.block_hi(cls) - spec.block_lo(cls));
    for (std::size_t g = 0; g < k; ++g) {
      const double class_pick =
          (cls == g) ? q : (1.0 - q) / static_cast<double>(k - 1);
      logpost[g] += count * std::log(class_pick / width);
    }
  }

  // Absence of a bias token is constant evidence across classes in soft
  // mode (P(absent | g) = 1 - rho for every g), so it cancels here.
  return num::softmax(logpost);
}

namespace {

void write_example(const Example& ex, std::ostream& os) {
  char buf[64];
  os << ex.id << '\t' << ex.gold << '\t' << (ex.provenance.bias_present ? 1 : 0)
     << '\t' << (ex.provenance.bias_aligned ? 1 : 0) << '\t';
  for (std::size_t i = 0; i < ex.features.indices.size(); ++i) {
    if (i > 0) os << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", ex.features.counts[i]);
    os << ex.features.indices[i] << ':' << buf;
  }
  os << '\n';
}

std::string format_genspec(const GenSpec& s) {
  char buf[64];
  std::ostringstream os;
  os << "num_classes=" << s.num_classes << " vocab_size=" << s.vocab_size
     << " feature_dim=" << s.feature_dim
     << " tokens_per_example=" << s.tokens_per_example;
  std::snprintf(buf, sizeof(buf), "%.17g", s.signal_strength);
  os << " signal_strength=" << buf;
  std::snprintf(buf, sizeof(buf), "%.17g", s.p_cheat);
  os << " p_cheat=" << buf;
  std::snprintf(buf, sizeof(buf), "%.17g", s.bias_rho);
  os << " bias_rho=" << buf;
  os << " train_size=" << s.train_size << " eval_size=" << s.eval_size
     << " seed=" << s.seed;
  return os.str();
}

GenSpec parse_genspec(const std::string& text, std::size_t lineno) {
  GenSpec s;
  std::istringstream is(text);
  std::string kv;
  while (is >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ParseError("dataset: bad genspec token '" + kv + "'", lineno);
    }
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    try {
      if (key == "num_classes") {
        s.num_classes = std::stoull(val);
      } else if (key == "vocab_size") {
        s.vocab_size = std::stoull(val);
      } else if (key == "feature_dim") {
        s.feature_dim = std::stoull(val);
      } else if (key == "tokens_per_example") {
        s.tokens_per_example = std::stoull(val);
      } else if (key == "signal_strength") {
        s.signal_strength = std::stod(val);
      } else if (key == "p_cheat") {
        s.p_cheat = std::stod(val);
      } else if (key == "bias_rho") {
        s.bias_rho = std::stod(val);
      } else if (key == "train_size") {
        s.train_size = std::stoull(val);
      } else if (key == "eval_size") {
        s.eval_size = std::stoull(val);
      } else if (key == "seed") {
        s.seed = std::stoull(val);
      } else {
        throw ParseError("dataset: unknown genspec key '" + key + "'", lineno);
      }
    } catch (const std::invalid_argument&) {
      throw ParseError("dataset: bad genspec value for '" + key + "'", lineno);
    } catch (const std::out_of_range&) {
      throw ParseError("dataset: genspec value out of range for '" + key + "'",
                       lineno);
    }
  }
  return s;
}

Example parse_example(const std::string& line, std::size_t lineno) {
  Example ex;
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  if (fields.size() != 5) {
    throw ParseError("dataset: expected 5 tab-separated fields, got " +
                     std::to_string(fields.size()),
                     lineno);
  }
  try {
    ex.id = std::stoull(fields[0]);
    ex.gold = std::stoull(fields[1]);
    ex.provenance.bias_present = std::stoi(fields[2]) != 0;
    ex.provenance.bias_aligned = std::stoi(fields[3]) != 0;
  } catch (const std::exception&) {
    throw ParseError("dataset: bad example header fields", lineno);
  }

  const std::string& feats = fields[4];
  std::size_t pos = 0;
  while (pos < feats.size()) {
    auto comma = feats.find(',', pos);
    if (comma == std::string::npos) comma = feats.size();
    const std::string item = feats.substr(pos, comma - pos);
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ParseError("dataset: feature item '" + item + "' missing ':'",
                       lineno);
    }
    try {
      ex.features.indices.push_back(
          static_cast<std::uint32_t>(std::stoul(item.substr(0, colon))));
      ex.features.counts.push_back(std::stod(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ParseError("dataset: bad feature item '" + item + "'", lineno);
    }
    pos = comma + 1;
  }
  return ex;
}

}  // namespace

void write_bundle(const DatasetBundle& bundle, std::ostream& os) {
  os << "# poe-dataset v1\n";
  os << "# genspec " << format_genspec(bundle.spec) << "\n";
  os << "# split train\n";
  for (const Example& ex : bundle.train) write_example(ex, os);
  os << "# split eval_clean\n";
  for (const Example& ex : bundle.eval_clean) write_example(ex, os);
  os << "# split eval_anti\n";
  for (const Example& ex : bundle.eval_anti) write_example(ex, os);
}

DatasetBundle read_bundle(std::istream& is) {
  DatasetBundle bundle;
  std::string line;
  std::size_t lineno = 0;

  auto next_line = [&]() -> bool {
    if (!std::getline(is, line)) return false;
    ++lineno;
    return true;
  };

  if (!next_line() || line != "# poe-dataset v1") {
    throw ParseError("dataset: missing magic line '# poe-dataset v1'", lineno);
  }
  if (!next_line() || line.rfind("# genspec ", 0) != 0) {
    throw ParseError("dataset: missing genspec header", lineno);
  }
  bundle.spec = parse_genspec(line.substr(10), lineno);
  validate(bundle.spec);

  std::vector<Example>* current = nullptr;
  while (next_line()) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line == "# split train") {
        current = &bundle.train;
      } else if (line == "# split eval_clean") {
        current = &bundle.eval_clean;
      } else if (line == "# split eval_anti") {
        current = &bundle.eval_anti;
      } else {
        throw ParseError("dataset: unknown directive '" + line + "'", lineno);
      }
      continue;
    }
    if (current == nullptr) {
      throw ParseError("dataset: example outside any split section", lineno);
    }
    current->push_back(parse_example(line, lineno));
  }

  const std::size_t total =
      bundle.train.size() + bundle.eval_clean.size() + bundle.eval_anti.size();
  const std::size_t expected = bundle.spec.train_size + 2 * bundle.spec.eval_size;
  if (total != expected) {
    throw ParseError("dataset: truncated file, expected " +
                     std::to_string(expected) + " examples, got " +
                     std::to_string(total),
                     lineno);
  }
  return bundle;
}

void save_bundle(const DatasetBundle& bundle, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw IoError("dataset: cannot open '" + path + "' for writing");
  }
  write_bundle(bundle, os);
  if (!os.good()) {
    throw IoError("dataset: write failed for '" + path + "'");
  }
}

DatasetBundle load_bundle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("dataset: cannot open '" + path + "'");
  }
  return read_bundle(is);
}

}  // namespace poe
