#include "poe/config.hpp"

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

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& val) {
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(val, &pos);
    if (pos != val.size()) throw std::invalid_argument(val);
    return v;
  } catch (const std::exception&) {
    throw InvalidConfig("bad integer for '" + key + "': '" + val + "'");
  }
}

long to_long(const std::string& key, const std::string& val) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(val, &pos);
    if (pos != val.size()) throw std::invalid_argument(val);
    return v;
  } catch (const std::exception&) {
    throw InvalidConfig("bad integer for '" + key + "': '" + val + "'");
  }
}

double to_double(const std::string& key, const std::string& val) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(val, &pos);
    if (pos != val.size()) throw std::invalid_argument(val);
    return v;
  } catch (const std::exception&) {
    throw InvalidConfig("bad number for '" + key + "': '" + val + "'");
  }
}

bool to_bool(const std::string& key, const std::string& val) {
  if (val == "true" || val == "1") return true;
  if (val == "false" || val == "0") return false;
  throw InvalidConfig("bad boolean for '" + key + "': '" + val + "'");
}

Arch to_arch(const std::string& key, const std::string& val) {
  if (val == "linear") return Arch::Linear;
  if (val == "mlp") return Arch::Mlp;
  throw InvalidConfig("bad arch for '" + key + "': '" + val +
                      "' (want linear or mlp)");
}

std::vector<double> to_double_list(const std::string& key,
                                   const std::string& val) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= val.size()) {
    auto comma = val.find(',', pos);
    if (comma == std::string::npos) comma = val.size();
    const std::string item = trim(val.substr(pos, comma - pos));
    if (item.empty()) {
      throw InvalidConfig("empty item in list for '" + key + "'");
    }
    out.push_back(to_double(key, item));
    pos = comma + 1;
  }
  return out;
}

bool handle_model_key(ModelSection& section, const std::string& prefix,
                      const std::string& key, const std::string& full,
                      const std::string& val) {
  if (key == "arch") {
    section.arch = to_arch(full, val);
  } else if (key == "hidden_width") {
    section.hidden_width = to_u64(full, val);
  } else if (key == "init_seed") {
    section.init_seed = to_u64(full, val);
  } else if (key == "seed") {
    section.train_seed = to_u64(full, val);
  } else if (key == "epochs") {
    section.train.epochs = to_u64(full, val);
  } else if (key == "batch_size") {
    section.train.batch_size = to_u64(full, val);
  } else if (key == "learning_rate") {
    section.train.learning_rate = to_double(full, val);
  } else if (key == "weight_decay") {
    section.train.weight_decay = to_double(full, val);
  } else if (key == "warmup_steps") {
    section.train.warmup_steps = to_long(full, val);
  } else if (key == "adam_beta1") {
    section.train.adam_beta1 = to_double(full, val);
  } else if (key == "adam_beta2") {
    section.train.adam_beta2 = to_double(full, val);
  } else if (key == "adam_eps") {
    section.train.adam_eps = to_double(full, val);
  } else if (key == "shuffle") {
    section.train.shuffle = to_bool(full, val);
  } else {
    return false;
  }
  (void)prefix;
  return true;
}

const char* arch_name(Arch arch) {
  return arch == Arch::Linear ? "linear" : "mlp";
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;

  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfig("config line " + std::to_string(lineno) +
                          ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) {
      throw InvalidConfig("config line " + std::to_string(lineno) +
                          ": empty key or value");
    }

    if (key == "seed") {
      cfg.seed = to_u64(key, val);
    } else if (key == "gen.num_classes") {
      cfg.gen.num_classes = to_u64(key, val);
    } else if (key == "gen.vocab_size") {
      cfg.gen.vocab_size = to_u64(key, val);
    } else if (key == "gen.feature_dim") {
      cfg.gen.feature_dim = to_u64(key, val);
    } else if (key == "gen.tokens_per_example") {
      cfg.gen.tokens_per_example = to_u64(key, val);
    } else if (key == "gen.signal_strength") {
      cfg.gen.signal_strength = to_double(key, val);
    } else if (key == "gen.p_cheat") {
      cfg.gen.p_cheat = to_double(key, val);
    } else if (key == "gen.bias_rho") {
      cfg.gen.bias_rho = to_double(key, val);
    } else if (key == "gen.train_size") {
      cfg.gen.train_size = to_u64(key, val);
    } else if (key == "gen.eval_size") {
      cfg.gen.eval_size = to_u64(key, val);
    } else if (key == "gen.seed") {
      cfg.gen.seed = to_u64(key, val);
      cfg.gen_seed_explicit = true;
    } else if (key == "main.alpha") {
      cfg.alpha = to_double(key, val);
    } else if (key.rfind("weak.", 0) == 0) {
      if (!handle_model_key(cfg.weak, "weak", key.substr(5), key, val)) {
        throw InvalidConfig("unknown config key '" + key + "'");
      }
    } else if (key.rfind("main.", 0) == 0) {
      if (!handle_model_key(cfg.main, "main", key.substr(5), key, val)) {
        throw InvalidConfig("unknown config key '" + key + "'");
      }
    } else if (key == "sweep.axis") {
      cfg.sweep.axis = val;
    } else if (key == "sweep.values") {
      cfg.sweep.values = to_double_list(key, val);
    } else if (key == "sweep.seeds") {
      cfg.sweep.seeds = to_u64(key, val);
    } else {
      throw InvalidConfig("unknown config key '" + key + "'");
    }
  }

  if (const char* env = std::getenv("POE_DEBIAS_SEED")) {
    cfg.seed = to_u64("POE_DEBIAS_SEED", env);
  }

  // Keep arch and hidden_width mutually consistent without making users
  // spell both.
  if (cfg.weak.hidden_width > 0) cfg.weak.arch = Arch::Mlp;
  if (cfg.main.hidden_width > 0) cfg.main.arch = Arch::Mlp;
  if (cfg.weak.arch == Arch::Linear) cfg.weak.hidden_width = 0;
  if (cfg.main.arch == Arch::Linear) cfg.main.hidden_width = 0;

  validate(cfg.gen);
  validate(cfg.weak.train);
  validate(cfg.main.train);
  if (!(cfg.alpha >= 0.0)) {
    throw InvalidConfig("main.alpha must be >= 0");
  }
  if (cfg.sweep.seeds < 1) {
    throw InvalidConfig("sweep.seeds must be >= 1");
  }
  if (!cfg.sweep.axis.empty()) {
    if (cfg.sweep.values.empty()) {
      throw InvalidConfig(
          "sweep.values must be non-empty when sweep.axis is set");
    }
    // Reject unknown axes at load time, not mid-sweep.
    ExperimentConfig probe = cfg;
    apply_knob(probe, cfg.sweep.axis, cfg.sweep.values.front());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("config: cannot open '" + path + "'");
  }
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_experiment_config(buf.str());
}

std::string resolved_config_text(const ExperimentConfig& cfg) {
  char num[64];
  std::ostringstream os;
  auto put_u64 = [&](const char* key, std::uint64_t v) {
    os << key << " = " << v << "\n";
  };
  auto put_dbl = [&](const char* key, double v) {
    std::snprintf(num, sizeof(num), "%.17g", v);
    os << key << " = " << num << "\n";
  };

  put_u64("seed", cfg.seed);
  put_u64("gen.num_classes", cfg.gen.num_classes);
  put_u64("gen.vocab_size", cfg.gen.vocab_size);
  put_u64("gen.feature_dim", cfg.gen.feature_dim);
  put_u64("gen.tokens_per_example", cfg.gen.tokens_per_example);
  put_dbl("gen.signal_strength", cfg.gen.signal_strength);
  put_dbl("gen.p_cheat", cfg.gen.p_cheat);
  put_dbl("gen.bias_rho", cfg.gen.bias_rho);
  put_u64("gen.train_size", cfg.gen.train_size);
  put_u64("gen.eval_size", cfg.gen.eval_size);
  if (cfg.gen_seed_explicit) {
    put_u64("gen.seed", cfg.gen.seed);
  }

  auto put_section = [&](const char* prefix, const ModelSection& s) {
    os << prefix << ".arch = " << arch_name(s.arch) << "\n";
    os << prefix << ".hidden_width = " << s.hidden_width << "\n";
    if (s.init_seed) {
      os << prefix << ".init_seed = " << *s.init_seed << "\n";
    }
    if (s.train_seed) {
      os << prefix << ".seed = " << *s.train_seed << "\n";
    }
    os << prefix << ".epochs = " << s.train.epochs << "\n";
    os << prefix << ".batch_size = " << s.train.batch_size << "\n";
    std::snprintf(num, sizeof(num), "%.17g", s.train.learning_rate);
    os << prefix << ".learning_rate = " << num << "\n";
    std::snprintf(num, sizeof(num), "%.17g", s.train.weight_decay);
    os << prefix << ".weight_decay = " << num << "\n";
    os << prefix << ".warmup_steps = " << s.train.warmup_steps << "\n";
    std::snprintf(num, sizeof(num), "%.17g", s.train.adam_beta1);
    os << prefix << ".adam_beta1 = " << num << "\n";
    std::snprintf(num, sizeof(num), "%.17g", s.train.adam_beta2);
    os << prefix << ".adam_beta2 = " << num << "\n";
    std::snprintf(num, sizeof(num), "%.17g", s.train.adam_eps);
    os << prefix << ".adam_eps = " << num << "\n";
    os << prefix << ".shuffle = " << (s.train.shuffle ? "true" : "false")
       << "\n";
  };
  put_section("weak", cfg.weak);
  put_section("main", cfg.main);
  put_dbl("main.alpha", cfg.alpha);

  if (!cfg.sweep.axis.empty()) {
    os << "sweep.axis = " << cfg.sweep.axis << "\n";
    os << "sweep.values = ";
    for (std::size_t i = 0; i < cfg.sweep.values.size(); ++i) {
      std::snprintf(num, sizeof(num), "%.17g", cfg.sweep.values[i]);
      os << (i > 0 ? "," : "") << num;
    }
    os << "\n";
    put_u64("sweep.seeds", cfg.sweep.seeds);
  }
  return os.str();
}

CellSeeds derive_cell_seeds(const ExperimentConfig& cfg,
                            std::size_t seed_index) {
  const std::uint64_t base = cfg.seed + seed_index;
  CellSeeds seeds;
  seeds.gen = cfg.gen_seed_explicit ? cfg.gen.seed + seed_index
                                    : derive_seed(base, 1);
  seeds.weak_init =
      cfg.weak.init_seed ? *cfg.weak.init_seed + seed_index
                         : derive_seed(base, 2);
  seeds.weak_train =
      cfg.weak.train_seed ? *cfg.weak.train_seed + seed_index
                          : derive_seed(base, 3);
  seeds.main_init =
      cfg.main.init_seed ? *cfg.main.init_seed + seed_index
                         : derive_seed(base, 4);
  seeds.main_train =
      cfg.main.train_seed ? *cfg.main.train_seed + seed_index
                          : derive_seed(base, 5);
  return seeds;
}

void apply_knob(ExperimentConfig& cfg, const std::string& axis, double value) {
  if (axis == "gen.p_cheat") {
    cfg.gen.p_cheat = value;
  } else if (axis == "gen.bias_rho") {
    cfg.gen.bias_rho = value;
  } else if (axis == "gen.signal_strength") {
    cfg.gen.signal_strength = value;
  } else if (axis == "weak.hidden_width") {
    if (value < 0.0 || value != std::floor(value)) {
      throw InvalidConfig("weak.hidden_width sweep values must be "
                          "non-negative integers");
    }
    cfg.weak.hidden_width = static_cast<std::size_t>(value);
    cfg.weak.arch = cfg.weak.hidden_width == 0 ? Arch::Linear : Arch::Mlp;
  } else if (axis == "main.alpha") {
    if (value < 0.0) {
      throw InvalidConfig("main.alpha sweep values must be >= 0");
    }
    cfg.alpha = value;
  } else {
    throw InvalidConfig("unknown sweep axis '" + axis + "'");
  }
}

}  // namespace poe
