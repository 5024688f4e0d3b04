#include "poe_debias.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "poe/biasgen.hpp"
#include "poe/config.hpp"
#include "poe/errors.hpp"
#include "poe/experiment.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) {
    std::memcpy(out, s.c_str(), s.size() + 1);
  }
  return out;
}

poe_status classify(const std::exception& e) {
  if (dynamic_cast<const poe::InvalidConfig*>(&e) != nullptr ||
      dynamic_cast<const poe::ParseError*>(&e) != nullptr) {
    return POE_ERROR_CONFIG;
  }
  return POE_ERROR_RUNTIME;
}

// Runs fn, translating exceptions into status codes + thread-local message.
template <class Fn>
poe_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return POE_OK;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return classify(e);
  } catch (...) {
    g_last_error = "unknown error";
    return POE_ERROR_RUNTIME;
  }
}

poe_status require(bool ok, const char* message) {
  if (!ok) {
    g_last_error = message;
    return POE_ERROR_RUNTIME;
  }
  return POE_OK;
}

}  // namespace

struct poe_dataset {
  poe::DatasetBundle bundle;
};

extern "C" {

const char* poe_version(void) { return "0.1.0"; }

const char* poe_last_error(void) { return g_last_error.c_str(); }

void poe_string_free(char* s) { std::free(s); }

poe_status poe_dataset_generate(const char* config_path, poe_dataset** out) {
  if (require(config_path && out, "poe_dataset_generate: null argument"))
    return POE_ERROR_RUNTIME;
  return guarded([&] {
    const poe::ExperimentConfig cfg =
        poe::load_experiment_config(config_path);
    poe::GenSpec gen = cfg.gen;
    gen.seed = poe::derive_cell_seeds(cfg, 0).gen;
    *out = new poe_dataset{poe::generate(gen)};
  });
}

poe_status poe_dataset_load(const char* path, poe_dataset** out) {
  if (require(path && out, "poe_dataset_load: null argument"))
    return POE_ERROR_RUNTIME;
  return guarded([&] { *out = new poe_dataset{poe::load_bundle(path)}; });
}

poe_status poe_dataset_save(const poe_dataset* ds, const char* path) {
  if (require(ds && path, "poe_dataset_save: null argument"))
    return POE_ERROR_RUNTIME;
  return guarded([&] { poe::save_bundle(ds->bundle, path); });
}

poe_status poe_dataset_stats(const poe_dataset* ds, char** json_out) {
  if (require(ds && json_out, "poe_dataset_stats: null argument"))
    return POE_ERROR_RUNTIME;
  return guarded(
      [&] { *json_out = dup_string(poe::bundle_stats_json(ds->bundle)); });
}

size_t poe_dataset_train_size(const poe_dataset* ds) {
  return ds == nullptr ? 0 : ds->bundle.train.size();
}

size_t poe_dataset_eval_size(const poe_dataset* ds) {
  return ds == nullptr ? 0 : ds->bundle.eval_clean.size();
}

void poe_dataset_free(poe_dataset* ds) { delete ds; }

poe_status poe_cmd_gen(const char* config_path, const char* out_path,
                       char** stats_json_out) {
  if (require(config_path && out_path, "poe_cmd_gen: null argument"))
    return POE_ERROR_RUNTIME;
  return guarded([&] {
    const std::string stats = poe::cmd_gen(config_path, out_path);
    if (stats_json_out != nullptr) {
      *stats_json_out = dup_string(stats);
    }
  });
}

poe_status poe_cmd_run(const char* config_path, const char* out_dir,
                       char** metrics_json_out) {
  if (require(config_path && out_dir, "poe_cmd_run: null argument"))
    return POE_ERROR_RUNTIME;
  return guarded([&] {
    const std::string metrics = poe::cmd_run(config_path, out_dir);
    if (metrics_json_out != nullptr) {
      *metrics_json_out = dup_string(metrics);
    }
  });
}

poe_status poe_cmd_sweep(const char* config_path, const char* out_dir,
                         size_t num_seeds, size_t jobs,
                         char** summary_json_out) {
  if (require(config_path && out_dir, "poe_cmd_sweep: null argument"))
    return POE_ERROR_RUNTIME;
  return guarded([&] {
    const std::string summary =
        poe::cmd_sweep(config_path, out_dir, num_seeds, jobs);
    if (summary_json_out != nullptr) {
      *summary_json_out = dup_string(summary);
    }
  });
}

poe_status poe_cmd_analyze(const char* config_path, const char* run_dir,
                           char** summary_json_out) {
  if (require(run_dir != nullptr, "poe_cmd_analyze: null run_dir"))
    return POE_ERROR_RUNTIME;
  return guarded([&] {
    const std::string summary = poe::cmd_analyze(
        config_path == nullptr ? std::string() : std::string(config_path),
        run_dir);
    if (summary_json_out != nullptr) {
      *summary_json_out = dup_string(summary);
    }
  });
}

}  // extern "C"
