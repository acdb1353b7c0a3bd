// The run configuration document: nested JSON with a fixed schema, strict
// parsing (unknown keys are rejected with their path), defaults for every
// field, and a canonical dump that is echoed into every output artifact.
#pragma once

#include <cstdint>
#include <string>

#include "mmv/encoder.hpp"
#include "mmv/eval.hpp"
#include "mmv/objective.hpp"
#include "mmv/training.hpp"
#include "mmv/views.hpp"

namespace mmv {

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

struct DataConfig {
  std::string dir_2d;
  std::string dir_3d;
  float train_fraction = 0.7f;  // leading fraction of each manifest trains probes
};

struct EvalConfig {
  int n_boot = 1000;
  int probe_epochs = 400;
  float probe_lr = 0.5f;
  float probe_l2 = 1e-3f;
};

struct RunConfig {
  std::uint64_t seed = 20260810;
  EncoderConfig encoder;
  ViewConfig views;        // patch mirrors encoder.patch
  ObjectiveConfig objective;
  StageConfig stage;       // stage kind and init come from the command line
  OptimConfig optimizer;   // total_steps follows stage.steps
  DataConfig data;
  EvalConfig eval;

  ProbeConfig probe_config(ProbeConfig::Filter filter) const;
  void validate() const;
};

RunConfig default_run_config();

// Strict parse; origin names the source in error messages.
RunConfig parse_run_config(const std::string& json_text, const std::string& origin);
RunConfig load_run_config(const std::string& path);

// Canonical fully-defaulted serialization.
std::string dump_run_config(const RunConfig& cfg);

// Digest of the canonical dump (artifact provenance).
std::uint64_t run_config_digest(const RunConfig& cfg);

}  // namespace mmv
