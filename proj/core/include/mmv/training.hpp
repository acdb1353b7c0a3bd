// Staged training over mixed 2D/3D streams: batch planning, the AdamW update
// with cosine decay, checkpointing, and the per-stage loop.
//
// Every source of randomness is a counter-based stream keyed by (seed, domain,
// indices), so a run is a pure function of its configuration: batches, crops,
// and projection directions for step t can be recomputed without replaying
// steps 0..t-1, and resuming from a checkpoint continues the identical
// trajectory.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mmv/encoder.hpp"
#include "mmv/objective.hpp"
#include "mmv/synthetic.hpp"
#include "mmv/views.hpp"

namespace mmv {

enum class Stage { stage1_2d_only, stage2_curriculum, stage3_native_joint };

const char* stage_name(Stage stage);
Stage stage_from_name(const std::string& name);

struct StageConfig {
  Stage stage = Stage::stage3_native_joint;
  bool from_checkpoint = false;
  int steps = 150;
  int batch_2d = 12;
  int batch_3d = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct OptimConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.05f;
  int total_steps = 150;  // cosine decays to zero here

  void validate() const;
};

// base_lr * 0.5 * (1 + cos(pi * step / total)).
float cosine_lr(int step, int total_steps, float base_lr);

struct AdamState {
  std::vector<std::vector<float>> m, v;  // one slot per ParamStore entry
};

AdamState init_adam_state(const ParamStore& store);

// Decoupled weight decay; entries flagged no_decay (layernorm scales/biases)
// skip the decay term. step is 0-based; bias correction uses step+1.
// Rejects non-finite gradients.
void adamw_step(ParamStore& store, const std::vector<std::vector<float>>& grads, AdamState& state,
                const OptimConfig& cfg, int step);

struct LabeledVolume {
  Volume volume;  // preprocessed: normalized and downsized
  std::array<bool, kNumLabels> labels{};
  std::int64_t id = 0;
};

using Dataset = std::vector<LabeledVolume>;

// One training step's sample draw: dataset indices plus the epoch each draw
// belongs to (crop streams are keyed per (sample id, epoch)).
struct BatchDraw {
  std::size_t index = 0;
  std::int64_t epoch = 0;
};

std::vector<BatchDraw> batch_plan(std::size_t dataset_size, int batch, std::uint64_t seed,
                                  std::int64_t step, std::string_view domain);

// Checkpoint: "MMVC" magic, format version, config digest, step, run seed,
// named float32 arrays (parameters then optimizer moments), trailing CRC-32.
struct Checkpoint {
  std::uint32_t version = 1;
  std::uint64_t config_digest = 0;
  std::int64_t step = 0;
  std::uint64_t run_seed = 0;
  ParamStore params;
  AdamState adam;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
// Shapes come from the config; a digest mismatch or corrupt file is rejected.
Checkpoint load_checkpoint(const std::string& path, const EncoderConfig& cfg,
                           std::uint64_t expected_digest);

struct RunStageResult {
  ParamStore params;
  AdamState adam;
  std::int64_t steps_done = 0;
  bool aborted_nan = false;
  std::int64_t abort_step = -1;
  std::int64_t consumed_2d = 0;
  std::int64_t consumed_3d = 0;
  float first_loss = 0.0f;
  float last_loss = 0.0f;
};

struct RunStageIo {
  std::ostream* metrics = nullptr;      // one key-value record per step
  std::string checkpoint_path;          // rolling + final checkpoint ("" = none)
  int checkpoint_every = 50;
  std::uint64_t config_digest = 0;
  // Resume continues warm_start's trajectory (step counter and optimizer
  // moments); otherwise a warm start adopts the weights only (curriculum).
  bool resume = false;
};

// The stage loop: plan batch -> views -> tokenize -> pack -> encode ->
// objective -> backward -> adamw. warm_start must carry a Checkpoint for
// stage2 (and for resuming); stage1/stage3 start from init_params(seed).
RunStageResult run_stage(const StageConfig& stage_cfg, const OptimConfig& optim_cfg,
                         const EncoderConfig& encoder_cfg, const ViewConfig& view_cfg,
                         const ObjectiveConfig& objective_cfg, const Dataset& data_2d,
                         const Dataset& data_3d, std::optional<Checkpoint> warm_start,
                         const RunStageIo& io);

// Compute the losses of one specific batch without updating anything (replay
// verification of warm starts).
struct LossBreakdown {
  float pred = 0.0f;
  float sigreg = 0.0f;
  float total = 0.0f;
};

LossBreakdown evaluate_step_loss(const StageConfig& stage_cfg, const OptimConfig& optim_cfg,
                                 const EncoderConfig& encoder_cfg, const ViewConfig& view_cfg,
                                 const ObjectiveConfig& objective_cfg, const Dataset& data_2d,
                                 const Dataset& data_3d, const ParamStore& params,
                                 std::int64_t step);

// Normalize (per modality) and downsize to the configured long sides.
LabeledVolume preprocess_sample(const Volume& raw, const std::array<bool, kNumLabels>& labels,
                                std::int64_t id, const ViewConfig& cfg);

}  // namespace mmv
