#include "mmv/training.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mmv/hashing.hpp"
#include "mmv/io.hpp"
#include "mmv/rng.hpp"

namespace mmv {

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::stage1_2d_only: return "stage1";
    case Stage::stage2_curriculum: return "stage2";
    case Stage::stage3_native_joint: return "stage3";
  }
  return "?";
}

Stage stage_from_name(const std::string& name) {
  if (name == "stage1") return Stage::stage1_2d_only;
  if (name == "stage2") return Stage::stage2_curriculum;
  if (name == "stage3") return Stage::stage3_native_joint;
  fail("unknown stage '" + name + "' (expected stage1, stage2 or stage3)");
}

void StageConfig::validate() const {
  if (steps < 0) fail("stage steps must be >= 0");
  if (batch_2d < 0 || batch_3d < 0 || (batch_2d == 0 && batch_3d == 0)) {
    fail("batch sizes must be non-negative and not both zero");
  }
  switch (stage) {
    case Stage::stage1_2d_only:
      if (batch_3d != 0) fail("stage1 is 2D-only: batch_3d must be 0");
      if (from_checkpoint) fail("stage1 starts from random init");
      break;
    case Stage::stage2_curriculum:
      if (!from_checkpoint) fail("stage2 must initialize from a checkpoint");
      break;
    case Stage::stage3_native_joint:
      if (from_checkpoint) fail("stage3 trains from scratch");
      if (batch_2d <= 0 || batch_3d <= 0) {
        fail("stage3 is joint training: both batch_2d and batch_3d must be positive");
      }
      break;
  }
}

void OptimConfig::validate() const {
  if (!(lr > 0.0f)) fail("learning rate must be positive");
  if (weight_decay < 0.0f) fail("weight decay must be >= 0");
  if (beta1 < 0.0f || beta1 >= 1.0f || beta2 < 0.0f || beta2 >= 1.0f) {
    fail("betas must lie in [0, 1)");
  }
  if (total_steps < 1) fail("total_steps must be >= 1");
}

float cosine_lr(int step, int total_steps, float base_lr) {
  if (step < 0 || step > total_steps) {
    fail("cosine_lr: step " + std::to_string(step) + " outside [0, " +
         std::to_string(total_steps) + "]");
  }
  const double phase = static_cast<double>(step) / static_cast<double>(total_steps);
  return static_cast<float>(base_lr * 0.5 * (1.0 + std::cos(3.141592653589793 * phase)));
}

AdamState init_adam_state(const ParamStore& store) {
  AdamState state;
  state.m.reserve(store.entries.size());
  state.v.reserve(store.entries.size());
  for (const auto& e : store.entries) {
    state.m.emplace_back(e.value.size(), 0.0f);
    state.v.emplace_back(e.value.size(), 0.0f);
  }
  return state;
}

void adamw_step(ParamStore& store, const std::vector<std::vector<float>>& grads, AdamState& state,
                const OptimConfig& cfg, int step) {
  if (grads.size() != store.entries.size() || state.m.size() != store.entries.size()) {
    fail("adamw_step: gradient/state slot count does not match the parameter store");
  }
  const float lr_t = cosine_lr(step, cfg.total_steps, cfg.lr);
  const double t = static_cast<double>(step) + 1.0;
  const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
  const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta2), t));
  for (std::size_t i = 0; i < store.entries.size(); ++i) {
    auto& entry = store.entries[i];
    const auto& g = grads[i];
    if (g.size() != entry.value.size()) {
      fail("adamw_step: gradient size mismatch for " + entry.name);
    }
    if (!all_finite(g)) {
      fail("adamw_step: non-finite gradient in " + entry.name);
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    const float wd = entry.no_decay ? 0.0f : cfg.weight_decay;
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0f - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0f - cfg.beta2) * g[j] * g[j];
      const float m_hat = m[j] / bc1;
      const float v_hat = v[j] / bc2;
      entry.value[j] -= lr_t * (m_hat / (std::sqrt(v_hat) + cfg.eps) + wd * entry.value[j]);
    }
  }
}

std::vector<BatchDraw> batch_plan(std::size_t dataset_size, int batch, std::uint64_t seed,
                                  std::int64_t step, std::string_view domain) {
  if (batch == 0) return {};
  if (dataset_size == 0) fail("batch_plan: dataset for '" + std::string(domain) + "' is empty");
  std::vector<BatchDraw> draws;
  draws.reserve(static_cast<std::size_t>(batch));
  const std::int64_t n = static_cast<std::int64_t>(dataset_size);
  for (int j = 0; j < batch; ++j) {
    const std::int64_t global = step * batch + j;
    const std::int64_t epoch = global / n;
    const std::int64_t within = global % n;
    Rng rng = Rng::derive(seed, domain, static_cast<std::uint64_t>(epoch));
    auto perm = rng.permutation(static_cast<std::uint32_t>(n));
    draws.push_back({static_cast<std::size_t>(perm[static_cast<std::size_t>(within)]), epoch});
  }
  return draws;
}

LabeledVolume preprocess_sample(const Volume& raw, const std::array<bool, kNumLabels>& labels,
                                std::int64_t id, const ViewConfig& cfg) {
  LabeledVolume out;
  out.labels = labels;
  out.id = id;
  const bool planar = raw.modality == Modality::xray2d;
  Volume normalized = planar ? normalize_xray(raw) : normalize_ct(raw);
  const int target = planar ? cfg.long_side_2d : cfg.long_side_3d;
  out.volume = downsize_long_side(normalized, target, cfg.patch);
  return out;
}

namespace {

struct StepOutcome {
  LossBreakdown losses;
  bool finite = true;
  std::vector<std::vector<float>> grads;
  std::int64_t n_2d = 0, n_3d = 0;
};

// One forward (and optionally backward) pass over the step's mixed batch.
StepOutcome run_step(const StageConfig& stage_cfg, const EncoderConfig& encoder_cfg,
                     const ViewConfig& view_cfg, const ObjectiveConfig& objective_cfg,
                     const Dataset& data_2d, const Dataset& data_3d, const ParamStore& store,
                     std::int64_t step, bool with_grads) {
  auto plan_2d = batch_plan(data_2d.size(), stage_cfg.batch_2d, stage_cfg.seed, step, "order-2d");
  auto plan_3d = batch_plan(data_3d.size(), stage_cfg.batch_3d, stage_cfg.seed, step, "order-3d");

  std::vector<Volume> views;
  std::vector<SampleMeta> meta;
  std::vector<ViewGroup> groups;
  views.reserve((plan_2d.size() + plan_3d.size()) * static_cast<std::size_t>(view_cfg.n_views()));
  int segment = 0;
  auto add_sample = [&](const LabeledVolume& sample, std::int64_t epoch, const char* domain) {
    ViewSet vs = sample_views(sample.volume, view_cfg,
                              Rng::derive(stage_cfg.seed, domain,
                                          static_cast<std::uint64_t>(sample.id),
                                          static_cast<std::uint64_t>(epoch))
                                  .next_u64());
    ViewGroup group;
    group.begin = segment;
    group.n_global = view_cfg.n_global;
    for (std::size_t i = 0; i < vs.views.size(); ++i) {
      SampleMeta m;
      m.sample_id = sample.id;
      m.modality = sample.volume.modality;
      m.global_view = vs.is_global[i];
      m.view_index = static_cast<int>(i);
      views.push_back(std::move(vs.views[i]));
      meta.push_back(m);
      ++segment;
    }
    group.end = segment;
    groups.push_back(group);
  };
  for (const BatchDraw& draw : plan_2d) add_sample(data_2d[draw.index], draw.epoch, "crops-2d");
  for (const BatchDraw& draw : plan_3d) add_sample(data_3d[draw.index], draw.epoch, "crops-3d");

  StepOutcome outcome;
  outcome.n_2d = static_cast<std::int64_t>(plan_2d.size());
  outcome.n_3d = static_cast<std::int64_t>(plan_3d.size());

  PackedViews packed = pack_views(views, meta, encoder_cfg);
  Graph g;
  BoundParams params(g, store, with_grads);
  PackedBatch batch = embed_views(g, packed, params, encoder_cfg);
  EncoderOutput out = encode(g, batch, params, encoder_cfg);
  Tensor pred = batch_prediction_loss(g, out.pooled, groups);
  Tensor reg = sigreg_loss(g, out.pooled, objective_cfg.n_directions,
                           Rng::derive(stage_cfg.seed, "sigreg-step",
                                       static_cast<std::uint64_t>(step))
                               .next_u64());
  outcome.losses.pred = pred.item();
  outcome.losses.sigreg = reg.item();
  if (!std::isfinite(outcome.losses.pred) || !std::isfinite(outcome.losses.sigreg)) {
    outcome.finite = false;
    return outcome;
  }
  Tensor loss = total_loss(g, pred, reg, objective_cfg.lambda);
  outcome.losses.total = loss.item();
  if (!std::isfinite(outcome.losses.total)) {
    outcome.finite = false;
    return outcome;
  }
  if (with_grads) {
    g.backward(loss);
    outcome.grads.reserve(params.tensors().size());
    for (const Tensor& t : params.tensors()) {
      auto gr = g.grad(t);
      outcome.grads.emplace_back(gr.begin(), gr.end());
      if (!all_finite(outcome.grads.back())) outcome.finite = false;
    }
  }
  return outcome;
}

}  // namespace

LossBreakdown evaluate_step_loss(const StageConfig& stage_cfg, const OptimConfig& optim_cfg,
                                 const EncoderConfig& encoder_cfg, const ViewConfig& view_cfg,
                                 const ObjectiveConfig& objective_cfg, const Dataset& data_2d,
                                 const Dataset& data_3d, const ParamStore& params,
                                 std::int64_t step) {
  (void)optim_cfg;
  StepOutcome outcome = run_step(stage_cfg, encoder_cfg, view_cfg, objective_cfg, data_2d, data_3d,
                                 params, step, false);
  return outcome.losses;
}

RunStageResult run_stage(const StageConfig& stage_cfg, const OptimConfig& optim_cfg,
                         const EncoderConfig& encoder_cfg, const ViewConfig& view_cfg,
                         const ObjectiveConfig& objective_cfg, const Dataset& data_2d,
                         const Dataset& data_3d, std::optional<Checkpoint> warm_start,
                         const RunStageIo& io) {
  stage_cfg.validate();
  optim_cfg.validate();
  encoder_cfg.validate();
  view_cfg.validate();
  objective_cfg.validate();
  if (stage_cfg.batch_2d > 0 && data_2d.empty()) fail("run_stage: 2D dataset is empty");
  if (stage_cfg.batch_3d > 0 && data_3d.empty()) fail("run_stage: 3D dataset is empty");
  if (stage_cfg.from_checkpoint && !warm_start.has_value()) {
    fail("run_stage: this stage requires an initialization checkpoint");
  }

  RunStageResult result;
  std::int64_t start_step = 0;
  if (warm_start.has_value()) {
    result.params = std::move(warm_start->params);
    if (io.resume) {
      result.adam = std::move(warm_start->adam);
      start_step = warm_start->step;
    } else {
      result.adam = init_adam_state(result.params);
    }
  } else {
    if (io.resume) fail("run_stage: resume requires a checkpoint");
    result.params = init_params(encoder_cfg, stage_cfg.seed);
    result.adam = init_adam_state(result.params);
  }
  if (start_step > stage_cfg.steps) {
    fail("run_stage: checkpoint step " + std::to_string(start_step) +
         " is past the configured " + std::to_string(stage_cfg.steps) + " steps");
  }

  auto save = [&](std::int64_t step_count) {
    if (io.checkpoint_path.empty()) return;
    Checkpoint ckpt;
    ckpt.config_digest = io.config_digest;
    ckpt.step = step_count;
    ckpt.run_seed = stage_cfg.seed;
    ckpt.params = result.params;
    ckpt.adam = result.adam;
    save_checkpoint(io.checkpoint_path, ckpt);
  };

  for (int t = static_cast<int>(start_step); t < stage_cfg.steps; ++t) {
    StepOutcome outcome = run_step(stage_cfg, encoder_cfg, view_cfg, objective_cfg, data_2d,
                                   data_3d, result.params, t, true);
    if (!outcome.finite) {
      // Leave the last rolling checkpoint in place and report the step.
      result.aborted_nan = true;
      result.abort_step = t;
      return result;
    }
    adamw_step(result.params, outcome.grads, result.adam, optim_cfg, t);
    const float lr_t = cosine_lr(t, optim_cfg.total_steps, optim_cfg.lr);
    if (io.metrics) {
      char line[256];
      std::snprintf(line, sizeof(line),
                    "step=%d lr=%.9g loss_pred=%.9g loss_sigreg=%.9g loss_total=%.9g "
                    "n_2d=%lld n_3d=%lld\n",
                    t, static_cast<double>(lr_t), static_cast<double>(outcome.losses.pred),
                    static_cast<double>(outcome.losses.sigreg),
                    static_cast<double>(outcome.losses.total),
                    static_cast<long long>(outcome.n_2d), static_cast<long long>(outcome.n_3d));
      (*io.metrics) << line;
    }
    result.consumed_2d += outcome.n_2d;
    result.consumed_3d += outcome.n_3d;
    if (t == start_step) result.first_loss = outcome.losses.total;
    result.last_loss = outcome.losses.total;
    result.steps_done = t + 1;
    if (io.checkpoint_every > 0 && (t + 1) % io.checkpoint_every == 0 &&
        t + 1 < stage_cfg.steps) {
      save(t + 1);
    }
  }
  save(stage_cfg.steps);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization

namespace {

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_array(std::vector<std::uint8_t>& out, const std::string& name,
                  const std::vector<float>& values) {
  append_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  append_u32(out, static_cast<std::uint32_t>(values.size()));
  for (float v : values) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    append_u32(out, u);
  }
}

struct Reader {
  const std::uint8_t* p;
  const std::uint8_t* end;
  std::string path;

  void need(std::size_t n, const char* what) {
    if (static_cast<std::size_t>(end - p) < n) {
      io_fail(path + ": truncated checkpoint while reading " + std::string(what));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
  std::vector<float> floats(std::size_t n, const char* what) {
    need(n * 4, what);
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
      std::memcpy(&out[i], &u, 4);
    }
    p += n * 4;
    return out;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), {'M', 'M', 'V', 'C'});
  append_u32(bytes, ckpt.version);
  append_u64(bytes, ckpt.config_digest);
  append_u64(bytes, static_cast<std::uint64_t>(ckpt.step));
  append_u64(bytes, ckpt.run_seed);
  append_u32(bytes, static_cast<std::uint32_t>(ckpt.params.entries.size()));
  for (std::size_t i = 0; i < ckpt.params.entries.size(); ++i) {
    const auto& e = ckpt.params.entries[i];
    append_array(bytes, e.name, e.value);
    append_array(bytes, "m:" + e.name, ckpt.adam.m[i]);
    append_array(bytes, "v:" + e.name, ckpt.adam.v[i]);
  }
  const std::uint32_t crc = crc32(bytes.data(), bytes.size());
  append_u32(bytes, crc);
  atomic_write_file(path, bytes);
}

Checkpoint load_checkpoint(const std::string& path, const EncoderConfig& cfg,
                           std::uint64_t expected_digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "MMVC", 4) != 0) {
    io_fail(path + ": not a checkpoint file (bad magic)");
  }
  const std::uint32_t stored_crc = 0 | static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
                                   static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
                                   static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 |
                                   static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
  const std::uint32_t actual_crc = crc32(bytes.data(), bytes.size() - 4);
  if (stored_crc != actual_crc) {
    io_fail(path + ": checkpoint checksum mismatch (corrupt or truncated file)");
  }

  Reader r{bytes.data() + 4, bytes.data() + bytes.size() - 4, path};
  Checkpoint ckpt;
  ckpt.version = r.u32("version");
  if (ckpt.version != 1) fail(path + ": unsupported checkpoint version");
  ckpt.config_digest = r.u64("config digest");
  if (ckpt.config_digest != expected_digest) {
    fail(path + ": config digest mismatch (checkpoint " + std::to_string(ckpt.config_digest) +
         ", expected " + std::to_string(expected_digest) + ")");
  }
  ckpt.step = static_cast<std::int64_t>(r.u64("step"));
  ckpt.run_seed = r.u64("run seed");
  const std::uint32_t n_params = r.u32("parameter count");

  ckpt.params = init_params(cfg, 0);  // scaffold for names and shapes
  if (n_params != ckpt.params.entries.size()) {
    fail(path + ": checkpoint holds " + std::to_string(n_params) + " parameters, config needs " +
         std::to_string(ckpt.params.entries.size()));
  }
  ckpt.adam = init_adam_state(ckpt.params);
  auto read_array = [&](const std::string& expect_name, std::vector<float>& dst) {
    const std::uint32_t name_len = r.u32("name length");
    const std::string name = r.str(name_len, "array name");
    if (name != expect_name) {
      fail(path + ": unexpected array '" + name + "' (expected '" + expect_name + "')");
    }
    const std::uint32_t count = r.u32("array length");
    if (count != dst.size()) {
      fail(path + ": array '" + name + "' has " + std::to_string(count) + " values, expected " +
           std::to_string(dst.size()));
    }
    dst = r.floats(count, "array values");
  };
  for (std::size_t i = 0; i < ckpt.params.entries.size(); ++i) {
    auto& e = ckpt.params.entries[i];
    read_array(e.name, e.value);
    read_array("m:" + e.name, ckpt.adam.m[i]);
    read_array("v:" + e.name, ckpt.adam.v[i]);
  }
  if (r.p != r.end) fail(path + ": trailing bytes after the last array");
  return ckpt;
}

}  // namespace mmv
