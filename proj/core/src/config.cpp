#include "mmv/config.hpp"

#include <fstream>

#include <json.hpp>

#include "mmv/hashing.hpp"

namespace mmv {

using nlohmann::json;
using nlohmann::ordered_json;

ProbeConfig RunConfig::probe_config(ProbeConfig::Filter filter) const {
  ProbeConfig cfg;
  cfg.filter = filter;
  cfg.epochs = eval.probe_epochs;
  cfg.lr = eval.probe_lr;
  cfg.l2 = eval.probe_l2;
  cfg.seed = seed;
  return cfg;
}

void RunConfig::validate() const {
  encoder.validate();
  views.validate();
  objective.validate();
  optimizer.validate();
  if (views.patch != encoder.patch) {
    throw ConfigError("views.patch is derived from encoder.patch and may not diverge");
  }
  if (data.train_fraction <= 0.0f || data.train_fraction >= 1.0f) {
    throw ConfigError("data.train_fraction must lie strictly between 0 and 1");
  }
  if (eval.n_boot < 2) throw ConfigError("eval.n_boot must be >= 2");
  if (eval.probe_epochs < 1) throw ConfigError("eval.probe_epochs must be >= 1");
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.views.patch = cfg.encoder.patch;
  return cfg;
}

namespace {

// Strict field-by-field extraction. Every getter removes its key; leftovers
// are reported as unknown.
class Section {
 public:
  Section(json& j, std::string path, const std::string& origin)
      : j_(j), path_(std::move(path)), origin_(origin) {
    if (!j_.is_object()) {
      throw ConfigError(origin_ + ": " + (path_.empty() ? "document" : path_) +
                        " must be a JSON object");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(origin_ + ": " + join(key) + " has the wrong type");
    }
    j_.erase(it);
  }

  void get_scale_range(const char* key, float& lo, float& hi) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array() || it->size() != 2) {
      throw ConfigError(origin_ + ": " + join(key) + " must be a [lo, hi] pair");
    }
    try {
      lo = (*it)[0].get<float>();
      hi = (*it)[1].get<float>();
    } catch (const json::exception&) {
      throw ConfigError(origin_ + ": " + join(key) + " has the wrong type");
    }
    j_.erase(it);
  }

  json take_object(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return json::object();
    json out = std::move(*it);
    j_.erase(it);
    return out;
  }

  // Call last: anything still present is a typo.
  void finish() {
    if (!j_.empty()) {
      throw ConfigError(origin_ + ": unknown key '" + join(j_.begin().key().c_str()) + "'");
    }
  }

  std::string join(const char* key) const {
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }

 private:
  json& j_;
  std::string path_;
  const std::string& origin_;
};

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": invalid JSON: " + e.what());
  }
  RunConfig cfg = default_run_config();

  Section root(doc, "", origin);
  root.get("seed", cfg.seed);

  {
    json sub = root.take_object("encoder");
    Section s(sub, "encoder", origin);
    s.get("depth", cfg.encoder.depth);
    s.get("d", cfg.encoder.d);
    s.get("n_heads", cfg.encoder.n_heads);
    s.get("mlp_ratio", cfg.encoder.mlp_ratio);
    s.get("patch", cfg.encoder.patch);
    s.get("channels", cfg.encoder.channels);
    s.get("alpha", cfg.encoder.alpha);
    s.get("rope_base", cfg.encoder.rope_base);
    s.get("ln_eps", cfg.encoder.ln_eps);
    s.finish();
  }
  {
    json sub = root.take_object("views");
    Section s(sub, "views", origin);
    s.get("n_global", cfg.views.n_global);
    s.get("n_local", cfg.views.n_local);
    s.get_scale_range("global_scale", cfg.views.global_scale_lo, cfg.views.global_scale_hi);
    s.get_scale_range("local_scale", cfg.views.local_scale_lo, cfg.views.local_scale_hi);
    s.get("long_side_2d", cfg.views.long_side_2d);
    s.get("long_side_3d", cfg.views.long_side_3d);
    s.finish();
  }
  {
    json sub = root.take_object("objective");
    Section s(sub, "objective", origin);
    s.get("lambda", cfg.objective.lambda);
    s.get("n_directions", cfg.objective.n_directions);
    s.finish();
  }
  {
    json sub = root.take_object("stage");
    Section s(sub, "stage", origin);
    s.get("steps", cfg.stage.steps);
    s.get("batch_2d", cfg.stage.batch_2d);
    s.get("batch_3d", cfg.stage.batch_3d);
    s.finish();
  }
  {
    json sub = root.take_object("optimizer");
    Section s(sub, "optimizer", origin);
    s.get("lr", cfg.optimizer.lr);
    s.get("beta1", cfg.optimizer.beta1);
    s.get("beta2", cfg.optimizer.beta2);
    s.get("eps", cfg.optimizer.eps);
    s.get("weight_decay", cfg.optimizer.weight_decay);
    s.finish();
  }
  {
    json sub = root.take_object("data");
    Section s(sub, "data", origin);
    s.get("dir_2d", cfg.data.dir_2d);
    s.get("dir_3d", cfg.data.dir_3d);
    s.get("train_fraction", cfg.data.train_fraction);
    s.finish();
  }
  {
    json sub = root.take_object("eval");
    Section s(sub, "eval", origin);
    s.get("n_boot", cfg.eval.n_boot);
    s.get("probe_epochs", cfg.eval.probe_epochs);
    s.get("probe_lr", cfg.eval.probe_lr);
    s.get("probe_l2", cfg.eval.probe_l2);
    s.finish();
  }
  root.finish();

  cfg.views.patch = cfg.encoder.patch;
  cfg.stage.seed = cfg.seed;
  cfg.optimizer.total_steps = std::max(1, cfg.stage.steps);
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text, path);
}

std::string dump_run_config(const RunConfig& cfg) {
  ordered_json doc;
  doc["seed"] = cfg.seed;
  doc["encoder"] = {{"depth", cfg.encoder.depth},
                    {"d", cfg.encoder.d},
                    {"n_heads", cfg.encoder.n_heads},
                    {"mlp_ratio", cfg.encoder.mlp_ratio},
                    {"patch", cfg.encoder.patch},
                    {"channels", cfg.encoder.channels},
                    {"alpha", cfg.encoder.alpha},
                    {"rope_base", cfg.encoder.rope_base},
                    {"ln_eps", cfg.encoder.ln_eps}};
  doc["views"] = {{"n_global", cfg.views.n_global},
                  {"n_local", cfg.views.n_local},
                  {"global_scale", {cfg.views.global_scale_lo, cfg.views.global_scale_hi}},
                  {"local_scale", {cfg.views.local_scale_lo, cfg.views.local_scale_hi}},
                  {"long_side_2d", cfg.views.long_side_2d},
                  {"long_side_3d", cfg.views.long_side_3d}};
  doc["objective"] = {{"lambda", cfg.objective.lambda},
                      {"n_directions", cfg.objective.n_directions}};
  doc["stage"] = {{"steps", cfg.stage.steps},
                  {"batch_2d", cfg.stage.batch_2d},
                  {"batch_3d", cfg.stage.batch_3d}};
  doc["optimizer"] = {{"lr", cfg.optimizer.lr},
                      {"beta1", cfg.optimizer.beta1},
                      {"beta2", cfg.optimizer.beta2},
                      {"eps", cfg.optimizer.eps},
                      {"weight_decay", cfg.optimizer.weight_decay}};
  doc["data"] = {{"dir_2d", cfg.data.dir_2d},
                 {"dir_3d", cfg.data.dir_3d},
                 {"train_fraction", cfg.data.train_fraction}};
  doc["eval"] = {{"n_boot", cfg.eval.n_boot},
                 {"probe_epochs", cfg.eval.probe_epochs},
                 {"probe_lr", cfg.eval.probe_lr},
                 {"probe_l2", cfg.eval.probe_l2}};
  return doc.dump(2) + "\n";
}

std::uint64_t run_config_digest(const RunConfig& cfg) { return fnv1a64(dump_run_config(cfg)); }

}  // namespace mmv
