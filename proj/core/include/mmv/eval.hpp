// Frozen-feature evaluation: linear probes over pooled embeddings, AUROC with
// bootstrap confidence intervals, the probe-modality robustness grid, and PCA
// analyses of embeddings and per-patch features.
//
// Embeddings come from a single deterministic center view per sample (the
// full downsized input, no random crop), so an evaluation is a pure function
// of checkpoint and data.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmv/training.hpp"

namespace mmv {

struct EmbeddingSet {
  int dim = 0;
  std::vector<std::vector<float>> embeddings;       // N x dim
  std::vector<std::array<bool, kNumLabels>> labels;  // N x labels
  std::vector<Modality> modalities;
  std::vector<std::int64_t> ids;

  std::size_t size() const { return embeddings.size(); }
  void push(std::vector<float> e, const std::array<bool, kNumLabels>& l, Modality m,
            std::int64_t id);
  EmbeddingSet filtered(std::optional<Modality> keep) const;
};

// Encoder run frozen over every sample's center view.
EmbeddingSet extract_frozen_embeddings(const ParamStore& params, const EncoderConfig& enc_cfg,
                                       const ViewConfig& view_cfg, const Dataset& data);

// Per-token final features of one sample's center view.
struct TokenFeatures {
  std::vector<float> features;  // S x dim
  GridShape grid;
  int dim = 0;
};

TokenFeatures extract_token_features(const ParamStore& params, const EncoderConfig& enc_cfg,
                                     const ViewConfig& view_cfg, const LabeledVolume& sample);

struct ProbeConfig {
  enum class Filter { only_2d, only_3d, all };
  Filter filter = Filter::all;
  int epochs = 400;
  float lr = 0.5f;
  float l2 = 1e-3f;
  std::uint64_t seed = 0;
};

const char* probe_filter_name(ProbeConfig::Filter f);

// One-vs-rest logistic scorers on standardized embeddings, trained by
// deterministic full-batch gradient descent. The encoder is never touched.
struct LinearProbe {
  int dim = 0;
  std::vector<float> mean, inv_std;  // train-split standardization
  std::array<std::vector<float>, kNumLabels> weights;
  std::array<float, kNumLabels> bias{};
  std::array<bool, kNumLabels> evaluable{};  // both classes present in training

  float score(std::span<const float> embedding, int label) const;
};

LinearProbe fit_linear_probe(const EmbeddingSet& train, const ProbeConfig& cfg);

// Mann-Whitney AUROC: (concordant + 0.5 tied) / (positives * negatives).
// Undefined when one class is absent.
struct AurocResult {
  double value = 0.5;
  bool defined = false;
};

AurocResult auroc(std::span<const float> scores, std::span<const int> labels);

// Percentile bootstrap over sample resamples; resamples missing a class are
// redrawn. Deterministic from the seed.
struct Interval {
  double lo = 0.0, hi = 0.0;
};

Interval bootstrap_ci(std::span<const float> scores, std::span<const int> labels, int n_boot,
                      std::uint64_t seed);

struct LabelMetric {
  double auroc = 0.5;
  double ci_lo = 0.0, ci_hi = 0.0;
  bool defined = false;
};

struct EvalReport {
  std::array<LabelMetric, kNumLabels> per_label;
  LabelMetric macro;
  std::string probe_filter;
  std::string eval_modality;
  std::size_t n_train = 0, n_test = 0;
  std::uint64_t seed = 0;
};

EvalReport evaluate_probe(const LinearProbe& probe, const EmbeddingSet& test, int n_boot,
                          std::uint64_t seed);

// Probe filter (2D, 3D, ALL) x evaluation modality (2D, 3D).
struct RobustnessGrid {
  std::array<std::array<EvalReport, 2>, 3> cells;  // [filter][modality]
};

RobustnessGrid modality_robustness_report(const EmbeddingSet& train, const EmbeddingSet& test_2d,
                                          const EmbeddingSet& test_3d, const ProbeConfig& base,
                                          int n_boot, std::uint64_t seed);

std::string format_report(const EvalReport& report);
std::string format_grid(const RobustnessGrid& grid);

// Top-k principal components of centered data by Jacobi eigendecomposition.
struct Pca {
  int dim = 0, k = 0;
  std::vector<float> mean;                // dim
  std::vector<float> components;          // k x dim, orthonormal rows
  std::vector<float> explained_variance;  // k, non-increasing
};

Pca embedding_pca(const std::vector<std::vector<float>>& data, int k);
std::vector<float> pca_project(const Pca& pca, std::span<const float> x);

// Per-patch projections onto the top components, min-max scaled to [0, 1]
// per component, in the sample's grid layout.
struct PatchPcaMap {
  GridShape grid;
  std::vector<std::vector<float>> maps;  // one S-length map per component
};

PatchPcaMap patch_pca_map(const TokenFeatures& tokens, const Pca& pca, int n_components = 3);

}  // namespace mmv
