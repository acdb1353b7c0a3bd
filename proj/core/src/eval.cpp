#include "mmv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mmv/rng.hpp"

namespace mmv {

void EmbeddingSet::push(std::vector<float> e, const std::array<bool, kNumLabels>& l, Modality m,
                        std::int64_t id) {
  if (dim == 0) dim = static_cast<int>(e.size());
  if (static_cast<int>(e.size()) != dim) fail("embedding width mismatch");
  embeddings.push_back(std::move(e));
  labels.push_back(l);
  modalities.push_back(m);
  ids.push_back(id);
}

EmbeddingSet EmbeddingSet::filtered(std::optional<Modality> keep) const {
  if (!keep.has_value()) return *this;
  EmbeddingSet out;
  out.dim = dim;
  for (std::size_t i = 0; i < size(); ++i) {
    if (modalities[i] == *keep) out.push(embeddings[i], labels[i], modalities[i], ids[i]);
  }
  return out;
}

namespace {

// Pooled center-view embeddings for a chunk of samples, one packed graph.
void extract_chunk(const ParamStore& store, const EncoderConfig& enc_cfg,
                   const ViewConfig& view_cfg, std::span<const LabeledVolume> chunk,
                   EmbeddingSet& out) {
  std::vector<Volume> views;
  std::vector<SampleMeta> meta;
  views.reserve(chunk.size());
  for (const LabeledVolume& s : chunk) {
    views.push_back(center_view(s.volume, view_cfg.patch));
    SampleMeta m;
    m.sample_id = s.id;
    m.modality = s.volume.modality;
    meta.push_back(m);
  }
  Graph g;
  BoundParams params(g, store, false);
  PackedViews packed = pack_views(views, meta, enc_cfg);
  PackedBatch batch = embed_views(g, packed, params, enc_cfg);
  EncoderOutput enc = encode(g, batch, params, enc_cfg);
  auto pooled = enc.pooled.values();
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    std::vector<float> e(pooled.begin() + static_cast<std::ptrdiff_t>(i) * enc_cfg.d,
                         pooled.begin() + static_cast<std::ptrdiff_t>(i + 1) * enc_cfg.d);
    out.push(std::move(e), chunk[i].labels, chunk[i].volume.modality, chunk[i].id);
  }
}

}  // namespace

EmbeddingSet extract_frozen_embeddings(const ParamStore& params, const EncoderConfig& enc_cfg,
                                       const ViewConfig& view_cfg, const Dataset& data) {
  EmbeddingSet out;
  out.dim = enc_cfg.d;
  const std::size_t chunk_size = 16;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk_size) {
    const std::size_t end = std::min(begin + chunk_size, data.size());
    extract_chunk(params, enc_cfg, view_cfg, std::span(data).subspan(begin, end - begin), out);
  }
  return out;
}

TokenFeatures extract_token_features(const ParamStore& params, const EncoderConfig& enc_cfg,
                                     const ViewConfig& view_cfg, const LabeledVolume& sample) {
  std::vector<Volume> views{center_view(sample.volume, view_cfg.patch)};
  SampleMeta m;
  m.sample_id = sample.id;
  m.modality = sample.volume.modality;
  Graph g;
  BoundParams bound(g, params, false);
  PackedViews packed = pack_views(views, std::span(&m, 1), enc_cfg);
  PackedBatch batch = embed_views(g, packed, bound, enc_cfg);
  EncoderOutput enc = encode(g, batch, bound, enc_cfg);
  TokenFeatures out;
  out.dim = enc_cfg.d;
  out.grid = batch.meta[0].grid;
  out.features.assign(enc.token_features.values().begin(), enc.token_features.values().end());
  return out;
}

const char* probe_filter_name(ProbeConfig::Filter f) {
  switch (f) {
    case ProbeConfig::Filter::only_2d: return "2d";
    case ProbeConfig::Filter::only_3d: return "3d";
    case ProbeConfig::Filter::all: return "all";
  }
  return "?";
}

float LinearProbe::score(std::span<const float> embedding, int label) const {
  const auto& w = weights[static_cast<std::size_t>(label)];
  double acc = bias[static_cast<std::size_t>(label)];
  for (std::size_t j = 0; j < w.size(); ++j) {
    acc += static_cast<double>(w[j]) * (embedding[j] - mean[j]) * inv_std[j];
  }
  return static_cast<float>(acc);
}

LinearProbe fit_linear_probe(const EmbeddingSet& train, const ProbeConfig& cfg) {
  if (train.size() < 2) fail("fit_linear_probe: need at least 2 training embeddings");
  if (cfg.epochs < 1 || !(cfg.lr > 0.0f) || cfg.l2 < 0.0f) {
    fail("fit_linear_probe: invalid probe hyperparameters");
  }
  const std::size_t n = train.size();
  const int d = train.dim;
  LinearProbe probe;
  probe.dim = d;
  probe.mean.assign(static_cast<std::size_t>(d), 0.0f);
  probe.inv_std.assign(static_cast<std::size_t>(d), 1.0f);
  for (const auto& e : train.embeddings) {
    for (int j = 0; j < d; ++j) probe.mean[static_cast<std::size_t>(j)] += e[static_cast<std::size_t>(j)];
  }
  for (int j = 0; j < d; ++j) probe.mean[static_cast<std::size_t>(j)] /= static_cast<float>(n);
  for (int j = 0; j < d; ++j) {
    double var = 0.0;
    for (const auto& e : train.embeddings) {
      const double diff = e[static_cast<std::size_t>(j)] - probe.mean[static_cast<std::size_t>(j)];
      var += diff * diff;
    }
    var /= static_cast<double>(n);
    probe.inv_std[static_cast<std::size_t>(j)] =
        static_cast<float>(1.0 / std::sqrt(std::max(var, 1e-12)));
  }

  // Standardize once; the probe trains in this fixed basis.
  std::vector<float> x(n * static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      x[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] =
          (train.embeddings[i][static_cast<std::size_t>(j)] - probe.mean[static_cast<std::size_t>(j)]) *
          probe.inv_std[static_cast<std::size_t>(j)];
    }
  }

  for (int label = 0; label < kNumLabels; ++label) {
    int positives = 0;
    for (const auto& l : train.labels) positives += l[static_cast<std::size_t>(label)];
    if (positives == 0 || positives == static_cast<int>(n)) {
      probe.evaluable[static_cast<std::size_t>(label)] = false;
      probe.weights[static_cast<std::size_t>(label)].assign(static_cast<std::size_t>(d), 0.0f);
      continue;
    }
    probe.evaluable[static_cast<std::size_t>(label)] = true;
    auto& w = probe.weights[static_cast<std::size_t>(label)];
    w.assign(static_cast<std::size_t>(d), 0.0f);
    float& b = probe.bias[static_cast<std::size_t>(label)];
    b = 0.0f;
    std::vector<double> gw(static_cast<std::size_t>(d));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const float* xi = x.data() + i * static_cast<std::size_t>(d);
        double z = b;
        for (int j = 0; j < d; ++j) z += static_cast<double>(w[static_cast<std::size_t>(j)]) * xi[j];
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double err = p - (train.labels[i][static_cast<std::size_t>(label)] ? 1.0 : 0.0);
        for (int j = 0; j < d; ++j) gw[static_cast<std::size_t>(j)] += err * xi[j];
        gb += err;
      }
      const double inv_n = 1.0 / static_cast<double>(n);
      for (int j = 0; j < d; ++j) {
        const double grad = gw[static_cast<std::size_t>(j)] * inv_n +
                            static_cast<double>(cfg.l2) * w[static_cast<std::size_t>(j)];
        w[static_cast<std::size_t>(j)] -= cfg.lr * static_cast<float>(grad);
      }
      b -= cfg.lr * static_cast<float>(gb * inv_n);
    }
  }
  return probe;
}

AurocResult auroc(std::span<const float> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail("auroc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  long long positives = 0;
  for (int l : labels) positives += l ? 1 : 0;
  const long long negatives = static_cast<long long>(n) - positives;
  AurocResult result;
  if (positives == 0 || negatives == 0) return result;

  // Integer arithmetic on doubled average ranks keeps tie handling exact.
  long long doubled_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const long long doubled_rank = static_cast<long long>(i + 1) + static_cast<long long>(j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) doubled_rank_sum += doubled_rank;
    }
    i = j;
  }
  const long long doubled_u = doubled_rank_sum - positives * (positives + 1);
  result.value = static_cast<double>(doubled_u) / (2.0 * static_cast<double>(positives) *
                                                   static_cast<double>(negatives));
  result.defined = true;
  return result;
}

Interval bootstrap_ci(std::span<const float> scores, std::span<const int> labels, int n_boot,
                      std::uint64_t seed) {
  AurocResult point = auroc(scores, labels);
  if (!point.defined) fail("bootstrap_ci: both classes must be present");
  if (n_boot < 2) fail("bootstrap_ci: n_boot must be >= 2");
  const std::size_t n = scores.size();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n_boot));
  std::vector<float> s(n);
  std::vector<int> l(n);
  for (int b = 0; b < n_boot; ++b) {
    Rng rng = Rng::derive(seed, "bootstrap", static_cast<std::uint64_t>(b));
    for (;;) {  // redraw resamples that lack a class
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pick = static_cast<std::size_t>(rng.uniform_int(n));
        s[i] = scores[pick];
        l[i] = labels[pick];
      }
      AurocResult r = auroc(s, l);
      if (r.defined) {
        values.push_back(r.value);
        break;
      }
    }
  }
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double h = q * static_cast<double>(values.size() - 1);
    const std::size_t i0 = static_cast<std::size_t>(h);
    const double t = h - static_cast<double>(i0);
    if (i0 + 1 >= values.size()) return values.back();
    return values[i0] + t * (values[i0 + 1] - values[i0]);
  };
  return {quantile(0.025), quantile(0.975)};
}

EvalReport evaluate_probe(const LinearProbe& probe, const EmbeddingSet& test, int n_boot,
                          std::uint64_t seed) {
  if (test.size() < 2) fail("evaluate_probe: test set too small");
  EvalReport report;
  report.seed = seed;
  report.n_test = test.size();
  const std::size_t n = test.size();

  std::array<std::vector<float>, kNumLabels> scores;
  std::array<std::vector<int>, kNumLabels> labels;
  for (int label = 0; label < kNumLabels; ++label) {
    auto& sc = scores[static_cast<std::size_t>(label)];
    auto& lb = labels[static_cast<std::size_t>(label)];
    sc.resize(n);
    lb.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      sc[i] = probe.score(test.embeddings[i], label);
      lb[i] = test.labels[i][static_cast<std::size_t>(label)] ? 1 : 0;
    }
  }

  double macro_sum = 0.0;
  int macro_n = 0;
  for (int label = 0; label < kNumLabels; ++label) {
    auto& metric = report.per_label[static_cast<std::size_t>(label)];
    if (!probe.evaluable[static_cast<std::size_t>(label)]) continue;
    AurocResult r = auroc(scores[static_cast<std::size_t>(label)], labels[static_cast<std::size_t>(label)]);
    if (!r.defined) continue;
    Interval ci = bootstrap_ci(scores[static_cast<std::size_t>(label)],
                               labels[static_cast<std::size_t>(label)], n_boot,
                               seed + static_cast<std::uint64_t>(label) * 1000003ull);
    metric.defined = true;
    metric.auroc = r.value;
    metric.ci_lo = ci.lo;
    metric.ci_hi = ci.hi;
    macro_sum += r.value;
    ++macro_n;
  }
  if (macro_n > 0) {
    report.macro.defined = true;
    report.macro.auroc = macro_sum / macro_n;
    // Joint bootstrap: one resample evaluates every label, macro per resample.
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(n_boot));
    std::vector<std::size_t> picks(n);
    std::vector<float> s(n);
    std::vector<int> l(n);
    for (int b = 0; b < n_boot; ++b) {
      Rng rng = Rng::derive(seed, "bootstrap-macro", static_cast<std::uint64_t>(b));
      for (std::size_t i = 0; i < n; ++i) picks[i] = static_cast<std::size_t>(rng.uniform_int(n));
      double acc = 0.0;
      int defined = 0;
      for (int label = 0; label < kNumLabels; ++label) {
        if (!report.per_label[static_cast<std::size_t>(label)].defined) continue;
        for (std::size_t i = 0; i < n; ++i) {
          s[i] = scores[static_cast<std::size_t>(label)][picks[i]];
          l[i] = labels[static_cast<std::size_t>(label)][picks[i]];
        }
        AurocResult r = auroc(s, l);
        if (r.defined) {
          acc += r.value;
          ++defined;
        }
      }
      if (defined > 0) values.push_back(acc / defined);
    }
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
      const double h = q * static_cast<double>(values.size() - 1);
      const std::size_t i0 = static_cast<std::size_t>(h);
      const double t = h - static_cast<double>(i0);
      if (i0 + 1 >= values.size()) return values.back();
      return values[i0] + t * (values[i0 + 1] - values[i0]);
    };
    report.macro.ci_lo = quantile(0.025);
    report.macro.ci_hi = quantile(0.975);
  }
  return report;
}

RobustnessGrid modality_robustness_report(const EmbeddingSet& train, const EmbeddingSet& test_2d,
                                          const EmbeddingSet& test_3d, const ProbeConfig& base,
                                          int n_boot, std::uint64_t seed) {
  RobustnessGrid grid;
  const ProbeConfig::Filter filters[3] = {ProbeConfig::Filter::only_2d,
                                          ProbeConfig::Filter::only_3d, ProbeConfig::Filter::all};
  for (int f = 0; f < 3; ++f) {
    ProbeConfig cfg = base;
    cfg.filter = filters[f];
    std::optional<Modality> keep;
    if (cfg.filter == ProbeConfig::Filter::only_2d) keep = Modality::xray2d;
    if (cfg.filter == ProbeConfig::Filter::only_3d) keep = Modality::ct3d;
    LinearProbe probe = fit_linear_probe(train.filtered(keep), cfg);
    for (int m = 0; m < 2; ++m) {
      const EmbeddingSet& test = m == 0 ? test_2d : test_3d;
      EvalReport report = evaluate_probe(probe, test, n_boot,
                                         seed + static_cast<std::uint64_t>(f) * 7919ull +
                                             static_cast<std::uint64_t>(m));
      report.probe_filter = probe_filter_name(cfg.filter);
      report.eval_modality = m == 0 ? "xray2d" : "ct3d";
      report.n_train = train.filtered(keep).size();
      grid.cells[static_cast<std::size_t>(f)][static_cast<std::size_t>(m)] = std::move(report);
    }
  }
  return grid;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  char line[160];
  for (int label = 0; label < kNumLabels; ++label) {
    const auto& m = report.per_label[static_cast<std::size_t>(label)];
    if (m.defined) {
      std::snprintf(line, sizeof(line), "label=%s auroc=%.4f ci_lo=%.4f ci_hi=%.4f\n",
                    kLabelNames[static_cast<std::size_t>(label)], m.auroc, m.ci_lo, m.ci_hi);
    } else {
      std::snprintf(line, sizeof(line), "label=%s auroc=undefined\n",
                    kLabelNames[static_cast<std::size_t>(label)]);
    }
    os << line;
  }
  if (report.macro.defined) {
    std::snprintf(line, sizeof(line), "label=macro auroc=%.4f ci_lo=%.4f ci_hi=%.4f\n",
                  report.macro.auroc, report.macro.ci_lo, report.macro.ci_hi);
    os << line;
  }
  return os.str();
}

std::string format_grid(const RobustnessGrid& grid) {
  std::ostringstream os;
  char line[160];
  for (const auto& row : grid.cells) {
    for (const auto& cell : row) {
      std::snprintf(line, sizeof(line), "probe=%s eval=%s macro=%.4f ci_lo=%.4f ci_hi=%.4f\n",
                    cell.probe_filter.c_str(), cell.eval_modality.c_str(), cell.macro.auroc,
                    cell.macro.ci_lo, cell.macro.ci_hi);
      os << line;
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// PCA

Pca embedding_pca(const std::vector<std::vector<float>>& data, int k) {
  const int n = static_cast<int>(data.size());
  if (n < 2) fail("embedding_pca: need at least 2 rows");
  const int d = static_cast<int>(data[0].size());
  if (k < 1 || k >= n) {
    fail("embedding_pca: k = " + std::to_string(k) + " must satisfy 1 <= k < N = " +
         std::to_string(n));
  }
  if (k > d) fail("embedding_pca: k exceeds the dimension");

  Pca pca;
  pca.dim = d;
  pca.k = k;
  pca.mean.assign(static_cast<std::size_t>(d), 0.0f);
  for (const auto& row : data) {
    for (int j = 0; j < d; ++j) pca.mean[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j)];
  }
  for (int j = 0; j < d; ++j) pca.mean[static_cast<std::size_t>(j)] /= static_cast<float>(n);

  // Covariance in double.
  std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
  for (const auto& row : data) {
    for (int a = 0; a < d; ++a) {
      const double da = row[static_cast<std::size_t>(a)] - pca.mean[static_cast<std::size_t>(a)];
      for (int b = a; b < d; ++b) {
        const double db = row[static_cast<std::size_t>(b)] - pca.mean[static_cast<std::size_t>(b)];
        cov[static_cast<std::size_t>(a) * d + b] += da * db;
      }
    }
  }
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b) {
      const double v = cov[static_cast<std::size_t>(a) * d + b] / static_cast<double>(n - 1);
      cov[static_cast<std::size_t>(a) * d + b] = v;
      cov[static_cast<std::size_t>(b) * d + a] = v;
    }
  }

  // Cyclic Jacobi eigendecomposition.
  std::vector<double> vecs(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) vecs[static_cast<std::size_t>(i) * d + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) off += cov[static_cast<std::size_t>(p) * d + q] * cov[static_cast<std::size_t>(p) * d + q];
    }
    if (off < 1e-22) break;
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = cov[static_cast<std::size_t>(p) * d + q];
        if (std::fabs(apq) < 1e-30) continue;
        const double app = cov[static_cast<std::size_t>(p) * d + p];
        const double aqq = cov[static_cast<std::size_t>(q) * d + q];
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < d; ++i) {
          const double aip = cov[static_cast<std::size_t>(i) * d + p];
          const double aiq = cov[static_cast<std::size_t>(i) * d + q];
          cov[static_cast<std::size_t>(i) * d + p] = c * aip - s * aiq;
          cov[static_cast<std::size_t>(i) * d + q] = s * aip + c * aiq;
        }
        for (int i = 0; i < d; ++i) {
          const double api = cov[static_cast<std::size_t>(p) * d + i];
          const double aqi = cov[static_cast<std::size_t>(q) * d + i];
          cov[static_cast<std::size_t>(p) * d + i] = c * api - s * aqi;
          cov[static_cast<std::size_t>(q) * d + i] = s * api + c * aqi;
        }
        for (int i = 0; i < d; ++i) {
          const double vip = vecs[static_cast<std::size_t>(i) * d + p];
          const double viq = vecs[static_cast<std::size_t>(i) * d + q];
          vecs[static_cast<std::size_t>(i) * d + p] = c * vip - s * viq;
          vecs[static_cast<std::size_t>(i) * d + q] = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return cov[static_cast<std::size_t>(a) * d + a] > cov[static_cast<std::size_t>(b) * d + b];
  });

  pca.components.resize(static_cast<std::size_t>(k) * d);
  pca.explained_variance.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    const int col = order[static_cast<std::size_t>(c)];
    pca.explained_variance[static_cast<std::size_t>(c)] =
        static_cast<float>(std::max(cov[static_cast<std::size_t>(col) * d + col], 0.0));
    // Deterministic sign: the largest-magnitude entry is positive.
    int arg = 0;
    double best = 0.0;
    for (int i = 0; i < d; ++i) {
      const double v = std::fabs(vecs[static_cast<std::size_t>(i) * d + col]);
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    const double sign = vecs[static_cast<std::size_t>(arg) * d + col] >= 0.0 ? 1.0 : -1.0;
    for (int i = 0; i < d; ++i) {
      pca.components[static_cast<std::size_t>(c) * d + i] =
          static_cast<float>(sign * vecs[static_cast<std::size_t>(i) * d + col]);
    }
  }
  return pca;
}

std::vector<float> pca_project(const Pca& pca, std::span<const float> x) {
  if (static_cast<int>(x.size()) != pca.dim) fail("pca_project: dimension mismatch");
  std::vector<float> out(static_cast<std::size_t>(pca.k));
  for (int c = 0; c < pca.k; ++c) {
    double acc = 0.0;
    for (int j = 0; j < pca.dim; ++j) {
      acc += static_cast<double>(pca.components[static_cast<std::size_t>(c) * pca.dim + j]) *
             (x[static_cast<std::size_t>(j)] - pca.mean[static_cast<std::size_t>(j)]);
    }
    out[static_cast<std::size_t>(c)] = static_cast<float>(acc);
  }
  return out;
}

PatchPcaMap patch_pca_map(const TokenFeatures& tokens, const Pca& pca, int n_components) {
  if (tokens.dim != pca.dim) fail("patch_pca_map: feature dimension does not match the PCA");
  if (n_components > pca.k) fail("patch_pca_map: not enough fitted components");
  const std::int64_t s = tokens.grid.count();
  if (s * tokens.dim != static_cast<std::int64_t>(tokens.features.size())) {
    fail("patch_pca_map: grid and feature count disagree");
  }
  PatchPcaMap map;
  map.grid = tokens.grid;
  map.maps.assign(static_cast<std::size_t>(n_components),
                  std::vector<float>(static_cast<std::size_t>(s)));
  for (std::int64_t i = 0; i < s; ++i) {
    auto proj = pca_project(pca, std::span<const float>(tokens.features)
                                     .subspan(static_cast<std::size_t>(i) * tokens.dim,
                                              static_cast<std::size_t>(tokens.dim)));
    for (int c = 0; c < n_components; ++c) {
      map.maps[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] = proj[static_cast<std::size_t>(c)];
    }
  }
  for (auto& m : map.maps) {
    float lo = m[0], hi = m[0];
    for (float v : m) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > lo) {
      const float inv = 1.0f / (hi - lo);
      for (auto& v : m) v = (v - lo) * inv;
    } else {
      std::fill(m.begin(), m.end(), 0.0f);  // constant features map flat
    }
  }
  return map;
}

}  // namespace mmv
