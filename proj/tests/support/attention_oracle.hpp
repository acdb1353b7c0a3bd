// Reference attention: per-sample dense softmax(q k^T / sqrt(dh)) v with plain
// double-accumulated loops. Deliberately independent of the packed kernel it
// checks.
#pragma once

#include <cmath>
#include <vector>

namespace mmv::testing {

// q, k, v: [len, heads, head_dim] flat slices of one segment (stride = heads*head_dim).
inline std::vector<float> dense_attention_segment(const std::vector<float>& q,
                                                  const std::vector<float>& k,
                                                  const std::vector<float>& v, int len, int heads,
                                                  int head_dim) {
  const int stride = heads * head_dim;
  std::vector<float> out(static_cast<std::size_t>(len) * stride, 0.0f);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (int hd = 0; hd < heads; ++hd) {
    for (int i = 0; i < len; ++i) {
      std::vector<double> scores(static_cast<std::size_t>(len));
      double mx = -1e300;
      for (int j = 0; j < len; ++j) {
        double s = 0.0;
        for (int d = 0; d < head_dim; ++d) {
          s += static_cast<double>(q[static_cast<std::size_t>(i) * stride + hd * head_dim + d]) *
               k[static_cast<std::size_t>(j) * stride + hd * head_dim + d];
        }
        scores[static_cast<std::size_t>(j)] = s * scale;
        mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
      }
      double denom = 0.0;
      for (int j = 0; j < len; ++j) {
        scores[static_cast<std::size_t>(j)] = std::exp(scores[static_cast<std::size_t>(j)] - mx);
        denom += scores[static_cast<std::size_t>(j)];
      }
      for (int d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (int j = 0; j < len; ++j) {
          acc += scores[static_cast<std::size_t>(j)] *
                 v[static_cast<std::size_t>(j) * stride + hd * head_dim + d];
        }
        out[static_cast<std::size_t>(i) * stride + hd * head_dim + d] =
            static_cast<float>(acc / denom);
      }
    }
  }
  return out;
}

}  // namespace mmv::testing
