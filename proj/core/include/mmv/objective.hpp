// LeJEPA objective: global-centroid prediction loss plus the SIGReg
// isotropic-Gaussian regularizer.
//
// SIGReg projects the batch embeddings onto random unit directions and
// penalizes the Epps-Pulley statistic of each projection against N(0,1):
//   T = (1/N) sum_jk exp(-(x_j-x_k)^2/2) - sqrt(2) sum_j exp(-x_j^2/4) + N/sqrt(3),
// the closed form of N * integral |phi_N(t) - e^{-t^2/2}|^2 phi(t) dt with
// standard-normal weight phi. Projections are not standardized first; the
// statistic therefore also constrains scale. The per-direction contribution is
// T/N so the regularizer's magnitude does not grow with batch size.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmv/graph.hpp"

namespace mmv {

struct ObjectiveConfig {
  float lambda = 0.025f;  // mixing weight of SIGReg
  int n_directions = 64;  // projections per step, redrawn each step

  void validate() const;
};

// Contiguous rows of the pooled embedding matrix belonging to one sample:
// n_global global views first, then the local views.
struct ViewGroup {
  int begin = 0;
  int end = 0;
  int n_global = 0;
};

// Mean squared distance of every view embedding to the centroid of the global
// views. views: [V, d]. The centroid keeps its gradient (no stop-gradient).
Tensor prediction_loss(Graph& g, const Tensor& views, int n_global);

// Mean of per-sample prediction losses over the batch.
Tensor batch_prediction_loss(Graph& g, const Tensor& pooled, std::span<const ViewGroup> groups);

// Epps-Pulley statistic of one projected sample, recorded on the graph.
Tensor ep_statistic(Graph& g, const Tensor& x);

// Plain double-precision evaluation (reports, tests).
double ep_statistic_value(std::span<const float> x);

// Mean over n_directions random unit projections of T/N. Directions come from
// the seed and receive no gradient. embeddings: [N, d], N >= 2.
Tensor sigreg_loss(Graph& g, const Tensor& embeddings, int n_directions, std::uint64_t seed);

// (1 - lambda) * pred + lambda * sigreg.
Tensor total_loss(Graph& g, const Tensor& pred, const Tensor& sigreg, float lambda);

}  // namespace mmv
