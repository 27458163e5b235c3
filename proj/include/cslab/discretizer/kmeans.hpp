#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cslab/numerics/tensor.hpp"

namespace cslab::disc {

struct KmeansOptions {
  int iterations = 200;     // mini-batch steps
  int batch_size = 1024;
  int seeding_sample = 20000;  // k-means++ runs on at most this many rows
  int max_reseeds = 20;
};

struct KmeansModel {
  nn::Tensor centroids;           // k x d
  std::vector<long long> counts;  // training points per centroid
  double inertia = 0.0;           // sum of squared distances on the training data

  std::size_t k() const { return centroids.rows(); }
  // Nearest centroid; ties go to the lowest index.
  int assign(std::span<const double> x) const;
  std::vector<int> assign_rows(const nn::Tensor& data) const;
};

// Mini-batch k-means with k-means++ seeding; empty clusters are re-seeded at
// the points farthest from their centroids. Deterministic for a given seed.
// Throws ValidationError when k exceeds the number of rows or of distinct rows.
KmeansModel kmeans_fit(const nn::Tensor& data, int k, std::uint64_t seed, const KmeansOptions& options = {});

struct VqOptions {
  int epochs = 5;
  int batch_size = 256;
  double decay = 0.99;  // EMA factor for cluster sizes and sums
  double epsilon = 1e-5;
};

// Vector quantization: a k-means++ initialised codebook refined with online
// exponential-moving-average updates; dead codes are re-seeded.
KmeansModel vq_fit(const nn::Tensor& data, int k, std::uint64_t seed, const VqOptions& options = {});

}  // namespace cslab::disc
