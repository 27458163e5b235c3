#include "cslab/discretizer/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>

#include "cslab/common/errors.hpp"
#include "cslab/common/random.hpp"

namespace cslab::disc {
namespace {

using nn::Tensor;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::pair<int, double> nearest(const Tensor& centroids, std::span<const double> x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(centroids.row_span(c), x);
    if (d < best_d) {
      best_d = d;
      best = int(c);
    }
  }
  return {best, best_d};
}

void check_inputs(const Tensor& data, int k) {
  if (k < 1) throw ValidationError("k-means: k must be >= 1");
  if (std::size_t(k) > data.rows()) {
    throw ValidationError("k-means: k = " + std::to_string(k) + " exceeds the " +
                          std::to_string(data.rows()) + " data rows");
  }
  std::set<std::vector<double>> distinct;
  for (std::size_t r = 0; r < data.rows() && distinct.size() < std::size_t(k); ++r) {
    const auto row = data.row_span(r);
    distinct.emplace(row.begin(), row.end());
  }
  if (distinct.size() < std::size_t(k)) {
    throw ValidationError("k-means: fewer than k = " + std::to_string(k) + " distinct rows");
  }
}

void set_row(Tensor& m, std::size_t r, std::span<const double> v) {
  std::copy(v.begin(), v.end(), m.values().begin() + std::ptrdiff_t(r * m.cols()));
}

// k-means++ (D^2 sampling) over `rows` of data.
Tensor plus_plus(const Tensor& data, std::vector<std::size_t> rows, int k, Rng& rng) {
  Tensor centroids = Tensor::matrix(std::size_t(k), data.cols());
  std::uniform_int_distribution<std::size_t> first(0, rows.size() - 1);
  set_row(centroids, 0, data.row_span(rows[first(rng)]));
  std::vector<double> d2(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d2[i] = squared_distance(data.row_span(rows[i]), centroids.row_span(0));
  }
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), acc = 0.0;
      pick = rows.size() - 1;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && acc >= target) {
          pick = i;
          break;
        }
      }
      while (d2[pick] == 0.0) --pick;  // guard against rounding at the end
    } else {
      throw ValidationError("k-means: seeding sample has fewer than k distinct rows");
    }
    set_row(centroids, std::size_t(c), data.row_span(rows[pick]));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(data.row_span(rows[i]), centroids.row_span(std::size_t(c))));
    }
  }
  return centroids;
}

Tensor seed_centroids(const Tensor& data, int k, Rng& rng, int sample_size) {
  std::vector<std::size_t> rows(data.rows());
  std::iota(rows.begin(), rows.end(), 0);
  if (rows.size() > std::size_t(sample_size) && std::size_t(sample_size) >= std::size_t(k)) {
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(std::size_t(sample_size));
    try {
      return plus_plus(data, rows, k, rng);
    } catch (const ValidationError&) {
      rows.resize(data.rows());
      std::iota(rows.begin(), rows.end(), 0);
    }
  }
  return plus_plus(data, rows, k, rng);
}

// Full assignment; empty clusters move to the points farthest from their
// current centroid until every cluster has members.
void finalize(const Tensor& data, KmeansModel& model, int max_reseeds) {
  const std::size_t k = model.k();
  for (int round = 0;; ++round) {
    std::vector<int> labels(data.rows());
    std::vector<double> dist(data.rows());
    model.counts.assign(k, 0);
    model.inertia = 0.0;
    for (std::size_t r = 0; r < data.rows(); ++r) {
      const auto [c, d] = nearest(model.centroids, data.row_span(r));
      labels[r] = c;
      dist[r] = d;
      ++model.counts[std::size_t(c)];
      model.inertia += d;
    }
    std::vector<std::size_t> empty;
    for (std::size_t c = 0; c < k; ++c) {
      if (model.counts[c] == 0) empty.push_back(c);
    }
    if (empty.empty()) return;
    if (round >= max_reseeds) {
      throw TrainingError("k-means: " + std::to_string(empty.size()) +
                          " clusters stayed empty after re-seeding");
    }
    std::vector<std::size_t> order(data.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
    std::size_t next = 0;
    std::set<std::vector<double>> used;
    for (std::size_t c : empty) {
      while (next < order.size()) {
        const auto row = data.row_span(order[next++]);
        if (used.emplace(row.begin(), row.end()).second && dist[order[next - 1]] > 0.0) {
          set_row(model.centroids, c, row);
          break;
        }
      }
    }
  }
}

}  // namespace

int KmeansModel::assign(std::span<const double> x) const {
  if (x.size() != centroids.cols()) {
    throw DimensionError("k-means assign: vector of size " + std::to_string(x.size()) +
                         " for centroids " + centroids.shape_string());
  }
  return nearest(centroids, x).first;
}

std::vector<int> KmeansModel::assign_rows(const Tensor& data) const {
  std::vector<int> out(data.rows());
  for (std::size_t r = 0; r < data.rows(); ++r) out[r] = assign(data.row_span(r));
  return out;
}

KmeansModel kmeans_fit(const Tensor& data, int k, std::uint64_t seed, const KmeansOptions& options) {
  check_inputs(data, k);
  Rng rng = make_rng(seed, "kmeans");
  KmeansModel model;
  model.centroids = seed_centroids(data, k, rng, options.seeding_sample);
  std::vector<long long> seen(std::size_t(k), 0);
  std::uniform_int_distribution<std::size_t> pick(0, data.rows() - 1);
  const std::size_t d = data.cols();
  std::vector<std::size_t> batch(std::size_t(options.batch_size));
  std::vector<int> labels(batch.size());
  for (int it = 0; it < options.iterations; ++it) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      batch[i] = pick(rng);
      labels[i] = nearest(model.centroids, data.row_span(batch[i])).first;
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto c = std::size_t(labels[i]);
      const double eta = 1.0 / double(++seen[c]);
      const auto x = data.row_span(batch[i]);
      for (std::size_t j = 0; j < d; ++j) {
        double& v = model.centroids.at(c, j);
        v += eta * (x[j] - v);
      }
    }
  }
  finalize(data, model, options.max_reseeds);
  return model;
}

KmeansModel vq_fit(const Tensor& data, int k, std::uint64_t seed, const VqOptions& options) {
  check_inputs(data, k);
  Rng rng = make_rng(seed, "vq");
  KmeansModel model;
  model.centroids = seed_centroids(data, k, rng, 20000);
  const std::size_t d = data.cols(), K = std::size_t(k);
  std::vector<double> size(K, 1.0);
  Tensor sums = model.centroids;
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), 0);
  const double g = options.decay;
  for (int e = 0; e < options.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += std::size_t(options.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + std::size_t(options.batch_size));
      std::vector<double> n(K, 0.0);
      Tensor batch_sum = Tensor::matrix(K, d);
      for (std::size_t i = begin; i < end; ++i) {
        const auto x = data.row_span(order[i]);
        const auto c = std::size_t(nearest(model.centroids, x).first);
        n[c] += 1.0;
        for (std::size_t j = 0; j < d; ++j) batch_sum.at(c, j) += x[j];
      }
      double total = 0.0;
      for (std::size_t c = 0; c < K; ++c) {
        size[c] = g * size[c] + (1.0 - g) * n[c];
        total += size[c];
        for (std::size_t j = 0; j < d; ++j) sums.at(c, j) = g * sums.at(c, j) + (1.0 - g) * batch_sum.at(c, j);
      }
      for (std::size_t c = 0; c < K; ++c) {
        // Laplace-smoothed cluster size keeps rarely used codes finite.
        const double smoothed = (size[c] + options.epsilon) / (total + double(K) * options.epsilon) * total;
        for (std::size_t j = 0; j < d; ++j) model.centroids.at(c, j) = sums.at(c, j) / smoothed;
      }
    }
    // Dead codes restart at random data points.
    std::uniform_int_distribution<std::size_t> pick(0, data.rows() - 1);
    for (std::size_t c = 0; c < K; ++c) {
      if (size[c] < 1e-3) {
        set_row(model.centroids, c, data.row_span(pick(rng)));
        size[c] = 1.0;
        for (std::size_t j = 0; j < d; ++j) sums.at(c, j) = model.centroids.at(c, j);
      }
    }
  }
  finalize(data, model, 20);
  return model;
}

}  // namespace cslab::disc
