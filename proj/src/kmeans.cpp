#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctp/episode.hpp"
#include "ctp/rng.hpp"

namespace ctp {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

Tensor plus_plus_init(const Tensor& pts, std::size_t k, Rng& rng) {
  const std::size_t n = pts.rows;
  Tensor means(k, pts.cols);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = uniform_index(rng, n);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double v : d2) total += v;
      if (total <= 0.0) {
        pick = uniform_index(rng, n);
      } else {
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng);
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          r -= d2[i];
          if (r < 0.0) {
            pick = i;
            break;
          }
        }
      }
    }
    std::copy_n(pts.row_span(pick).data(), pts.cols, means.row_span(c).data());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(pts.row_span(i), means.row_span(c)));
  }
  return means;
}

double assign(const Tensor& pts, const Tensor& means, std::vector<std::size_t>& out) {
  double sse = 0.0;
  for (std::size_t i = 0; i < pts.rows; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < means.rows; ++c) {
      const double d = sq_dist(pts.row_span(i), means.row_span(c));
      if (d < best) {
        best = d;
        out[i] = c;
      }
    }
    sse += best;
  }
  return sse;
}

KMeansResult lloyd(const Tensor& pts, std::size_t k, std::size_t max_iter, double tol, Rng& rng) {
  KMeansResult r;
  r.means = plus_plus_init(pts, k, rng);
  r.assignments.assign(pts.rows, 0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    assign(pts, r.means, r.assignments);
    Tensor next(k, pts.cols);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < pts.rows; ++i) {
      ++count[r.assignments[i]];
      auto row = next.row_span(r.assignments[i]);
      const auto p = pts.row_span(i);
      for (std::size_t j = 0; j < pts.cols; ++j) row[j] += p[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) continue;
      for (double& v : next.row_span(c)) v /= static_cast<double>(count[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] != 0) continue;
      // Re-seed with the point farthest from its current mean.
      std::size_t far = 0;
      double worst = -1.0;
      for (std::size_t i = 0; i < pts.rows; ++i) {
        if (count[r.assignments[i]] <= 1) continue;
        const double d = sq_dist(pts.row_span(i), next.row_span(r.assignments[i]));
        if (d > worst) {
          worst = d;
          far = i;
        }
      }
      --count[r.assignments[far]];
      r.assignments[far] = c;
      count[c] = 1;
      std::copy_n(pts.row_span(far).data(), pts.cols, next.row_span(c).data());
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) shift = std::max(shift, sq_dist(next.row_span(c), r.means.row_span(c)));
    r.means = std::move(next);
    if (std::sqrt(shift) < tol) break;
  }
  assign(pts, r.means, r.assignments);
  // Report the SSE of the final partition around its own centroids.
  Tensor sums(k, pts.cols);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < pts.rows; ++i) {
    ++count[r.assignments[i]];
    auto row = sums.row_span(r.assignments[i]);
    const auto p = pts.row_span(i);
    for (std::size_t j = 0; j < pts.cols; ++j) row[j] += p[j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] == 0) continue;
    auto row = r.means.row_span(c);
    const auto s = sums.row_span(c);
    for (std::size_t j = 0; j < pts.cols; ++j) row[j] = s[j] / static_cast<double>(count[c]);
  }
  r.sse = 0.0;
  for (std::size_t i = 0; i < pts.rows; ++i) r.sse += sq_dist(pts.row_span(i), r.means.row_span(r.assignments[i]));
  return r;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, std::size_t k, std::size_t restarts, std::size_t max_iter,
                    double tol, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be >= 1");
  if (points.rows < k) {
    throw std::invalid_argument("kmeans: " + std::to_string(points.rows) + " points for k=" +
                                std::to_string(k));
  }
  KMeansResult best;
  best.sse = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
    Rng rng(derive_seed(seed, {r}));
    KMeansResult cur = lloyd(points, k, max_iter, tol, rng);
    if (cur.sse < best.sse) best = std::move(cur);
  }
  return best;
}

}  // namespace ctp
