#include "dncit/cmiknn.hpp"

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace dncit {

double digamma(double x) {
  if (!(x > 0.0)) throw Error(ErrorCode::kNonPositive, "digamma needs a positive argument");
  return boost::math::digamma(x);
}

Index resolve_k_cmi(const CmiParams& params, Index n) {
  if (params.k_cmi) return *params.k_cmi;
  return std::max<Index>(1, static_cast<Index>(std::lround(0.1 * static_cast<double>(n))));
}

void validate(const CmiParams& p, Index n) {
  const Index k = resolve_k_cmi(p, n);
  if (k < 1 || k >= n - 1) {
    throw Error(ErrorCode::kKTooLarge, "k_cmi = " + std::to_string(k) + " needs n > k_cmi + 1");
  }
  if (p.k_perm < 1 || p.k_perm >= n) throw Error(ErrorCode::kKTooLarge, "k_perm must lie in [1, n)");
  if (p.num_permutations < 19) {
    throw Error(ErrorCode::kInvalidArgument, "CMIknn needs at least 19 permutations");
  }
  if (!(p.noise_scale >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise_scale must be >= 0");
  if (n > kCmiMaxRows && !p.allow_large_n) {
    throw Error(ErrorCode::kRuntimeGuard, "CMIknn refuses n > 5000 without an explicit override");
  }
}

namespace {

constexpr Index kCacheRows = 2500;

Matrix jitter(const Matrix& m, double scale, std::mt19937_64& rng) {
  const Standardized s = standardize_columns(m);
  Matrix out = s.values;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index c = 0; c < out.cols(); ++c) {
    if (s.sds(c) == 0.0 || scale == 0.0) continue;
    for (Index r = 0; r < out.rows(); ++r) out(r, c) += scale * normal(rng);
  }
  return out;
}

double max_norm(const Matrix& m, Index i, Index j) {
  double acc = 0.0;
  for (Index c = 0; c < m.cols(); ++c) acc = std::max(acc, std::abs(m(i, c) - m(j, c)));
  return acc;
}

}  // namespace

CmiEstimator::CmiEstimator(const Matrix& x, const Matrix& z, const Vector& y, Index k,
                           double noise_scale, std::uint64_t seed)
    : k_(k) {
  const Index n = y.size();
  if (x.rows() != n || (z.cols() > 0 && z.rows() != n)) {
    throw Error(ErrorCode::kRowMismatch, "CMI inputs differ in row count");
  }
  if (k < 1 || k >= n - 1) throw Error(ErrorCode::kKTooLarge, "CMI needs n > k + 1");
  std::mt19937_64 rng(derive_seed(seed, 21));
  x_ = jitter(x, noise_scale, rng);
  y_ = jitter(y, noise_scale, rng).col(0);
  z_ = z.cols() > 0 ? jitter(z, noise_scale, rng) : Matrix(n, 0);
  psi_.assign(static_cast<std::size_t>(n + 2), 0.0);
  for (Index m = 1; m <= n + 1; ++m) psi_[static_cast<std::size_t>(m)] = digamma(static_cast<double>(m));
  if (n > kCacheRows) return;

  cached_ = true;
  const auto w = static_cast<std::size_t>(n - 1);
  order_xz_.resize(static_cast<std::size_t>(n) * w);
  sorted_xz_.resize(order_xz_.size());
  if (z_.cols() > 0) {
    order_z_.resize(order_xz_.size());
    sorted_z_.resize(order_xz_.size());
  }
  std::vector<std::pair<double, std::int32_t>> row_xz(w), row_z(w);
  for (Index i = 0; i < n; ++i) {
    std::size_t s = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dz = z_.cols() > 0 ? max_norm(z_, i, j) : 0.0;
      row_z[s] = {dz, static_cast<std::int32_t>(j)};
      row_xz[s] = {std::max(dz, max_norm(x_, i, j)), static_cast<std::int32_t>(j)};
      ++s;
    }
    std::sort(row_xz.begin(), row_xz.end());
    const std::size_t base = static_cast<std::size_t>(i) * w;
    for (std::size_t t = 0; t < w; ++t) {
      sorted_xz_[base + t] = row_xz[t].first;
      order_xz_[base + t] = row_xz[t].second;
    }
    if (z_.cols() > 0) {
      std::sort(row_z.begin(), row_z.end());
      for (std::size_t t = 0; t < w; ++t) {
        sorted_z_[base + t] = row_z[t].first;
        order_z_[base + t] = row_z[t].second;
      }
    }
  }
}

double CmiEstimator::dist_xz(Index i, Index j) const {
  return std::max(dist_z(i, j), max_norm(x_, i, j));
}

double CmiEstimator::dist_z(Index i, Index j) const {
  return z_.cols() > 0 ? max_norm(z_, i, j) : 0.0;
}

double CmiEstimator::estimate(const Vector& y) const {
  if (y.size() != y_.size()) throw Error(ErrorCode::kRowMismatch, "y has the wrong length");
  return cached_ ? estimate_cached(y) : estimate_direct(y);
}

double CmiEstimator::estimate_cached(const Vector& y) const {
  const Index n = y_.size();
  const auto w = static_cast<std::size_t>(n - 1);
  const bool conditional = z_.cols() > 0;
  std::vector<double> y_sorted;
  if (!conditional) {
    y_sorted.assign(y.data(), y.data() + n);
    std::sort(y_sorted.begin(), y_sorted.end());
  }
  std::vector<double> heap;
  heap.reserve(static_cast<std::size_t>(k_));
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * w;
    const double yi = y(i);
    // k-th smallest joint distance; rows come in increasing (x, z) distance,
    // which bounds the joint distance from below.
    heap.clear();
    for (std::size_t t = 0; t < w; ++t) {
      const double dxz = sorted_xz_[base + t];
      if (static_cast<Index>(heap.size()) == k_ && dxz >= heap.front()) break;
      const double d = std::max(dxz, std::abs(yi - y(order_xz_[base + t])));
      if (static_cast<Index>(heap.size()) < k_) {
        heap.push_back(d);
        std::push_heap(heap.begin(), heap.end());
      } else if (d < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = d;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    const double eps = heap.front();
    const auto xz_begin = sorted_xz_.begin() + static_cast<std::ptrdiff_t>(base);
    const auto n_xz = static_cast<Index>(
        std::lower_bound(xz_begin, xz_begin + static_cast<std::ptrdiff_t>(w), eps) - xz_begin);
    if (conditional) {
      const auto z_begin = sorted_z_.begin() + static_cast<std::ptrdiff_t>(base);
      const auto n_z = static_cast<Index>(
          std::lower_bound(z_begin, z_begin + static_cast<std::ptrdiff_t>(w), eps) - z_begin);
      Index n_yz = 0;
      for (Index t = 0; t < n_z; ++t) {
        if (std::abs(yi - y(order_z_[base + static_cast<std::size_t>(t)])) < eps) ++n_yz;
      }
      // Counts include the point itself.
      acc += psi_[static_cast<std::size_t>(n_z + 1)] - psi_[static_cast<std::size_t>(n_xz + 1)] -
             psi_[static_cast<std::size_t>(n_yz + 1)];
    } else {
      // Rows strictly inside (yi - eps, yi + eps), minus the point itself.
      // yi +- eps can round past the row that defines eps, so the bounds are
      // corrected with the same |yi - yj| < eps test the other counts use.
      auto inside = [&](double v) { return std::abs(yi - v) < eps; };
      auto lo = std::upper_bound(y_sorted.begin(), y_sorted.end(), yi - eps);
      while (lo != y_sorted.begin() && inside(*(lo - 1))) --lo;
      while (lo != y_sorted.end() && *lo < yi && !inside(*lo)) ++lo;
      auto hi = std::lower_bound(y_sorted.begin(), y_sorted.end(), yi + eps);
      while (hi != y_sorted.end() && inside(*hi)) ++hi;
      while (hi != y_sorted.begin() && *(hi - 1) > yi && !inside(*(hi - 1))) --hi;
      const auto n_y = static_cast<Index>(hi - lo) - 1;
      acc -= psi_[static_cast<std::size_t>(n_xz + 1)] + psi_[static_cast<std::size_t>(n_y + 1)];
    }
  }
  const double mean = acc / static_cast<double>(n);
  const double psi_k = psi_[static_cast<std::size_t>(k_)];
  return conditional ? psi_k + mean : psi_k + psi_[static_cast<std::size_t>(n)] + mean;
}

double CmiEstimator::estimate_direct(const Vector& y) const {
  const Index n = y_.size();
  const bool conditional = z_.cols() > 0;
  std::vector<double> scratch(static_cast<std::size_t>(n - 1));
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    std::size_t s = 0;
    for (Index j = 0; j < n; ++j) {
      if (j != i) scratch[s++] = std::max(dist_xz(i, j), std::abs(y(i) - y(j)));
    }
    std::nth_element(scratch.begin(), scratch.begin() + (k_ - 1), scratch.end());
    const double eps = scratch[static_cast<std::size_t>(k_ - 1)];
    Index n_xz = 0, n_yz = 0, n_z = 0, n_y = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dy = std::abs(y(i) - y(j));
      const double dz = dist_z(i, j);
      if (dz < eps) {
        ++n_z;
        if (dy < eps) ++n_yz;
      }
      if (dy < eps) ++n_y;
      if (dist_xz(i, j) < eps) ++n_xz;
    }
    if (conditional) {
      acc += psi_[static_cast<std::size_t>(n_z + 1)] - psi_[static_cast<std::size_t>(n_xz + 1)] -
             psi_[static_cast<std::size_t>(n_yz + 1)];
    } else {
      acc -= psi_[static_cast<std::size_t>(n_xz + 1)] + psi_[static_cast<std::size_t>(n_y + 1)];
    }
  }
  const double mean = acc / static_cast<double>(n);
  const double psi_k = psi_[static_cast<std::size_t>(k_)];
  return conditional ? psi_k + mean : psi_k + psi_[static_cast<std::size_t>(n)] + mean;
}

double cmi_estimate(const FeatureSample& sample, const CmiParams& params) {
  validate(params, sample.n());
  const CmiEstimator est(sample.x(), sample.z(), sample.y(), resolve_k_cmi(params, sample.n()),
                         params.noise_scale, params.seed);
  return est.estimate(est.jittered_y());
}

LocalPermutations local_permutation_scheme(const Matrix& z, const Vector& y, Index k_perm,
                                           Index num_permutations, std::uint64_t seed) {
  const Index n = y.size();
  if (z.cols() > 0 && z.rows() != n) throw Error(ErrorCode::kRowMismatch, "z and y differ in rows");
  if (k_perm < 1 || k_perm > n) throw Error(ErrorCode::kKTooLarge, "k_perm must lie in [1, n]");

  // Tie-inclusive neighbourhoods: every row within the k_perm-th smallest
  // distance, self included at distance 0.
  std::vector<std::vector<Index>> hood(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));
  std::vector<double> scratch(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      dist[static_cast<std::size_t>(j)] = z.cols() > 0 ? max_norm(z, i, j) : 0.0;
    }
    scratch = dist;
    std::nth_element(scratch.begin(), scratch.begin() + (k_perm - 1), scratch.end());
    const double radius = scratch[static_cast<std::size_t>(k_perm - 1)];
    auto& h = hood[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) {
      if (dist[static_cast<std::size_t>(j)] <= radius) h.push_back(j);
    }
  }

  LocalPermutations out;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::vector<char> used(static_cast<std::size_t>(n));
  std::vector<Index> candidates;
  for (Index m = 0; m < num_permutations; ++m) {
    std::mt19937_64 rng(derive_seed(seed, 23, static_cast<std::uint64_t>(m)));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::fill(used.begin(), used.end(), 0);
    std::vector<Index> donor(static_cast<std::size_t>(n));
    for (Index i : order) {
      const auto& h = hood[static_cast<std::size_t>(i)];
      candidates.clear();
      for (Index j : h) {
        if (!used[static_cast<std::size_t>(j)]) candidates.push_back(j);
      }
      Index pick;
      if (!candidates.empty()) {
        std::uniform_int_distribution<std::size_t> u(0, candidates.size() - 1);
        pick = candidates[u(rng)];
      } else {
        std::uniform_int_distribution<std::size_t> u(0, h.size() - 1);
        pick = h[u(rng)];
        ++out.fallback_count;
      }
      used[static_cast<std::size_t>(pick)] = 1;
      donor[static_cast<std::size_t>(i)] = pick;
    }
    Vector yp(n);
    for (Index i = 0; i < n; ++i) yp(i) = y(donor[static_cast<std::size_t>(i)]);
    out.permuted_y.push_back(std::move(yp));
    out.donors.push_back(std::move(donor));
  }
  return out;
}

TestOutcome cmiknn_test(const FeatureSample& sample, const CmiParams& params, double alpha) {
  const auto start = std::chrono::steady_clock::now();
  validate(params, sample.n());
  const Index k = resolve_k_cmi(params, sample.n());
  const CmiEstimator est(sample.x(), sample.z(), sample.y(), k, params.noise_scale, params.seed);
  const double observed = est.estimate(est.jittered_y());
  const LocalPermutations perms = local_permutation_scheme(
      est.jittered_z(), est.jittered_y(), params.k_perm, params.num_permutations, params.seed);
  Index exceed = 0;
  for (const auto& yp : perms.permuted_y) {
    if (est.estimate(yp) >= observed) ++exceed;
  }
  // No +1 correction: p = #{T_m >= T} / M.
  const double p = static_cast<double>(exceed) / static_cast<double>(params.num_permutations);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  ParamMap resolved{
      {"k_cmi", static_cast<double>(k)},
      {"k_perm", static_cast<double>(params.k_perm)},
      {"num_permutations", static_cast<double>(params.num_permutations)},
      {"noise_scale", params.noise_scale},
      {"metric", std::string("chebyshev")},
      {"fallback_count", static_cast<double>(perms.fallback_count)},
  };
  return make_outcome(Method::kCmiknn, observed, p, alpha, std::move(resolved), params.seed, ms);
}

}  // namespace dncit
