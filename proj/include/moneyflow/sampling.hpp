#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "moneyflow/error.hpp"
#include "moneyflow/random.hpp"

namespace moneyflow {

/**
 * Walker/Vose alias table over a finite set of non-negative weights.
 *
 * Weights need not be normalized. Every call to sample() consumes exactly one
 * 64-bit draw: the top 53 bits pick a column and the fractional remainder is
 * the coin that decides between the column and its alias. Zero-weight
 * entries are never returned.
 */
class AliasTable {
 public:
  AliasTable() = default;

  explicit AliasTable(std::span<const double> weights) {
    const std::size_t n = weights.size();
    if (n == 0) throw DomainError("alias table needs at least one weight");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("alias table weights must be finite and >= 0");
      sum += w;
    }
    if (!(sum > 0.0)) throw DegenerateDistributionError("alias table weights sum to zero");

    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    small.reserve(n);
    large.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / sum;
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    const auto heaviest = static_cast<std::uint32_t>(
        std::max_element(weights.begin(), weights.end()) - weights.begin());

    while (!small.empty() && !large.empty()) {
      const std::uint32_t s = small.back();
      small.pop_back();
      const std::uint32_t l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] -= 1.0 - scaled[s];
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    // Leftovers are within rounding of 1. A zero weight must stay unreachable.
    for (auto i : large) {
      prob_[i] = 1.0;
      alias_[i] = i;
    }
    for (auto i : small) {
      if (weights[i] > 0.0) {
        prob_[i] = 1.0;
        alias_[i] = i;
      } else {
        prob_[i] = 0.0;
        alias_[i] = heaviest;
      }
    }
  }

  std::size_t size() const noexcept { return prob_.size(); }

  std::size_t sample(RandomStream& rng) const noexcept {
    const double x = rng.uniform() * static_cast<double>(prob_.size());
    auto column = static_cast<std::size_t>(x);
    if (column >= prob_.size()) column = prob_.size() - 1;
    const double coin = x - static_cast<double>(column);
    return coin < prob_[column] ? column : alias_[column];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

/// log(k!) exact by table below 256, Stirling series above.
inline double log_factorial(std::uint64_t k) noexcept {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    t[0] = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) t[i] = t[i - 1] + std::log(static_cast<double>(i));
    return t;
  }();
  if (k < table.size()) return table[k];
  const double n = static_cast<double>(k) + 1.0;
  const double inv = 1.0 / n;
  const double inv2 = inv * inv;
  return (n - 0.5) * std::log(n) - n + 0.5 * std::log(2.0 * std::numbers::pi) +
         inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0));
}

/// Box-Muller; always consumes two draws.
inline double standard_normal(RandomStream& rng) noexcept {
  const double u1 = 1.0 - rng.uniform();  // (0, 1]
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// exp(sigma * Z - sigma^2 / 2): log-normal with mean 1 and log-scale sigma.
inline double unit_mean_lognormal(double sigma, RandomStream& rng) noexcept {
  return std::exp(sigma * standard_normal(rng) - 0.5 * sigma * sigma);
}

/**
 * Poisson variate with mean `lambda`.
 *
 * Sequential-search inversion (one draw) below lambda = 12; Hoermann's
 * transformed rejection with squeeze (PTRS) above.
 */
inline std::uint64_t poisson(double lambda, RandomStream& rng) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("poisson mean must be finite and >= 0");
  if (lambda == 0.0) return 0;
  if (lambda < 12.0) {
    const double u = rng.uniform();
    double p = std::exp(-lambda);
    double cdf = p;
    std::uint64_t k = 0;
    while (u >= cdf && k < 400) {
      ++k;
      p *= lambda / static_cast<double>(k);
      cdf += p;
      if (p == 0.0) break;
    }
    return k;
  }

  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -lambda + k * loglam - log_factorial(static_cast<std::uint64_t>(k))) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

}  // namespace moneyflow
