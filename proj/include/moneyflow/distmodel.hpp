#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "moneyflow/error.hpp"
#include "moneyflow/random.hpp"
#include "moneyflow/sampling.hpp"

namespace moneyflow {

inline constexpr std::size_t kHourBins = 24;
inline constexpr std::size_t kWeekdayBins = 7;
inline constexpr std::size_t kAmountBins = 50;
inline constexpr double kAmountStep = 25.0;
inline constexpr std::size_t kMonthlyOpsBins = 100;
inline constexpr std::size_t kStoreBins = 50;
inline constexpr double kStoreStep = 20.0;
inline constexpr double kDaysPerMonth = 30.0;

/// What the bins of a table index. `generic` tables have any positive size.
enum class BinSemantics { generic, hour_of_day, day_of_week, amount, monthly_ops, store_size };

constexpr std::size_t bin_cardinality(BinSemantics s) noexcept {
  switch (s) {
    case BinSemantics::hour_of_day: return kHourBins;
    case BinSemantics::day_of_week: return kWeekdayBins;
    case BinSemantics::amount: return kAmountBins;
    case BinSemantics::monthly_ops: return kMonthlyOpsBins;
    case BinSemantics::store_size: return kStoreBins;
    case BinSemantics::generic: return 0;
  }
  return 0;
}

constexpr std::string_view to_string(BinSemantics s) noexcept {
  switch (s) {
    case BinSemantics::hour_of_day: return "hour-of-day";
    case BinSemantics::day_of_week: return "day-of-week";
    case BinSemantics::amount: return "amount";
    case BinSemantics::monthly_ops: return "monthly-ops";
    case BinSemantics::store_size: return "store-size";
    case BinSemantics::generic: return "generic";
  }
  return "generic";
}

/**
 * An immutable, normalized probability table over indexed bins.
 *
 * Weights are non-negative and sum to one. The table carries a prebuilt alias
 * sampler, so sampling is O(1) and consumes exactly one draw from the stream.
 * Safe to share across threads.
 */
class DistributionTable {
 public:
  DistributionTable() = default;

  BinSemantics semantics() const noexcept { return semantics_; }
  std::size_t bin_count() const noexcept { return weights_.size(); }
  std::span<const double> weights() const noexcept { return weights_; }
  double operator[](std::size_t i) const { return weights_.at(i); }

  std::size_t sample(RandomStream& rng) const noexcept { return sampler_.sample(rng); }

  /// Same weights, relabelled. Throws DomainError when the cardinality disagrees.
  DistributionTable with_semantics(BinSemantics s) const {
    const std::size_t want = bin_cardinality(s);
    if (want != 0 && want != weights_.size()) {
      throw DomainError(std::string(to_string(s)) + " table needs " + std::to_string(want) +
                        " bins, got " + std::to_string(weights_.size()));
    }
    DistributionTable copy = *this;
    copy.semantics_ = s;
    return copy;
  }

  friend bool operator==(const DistributionTable& a, const DistributionTable& b) noexcept {
    return a.semantics_ == b.semantics_ && a.weights_ == b.weights_;
  }

  friend DistributionTable normalize(std::span<const double> raw_weights, BinSemantics semantics);

 private:
  DistributionTable(BinSemantics semantics, std::vector<double> weights)
      : semantics_(semantics), weights_(std::move(weights)), sampler_(weights_) {}

  BinSemantics semantics_ = BinSemantics::generic;
  std::vector<double> weights_;
  AliasTable sampler_;
};

/// Divides raw weights by their sum, preserving order.
inline DistributionTable normalize(std::span<const double> raw_weights,
                                   BinSemantics semantics = BinSemantics::generic) {
  if (raw_weights.empty()) throw DomainError("cannot normalize an empty weight list");
  const std::size_t want = bin_cardinality(semantics);
  if (want != 0 && want != raw_weights.size()) {
    throw DomainError(std::string(to_string(semantics)) + " table needs " + std::to_string(want) +
                      " bins, got " + std::to_string(raw_weights.size()));
  }
  double sum = 0.0;
  for (double w : raw_weights) {
    if (!std::isfinite(w) || w < 0.0) throw DomainError("weights must be finite and non-negative");
    sum += w;
  }
  if (!(sum > 0.0)) throw DegenerateDistributionError("weights sum to zero");
  std::vector<double> weights(raw_weights.begin(), raw_weights.end());
  // Already-normalized input is kept as is, so save/load cycles are exact.
  if (std::abs(sum - 1.0) > 1e-12) {
    for (double& w : weights) w /= sum;
  }
  return DistributionTable(semantics, std::move(weights));
}

inline DistributionTable normalize(std::initializer_list<double> raw_weights,
                                   BinSemantics semantics = BinSemantics::generic) {
  return normalize(std::span<const double>(raw_weights.begin(), raw_weights.size()), semantics);
}

/// Returns bin i with probability weights[i]. Consumes exactly one draw.
inline std::size_t sample_bin(const DistributionTable& dist, RandomStream& rng) noexcept {
  return dist.sample(rng);
}

// ---------------------------------------------------------------------------
// Cumulative probability distribution, P(v) = Pr(observation > v).

struct CpdCurve {
  std::vector<double> grid;
  std::vector<double> probabilities;
};

inline CpdCurve cpd(std::span<const double> observations, std::span<const double> grid) {
  if (observations.empty()) throw EmptyDataError("cpd of an empty observation list");
  if (!std::is_sorted(grid.begin(), grid.end())) throw DomainError("cpd grid must be sorted ascending");
  std::vector<double> sorted(observations.begin(), observations.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());

  CpdCurve curve;
  curve.grid.assign(grid.begin(), grid.end());
  curve.probabilities.reserve(grid.size());
  for (double v : grid) {
    // Strict inequality: ties with v do not count.
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), v);
    curve.probabilities.push_back(static_cast<double>(above) / n);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Amount bins: 50 bins of 25 monetary units, represented by their midpoints.

inline double amount_from_bin(std::size_t bin_index, double step = kAmountStep) {
  if (bin_index >= kAmountBins) throw DomainError("amount bin " + std::to_string(bin_index) + " out of range");
  return (static_cast<double>(bin_index) + 0.5) * step;
}

/// Bin containing `amount`; amounts past the last bin land in it.
inline std::size_t amount_bin(double amount, double step = kAmountStep) {
  if (!std::isfinite(amount) || amount < 0.0) throw DomainError("amount must be finite and non-negative");
  const double b = std::floor(amount / step);
  return b >= static_cast<double>(kAmountBins - 1) ? kAmountBins - 1 : static_cast<std::size_t>(b);
}

/// Snaps an amount to the midpoint of its bin. Idempotent.
inline double snap_amount(double amount) { return amount_from_bin(amount_bin(amount)); }

/// Uniform position inside a bin, for the optional jittered-amount mode.
inline double amount_within_bin(std::size_t bin_index, double u) {
  if (bin_index >= kAmountBins) throw DomainError("amount bin " + std::to_string(bin_index) + " out of range");
  return (static_cast<double>(bin_index) + u) * kAmountStep;
}

inline double store_weight_from_bin(std::size_t bin_index) {
  if (bin_index >= kStoreBins) throw DomainError("store bin " + std::to_string(bin_index) + " out of range");
  return (static_cast<double>(bin_index) + 0.5) * kStoreStep;
}

// ---------------------------------------------------------------------------
// The five input tables.

struct DistributionSet {
  DistributionTable hourly;          // 24 bins, hour 0 first
  DistributionTable daily;           // 7 bins, Monday first
  DistributionTable quantity;        // 50 amount bins of 25 units
  DistributionTable num_ops;         // bin i = i + 1 transactions per month
  DistributionTable num_ops_stores;  // 50 store-size bins of 20

  friend bool operator==(const DistributionSet&, const DistributionSet&) = default;
};

namespace detail {

inline std::vector<double> default_hourly_weights() {
  // Quiet nights, a sharp lunch peak at 13h and a sharp dinner peak at 21h.
  return {0.8, 0.4, 0.25, 0.15, 0.15, 0.25, 0.6, 1.3, 2.2, 3.0, 3.5, 3.8,
          4.2, 18.0, 6.0, 3.6, 3.4, 3.9, 4.4, 5.0, 6.0, 19.0, 5.0, 1.8};
}

inline std::vector<double> default_daily_weights() {
  // Monday .. Sunday. Saturday stays busy, Sunday drops.
  return {0.145, 0.145, 0.150, 0.155, 0.170, 0.165, 0.070};
}

inline std::vector<double> default_quantity_weights() {
  // Heavy tail (CPD slope about -1.2 past 100 units) with a point mass in the
  // 575-600 bin, the usual daily withdrawal cap.
  std::vector<double> w(kAmountBins);
  for (std::size_t b = 0; b < kAmountBins; ++b) {
    const double mid = amount_from_bin(b);
    w[b] = (1.0 - std::exp(-mid / 15.0)) / (1.0 + std::pow(mid / 40.0, 2.2));
  }
  w[23] += 0.04;
  return w;
}

inline std::vector<double> default_num_ops_weights() {
  // Broken power law: slope -1.7 up to 20 ops/month, -2.6 beyond.
  std::vector<double> w(kMonthlyOpsBins);
  for (std::size_t i = 0; i < kMonthlyOpsBins; ++i) {
    const double k = static_cast<double>(i + 1);
    w[i] = k <= 20.0 ? std::pow(k, -1.7) : std::pow(20.0, -1.7) * std::pow(k / 20.0, -2.6);
  }
  return w;
}

inline std::vector<double> default_store_weights() {
  std::vector<double> w(kStoreBins);
  for (std::size_t b = 0; b < kStoreBins; ++b) w[b] = std::pow(static_cast<double>(b) + 1.0, -1.3);
  return w;
}

}  // namespace detail

/// Synthetic defaults shaped after the published marginals. Real tables can
/// be supplied through a distribution config file.
inline DistributionSet default_distributions() {
  return {
      normalize(detail::default_hourly_weights(), BinSemantics::hour_of_day),
      normalize(detail::default_daily_weights(), BinSemantics::day_of_week),
      normalize(detail::default_quantity_weights(), BinSemantics::amount),
      normalize(detail::default_num_ops_weights(), BinSemantics::monthly_ops),
      normalize(detail::default_store_weights(), BinSemantics::store_size),
  };
}

/// Mean monthly activity implied by a monthly-ops table (bin i means i + 1).
inline double monthly_ops_mean(const DistributionTable& num_ops) {
  double mean = 0.0;
  for (std::size_t i = 0; i < num_ops.bin_count(); ++i) mean += num_ops[i] * static_cast<double>(i + 1);
  return mean;
}

// ---------------------------------------------------------------------------
// Distribution config file: a JSON object with five raw weight arrays.

namespace detail {

struct TableKey {
  const char* name;
  BinSemantics semantics;
  DistributionTable DistributionSet::*member;
};

inline constexpr std::array<TableKey, 5> kTableKeys{{
    {"hourly", BinSemantics::hour_of_day, &DistributionSet::hourly},
    {"daily", BinSemantics::day_of_week, &DistributionSet::daily},
    {"quantity", BinSemantics::amount, &DistributionSet::quantity},
    {"num_ops", BinSemantics::monthly_ops, &DistributionSet::num_ops},
    {"num_ops_stores", BinSemantics::store_size, &DistributionSet::num_ops_stores},
}};

}  // namespace detail

inline nlohmann::json to_json(const DistributionSet& set) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& key : detail::kTableKeys) {
    const auto w = (set.*key.member).weights();
    j[key.name] = std::vector<double>(w.begin(), w.end());
  }
  return j;
}

inline DistributionSet distributions_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("distribution config must be a JSON object");
  DistributionSet set;
  for (const auto& key : detail::kTableKeys) {
    if (!j.contains(key.name)) throw ConfigError(std::string("distribution config lacks '") + key.name + "'");
    const auto& arr = j.at(key.name);
    if (!arr.is_array()) throw ConfigError(std::string("'") + key.name + "' must be an array");
    std::vector<double> raw;
    raw.reserve(arr.size());
    for (const auto& v : arr) {
      if (!v.is_number()) throw ConfigError(std::string("'") + key.name + "' holds a non-numeric entry");
      raw.push_back(v.get<double>());
    }
    try {
      set.*key.member = normalize(raw, key.semantics);
    } catch (const Error& e) {
      throw ConfigError(std::string("'") + key.name + "': " + e.what());
    }
  }
  return set;
}

inline std::string serialize_distributions(const DistributionSet& set) { return to_json(set).dump(2) + "\n"; }

inline DistributionSet load_distributions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open distribution config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed distribution config " + path + ": " + e.what());
  }
  return distributions_from_json(j);
}

inline void save_distributions(const DistributionSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write distribution config " + path);
  out << serialize_distributions(set);
  if (!out) throw ConfigError("failed writing distribution config " + path);
}

}  // namespace moneyflow
