#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "moneyflow/distmodel.hpp"
#include "moneyflow/error.hpp"
#include "moneyflow/generator.hpp"
#include "moneyflow/sampling.hpp"

namespace moneyflow {

/// Weighted counts over integer bins. Grows on demand unless sized up front.
class Histogram {
 public:
  Histogram() = default;
  explicit Histogram(std::size_t bins) : counts_(bins, 0.0) {}

  void add(std::size_t bin, double weight = 1.0) {
    if (bin >= counts_.size()) counts_.resize(bin + 1, 0.0);
    counts_[bin] += weight;
    total_ += weight;
  }

  void merge(const Histogram& other) {
    if (other.counts_.size() > counts_.size()) counts_.resize(other.counts_.size(), 0.0);
    for (std::size_t i = 0; i < other.counts_.size(); ++i) counts_[i] += other.counts_[i];
    total_ += other.total_;
  }

  std::size_t size() const noexcept { return counts_.size(); }
  double total() const noexcept { return total_; }
  double operator[](std::size_t i) const noexcept { return i < counts_.size() ? counts_[i] : 0.0; }
  std::span<const double> counts() const noexcept { return counts_; }

  /// Counts divided by the total; all zeros when empty.
  std::vector<double> probabilities() const {
    std::vector<double> p(counts_.size(), 0.0);
    if (total_ > 0.0) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = counts_[i] / total_;
    }
    return p;
  }

  /// Same mass with every bin at or above `bins - 1` folded into the last one.
  Histogram folded(std::size_t bins) const {
    Histogram h(bins);
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      if (counts_[i] != 0.0) h.add(std::min(i, bins - 1), counts_[i]);
    }
    return h;
  }

 private:
  std::vector<double> counts_;
  double total_ = 0.0;
};

struct Distance {
  double tv = 0.0;  // half the L1 distance
  double ks = 0.0;  // largest gap between cumulative sums at bin edges
};

/// Both inputs are normalized first; sizes must match.
inline Distance compare(std::span<const double> empirical, std::span<const double> reference) {
  if (empirical.size() != reference.size()) {
    throw DomainError("cannot compare histograms with " + std::to_string(empirical.size()) + " and " +
                      std::to_string(reference.size()) + " bins");
  }
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < empirical.size(); ++i) {
    sp += empirical[i];
    sq += reference[i];
  }
  if (!(sp > 0.0) || !(sq > 0.0)) throw EmptyDataError("cannot compare an empty histogram");
  Distance d;
  double cp = 0.0, cq = 0.0;
  for (std::size_t i = 0; i < empirical.size(); ++i) {
    const double p = empirical[i] / sp;
    const double q = reference[i] / sq;
    d.tv += std::abs(p - q);
    cp += p;
    cq += q;
    d.ks = std::max(d.ks, std::abs(cp - cq));
  }
  d.tv = std::min(1.0, 0.5 * d.tv);
  d.ks = std::min(1.0, d.ks);
  return d;
}

inline Distance compare(const Histogram& empirical, const DistributionTable& reference) {
  if (empirical.size() != reference.bin_count()) {
    throw DomainError("histogram has " + std::to_string(empirical.size()) + " bins, reference has " +
                      std::to_string(reference.bin_count()));
  }
  return compare(empirical.counts(), reference.weights());
}

// ---------------------------------------------------------------------------
// Binning shared by analysis and fitting.

struct MonthlyBin {
  std::size_t bin = 0;
  bool clamped_low = false;
  bool clamped_high = false;
};

/// Per-card count over `window_days`, rescaled to a 30-day month, rounded and
/// clamped to 1..100; returns the monthly-ops bin (value - 1).
inline MonthlyBin monthly_ops_bin(std::uint64_t count, std::uint32_t window_days) {
  if (window_days == 0) throw DomainError("window must span at least one day");
  const double monthly = static_cast<double>(count) * kDaysPerMonth / static_cast<double>(window_days);
  const double rounded = std::round(monthly);
  if (rounded < 1.0) return {0, true, false};
  if (rounded > static_cast<double>(kMonthlyOpsBins)) return {kMonthlyOpsBins - 1, false, true};
  return {static_cast<std::size_t>(rounded) - 1, false, false};
}

inline std::size_t store_count_bin(std::uint64_t count) noexcept {
  return std::min<std::size_t>(static_cast<std::size_t>(count / 20), kStoreBins - 1);
}

inline constexpr std::size_t kGapBins = 7 * 24 + 1;  // 0..167 h, then one overflow bin

struct DayActivity {
  std::uint64_t new_cards = 0;
  std::uint64_t repeating_cards = 0;

  double new_fraction() const noexcept {
    const auto active = new_cards + repeating_cards;
    return active == 0 ? 0.0 : static_cast<double>(new_cards) / static_cast<double>(active);
  }
  friend bool operator==(const DayActivity&, const DayActivity&) = default;
};

/// The six validated marginals plus the day-by-day new/repeating split.
struct MarginalSet {
  std::uint64_t transactions = 0;
  std::uint32_t window_days = 0;  // last observed day + 1
  std::uint32_t start_day_of_week = 0;

  Histogram ops_per_card;         // index k: cards with k transactions over the window
  Histogram amounts{kAmountBins};  // 25-unit bins
  Histogram amount_volume{kAmountBins};
  Histogram day_of_week{kWeekdayBins};
  Histogram day_of_week_amount{kWeekdayBins};
  Histogram hour_of_day{kHourBins};
  Histogram hour_of_day_amount{kHourBins};
  Histogram inter_tx_gaps;        // index g: same-card gaps of g hours
  Histogram ops_per_store{kStoreBins};  // 20-unit count bins
  Histogram store_counts;         // index k: stores with k transactions
  std::vector<DayActivity> activity;  // per day, only when sequences are tracked

  std::vector<std::uint64_t> card_counts;  // per active card, ascending card id
  std::vector<std::uint64_t> store_counts_by_id;  // per active store, ascending store id

  /// Cards binned as monthly-ops values for comparison with the num_ops table.
  Histogram ops_per_card_monthly(std::uint32_t window) const {
    Histogram h(kMonthlyOpsBins);
    for (auto c : card_counts) h.add(monthly_ops_bin(c, window).bin);
    return h;
  }
};

/**
 * One-pass accumulator for MarginalSet.
 *
 * Per-card gap and new/repeating logic needs each card's records in
 * non-decreasing day order (hours inside a day may come in any order);
 * generator output and canonically sorted streams satisfy this. Memory is
 * proportional to the number of distinct cards and stores, not records.
 */
class MarginalAccumulator {
 public:
  explicit MarginalAccumulator(std::uint32_t start_day_of_week = 0, bool track_sequences = true)
      : track_sequences_(track_sequences) {
    if (start_day_of_week >= 7) throw DomainError("start day of week must lie in [0, 7)");
    set_.start_day_of_week = start_day_of_week;
  }

  void add(const TransactionRecord& r) {
    if (r.hour >= kHourBins) throw DomainError("hour " + std::to_string(r.hour) + " out of range");
    const std::size_t abin = amount_bin(r.amount);
    const std::uint32_t dow = (set_.start_day_of_week + r.day) % 7;

    ++set_.transactions;
    max_day_ = std::max(max_day_, r.day);
    set_.amounts.add(abin);
    set_.amount_volume.add(abin, r.amount);
    set_.day_of_week.add(dow);
    set_.day_of_week_amount.add(dow, r.amount);
    set_.hour_of_day.add(r.hour);
    set_.hour_of_day_amount.add(r.hour, r.amount);
    ++stores_[r.store_id];

    CardState& card = cards_[r.card_id];
    ++card.count;
    if (!track_sequences_) return;

    if (card.pending_day < 0 || r.day != static_cast<std::uint32_t>(card.pending_day)) {
      if (card.pending_day >= 0 && r.day < static_cast<std::uint32_t>(card.pending_day)) {
        throw DomainError("card " + std::to_string(r.card_id) + " records are not in day order; sort the stream first");
      }
      flush(card);
      if (set_.activity.size() <= r.day) set_.activity.resize(std::size_t{r.day} + 1);
      const bool repeating = card.last_active_day >= 0 && card.last_active_day + 1 == static_cast<std::int64_t>(r.day);
      ++(repeating ? set_.activity[r.day].repeating_cards : set_.activity[r.day].new_cards);
      card.last_active_day = r.day;
      card.pending_day = r.day;
    }
    ++card.pending_hours[r.hour];
  }

  /// Combines shards that hold disjoint card sets.
  void merge(MarginalAccumulator&& other) {
    if (other.set_.start_day_of_week != set_.start_day_of_week || other.track_sequences_ != track_sequences_) {
      throw DomainError("cannot merge accumulators with different settings");
    }
    for (auto& [id, state] : other.cards_) {
      if (!cards_.emplace(id, state).second) throw DomainError("merged shards share card " + std::to_string(id));
    }
    for (auto [id, n] : other.stores_) stores_[id] += n;
    auto& a = set_;
    const auto& b = other.set_;
    a.transactions += b.transactions;
    max_day_ = std::max(max_day_, other.max_day_);
    a.amounts.merge(b.amounts);
    a.amount_volume.merge(b.amount_volume);
    a.day_of_week.merge(b.day_of_week);
    a.day_of_week_amount.merge(b.day_of_week_amount);
    a.hour_of_day.merge(b.hour_of_day);
    a.hour_of_day_amount.merge(b.hour_of_day_amount);
    a.inter_tx_gaps.merge(b.inter_tx_gaps);
    if (a.activity.size() < b.activity.size()) a.activity.resize(b.activity.size());
    for (std::size_t d = 0; d < b.activity.size(); ++d) {
      a.activity[d].new_cards += b.activity[d].new_cards;
      a.activity[d].repeating_cards += b.activity[d].repeating_cards;
    }
  }

  std::uint64_t transactions() const noexcept { return set_.transactions; }

  MarginalSet finish() {
    if (set_.transactions == 0) throw EmptyDataError("no transactions to analyze");
    if (track_sequences_) {
      for (auto& [id, card] : cards_) flush(card);
    }
    set_.window_days = max_day_ + 1;
    if (track_sequences_ && set_.activity.size() < set_.window_days) set_.activity.resize(set_.window_days);

    std::vector<std::pair<CardId, std::uint64_t>> cards;
    cards.reserve(cards_.size());
    for (const auto& [id, card] : cards_) cards.emplace_back(id, card.count);
    std::sort(cards.begin(), cards.end());
    for (auto [id, n] : cards) {
      set_.card_counts.push_back(n);
      set_.ops_per_card.add(n);
    }
    std::vector<std::pair<StoreId, std::uint64_t>> stores(stores_.begin(), stores_.end());
    std::sort(stores.begin(), stores.end());
    for (auto [id, n] : stores) {
      set_.store_counts_by_id.push_back(n);
      set_.store_counts.add(n);
      set_.ops_per_store.add(store_count_bin(n));
    }
    return std::move(set_);
  }

 private:
  struct CardState {
    std::uint64_t count = 0;
    std::int64_t last_ts = -1;
    std::int64_t last_active_day = -1;
    std::int64_t pending_day = -1;
    std::array<std::uint16_t, kHourBins> pending_hours{};
  };

  void flush(CardState& card) {
    if (card.pending_day < 0) return;
    for (std::size_t h = 0; h < kHourBins; ++h) {
      const std::int64_t ts = card.pending_day * 24 + static_cast<std::int64_t>(h);
      for (auto n = card.pending_hours[h]; n > 0; --n) {
        if (card.last_ts >= 0) set_.inter_tx_gaps.add(static_cast<std::size_t>(ts - card.last_ts));
        card.last_ts = ts;
      }
      card.pending_hours[h] = 0;
    }
    card.pending_day = -1;
  }

  bool track_sequences_;
  MarginalSet set_;
  std::uint32_t max_day_ = 0;
  std::unordered_map<CardId, CardState> cards_;
  std::unordered_map<StoreId, std::uint64_t> stores_;
};

template <class Range>
MarginalSet compute_marginals(const Range& records, std::uint32_t start_day_of_week = 0) {
  MarginalAccumulator acc(start_day_of_week);
  for (const auto& r : records) acc.add(r);
  return acc.finish();
}

/// Day 0 cards are all new; afterwards a card is repeating iff it was active the day before.
template <class Range>
std::vector<DayActivity> new_vs_repeating(const Range& records) {
  std::unordered_map<CardId, std::int64_t> last_day;
  std::vector<DayActivity> days;
  for (const TransactionRecord& r : records) {
    if (days.size() <= r.day) days.resize(std::size_t{r.day} + 1);
    auto [it, fresh] = last_day.try_emplace(r.card_id, -1);
    const std::int64_t day = r.day;
    if (it->second == day) continue;
    if (it->second > day) throw DomainError("records are not in day order; sort the stream first");
    ++(it->second == day - 1 && !fresh ? days[r.day].repeating_cards : days[r.day].new_cards);
    it->second = day;
  }
  return days;
}

/// Stable sort by (day, card); keeps generation order inside a card-day.
inline void sort_canonical(std::vector<TransactionRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return a.day != b.day ? a.day < b.day : a.card_id < b.card_id;
  });
}

// ---------------------------------------------------------------------------
// References for the emergent marginals.

inline double poisson_pmf(std::uint64_t k, double lambda) {
  if (lambda <= 0.0) return k == 0 ? 1.0 : 0.0;
  return std::exp(static_cast<double>(k) * std::log(lambda) - lambda - log_factorial(k));
}

/// Sum over the window of the day-of-week factors 7 * daily[dow].
inline double window_rate_factor(const DistributionTable& daily, std::uint32_t start_day_of_week,
                                 std::uint32_t days) {
  double factor = 0.0;
  for (std::uint32_t d = 0; d < days; ++d) factor += 7.0 * daily[(start_day_of_week + d) % 7];
  return factor;
}

/// Expected day-of-week profile over a window: daily weight times occurrences.
inline std::vector<double> day_of_week_reference(const DistributionTable& daily, std::uint32_t start_day_of_week,
                                                 std::uint32_t days) {
  std::vector<double> q(kWeekdayBins, 0.0);
  for (std::uint32_t d = 0; d < days; ++d) {
    const auto dow = (start_day_of_week + d) % 7;
    q[dow] += daily[dow];
  }
  return q;
}

namespace detail {

/// Mixture of Poisson counts, conditioned on k >= 1, mapped through `bin_of`.
template <class BinOf>
std::vector<double> poisson_mixture_reference(std::span<const double> mix_weights, std::span<const double> lambdas,
                                              std::size_t bins, BinOf&& bin_of) {
  std::vector<double> q(bins, 0.0);
  double mass = 0.0;
  for (std::size_t j = 0; j < mix_weights.size(); ++j) {
    if (mix_weights[j] == 0.0) continue;
    const double lambda = lambdas[j];
    const auto kmax = static_cast<std::uint64_t>(lambda + 12.0 * std::sqrt(lambda) + 30.0);
    double active = 0.0;
    for (std::uint64_t k = 1; k <= kmax; ++k) {
      const double p = poisson_pmf(k, lambda);
      q[bin_of(k)] += mix_weights[j] * p;
      active += p;
    }
    mass += mix_weights[j] * active;
  }
  if (mass > 0.0) {
    for (double& v : q) v /= mass;
  }
  return q;
}

}  // namespace detail

/// Monthly-ops histogram expected for active cards of a Poisson population.
inline std::vector<double> ops_per_card_reference(const GenerationConfig& config, std::uint32_t window_days) {
  const auto& num_ops = config.distributions.num_ops;
  const double factor = window_rate_factor(config.distributions.daily, config.start_day_of_week, window_days);
  std::vector<double> lambdas(num_ops.bin_count());
  for (std::size_t i = 0; i < lambdas.size(); ++i) lambdas[i] = static_cast<double>(i + 1) / kDaysPerMonth * factor;
  return detail::poisson_mixture_reference(num_ops.weights(), lambdas, kMonthlyOpsBins,
                                           [&](std::uint64_t k) { return monthly_ops_bin(k, window_days).bin; });
}

/// Ops-per-store histogram expected for active stores when `transactions`
/// are spread over `n_stores` stores with table-drawn weights.
inline std::vector<double> ops_per_store_reference(const DistributionTable& store_table, std::size_t n_stores,
                                                   std::uint64_t transactions) {
  double mean_weight = 0.0;
  for (std::size_t b = 0; b < store_table.bin_count(); ++b) mean_weight += store_table[b] * store_weight_from_bin(b);
  std::vector<double> lambdas(store_table.bin_count());
  for (std::size_t b = 0; b < lambdas.size(); ++b) {
    lambdas[b] = static_cast<double>(transactions) * store_weight_from_bin(b) /
                 (static_cast<double>(n_stores) * mean_weight);
  }
  return detail::poisson_mixture_reference(store_table.weights(), lambdas, kStoreBins, store_count_bin);
}

/// Gap histogram of an independent run of the same model (different seed).
inline Histogram resimulated_gap_reference(const GenerationConfig& config) {
  GenerationConfig ref = config;
  ref.seed = mix64(config.seed ^ 0x7265666572656e63ULL);
  MarginalAccumulator acc(ref.start_day_of_week);
  const auto n = TransactionGenerator(ref).run([&](const TransactionRecord& r) { acc.add(r); });
  if (n == 0) return Histogram(kGapBins);
  return acc.finish().inter_tx_gaps.folded(kGapBins);
}

// ---------------------------------------------------------------------------
// Validation.

struct ValidationThresholds {
  double hour = 0.05;
  double day_of_week = 0.05;
  double amount = 0.05;
  double ops_per_card = 0.07;
  double ops_per_store = 0.10;  // finite-size allowance; scale-dependent
  double inter_tx_gaps = 0.10;
};

struct MarginalCheck {
  std::string name;
  std::string reference_kind;
  Distance distance;
  double sample_size = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::vector<double> empirical;  // normalized
  std::vector<double> reference;  // normalized
  std::function<double(std::size_t)> bin_value;
};

struct ValidationReport {
  std::uint64_t transactions = 0;
  std::uint32_t window_days = 0;
  std::vector<MarginalCheck> checks;

  bool passed() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
  }

  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& c : checks) {
      if (!c.pass) out.push_back(c.name);
    }
    return out;
  }

  const MarginalCheck& at(std::string_view name) const {
    for (const auto& c : checks) {
      if (c.name == name) return c;
    }
    throw DomainError("no marginal named " + std::string(name));
  }

  /// "key: value" lines.
  std::string to_text() const {
    std::ostringstream s;
    s.imbue(std::locale::classic());
    s << std::setprecision(6);
    s << "transactions: " << transactions << '\n' << "window_days: " << window_days << '\n';
    for (const auto& c : checks) {
      s << c.name << ".reference: " << c.reference_kind << '\n'
        << c.name << ".samples: " << c.sample_size << '\n'
        << c.name << ".tv: " << c.distance.tv << '\n'
        << c.name << ".ks: " << c.distance.ks << '\n'
        << c.name << ".threshold: " << c.threshold << '\n'
        << c.name << ".pass: " << (c.pass ? "true" : "false") << '\n';
    }
    s << "passed: " << (passed() ? "true" : "false") << '\n';
    const auto failed = failures();
    if (!failed.empty()) {
      s << "failed:";
      for (std::size_t i = 0; i < failed.size(); ++i) s << (i ? "," : " ") << failed[i];
      s << '\n';
    }
    return s.str();
  }
};

/// Two columns, "bin probability", one row per bin.
inline void write_histogram_data(std::ostream& out, std::span<const double> probabilities,
                                 const std::function<double(std::size_t)>& bin_value) {
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s << std::setprecision(10);
  s << "# bin probability\n";
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    s << (bin_value ? bin_value(i) : static_cast<double>(i)) << ' ' << probabilities[i] << '\n';
  }
  out << s.str();
}

namespace detail {

inline std::vector<double> normalized(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  std::vector<double> out(v.begin(), v.end());
  if (sum > 0.0) {
    for (double& x : out) x /= sum;
  }
  return out;
}

inline MarginalCheck make_check(std::string name, std::string kind, const Histogram& empirical,
                                std::span<const double> reference, double threshold,
                                std::function<double(std::size_t)> bin_value) {
  MarginalCheck c;
  c.name = std::move(name);
  c.reference_kind = std::move(kind);
  c.sample_size = empirical.total();
  c.threshold = threshold;
  c.empirical = empirical.probabilities();
  c.reference = normalized(reference);
  double reference_mass = 0.0;
  for (double x : reference) reference_mass += x;
  if (empirical.total() > 0.0 && reference_mass > 0.0) {
    std::vector<double> padded(empirical.counts().begin(), empirical.counts().end());
    padded.resize(reference.size(), 0.0);
    c.distance = compare(padded, reference);
    c.pass = c.distance.tv < threshold;
  } else if (empirical.total() == 0.0 && reference_mass == 0.0) {
    c.distance = {0.0, 0.0};
    c.pass = true;
  } else {
    c.distance = {1.0, 1.0};
  }
  c.bin_value = std::move(bin_value);
  return c;
}

}  // namespace detail

/**
 * Compares a dataset's marginals with what `config` implies.
 *
 * Hour, day-of-week and amount are checked against the input tables. The
 * emergent ones use derived references: ops per card and ops per store against
 * Poisson mixtures over their tables, gaps against an independent re-run of
 * the model. References assume the plain Poisson count law.
 */
inline ValidationReport validate(const MarginalSet& m, const GenerationConfig& config,
                                 const ValidationThresholds& thresholds = {}) {
  if (m.transactions == 0) throw EmptyDataError("no transactions to validate");
  const auto& d = config.distributions;
  const std::uint32_t window = std::max(config.n_days, m.window_days);

  ValidationReport report;
  report.transactions = m.transactions;
  report.window_days = window;

  auto identity = [](std::size_t i) { return static_cast<double>(i); };
  report.checks.push_back(detail::make_check("ops_per_card", "poisson mixture over num_ops",
                                             m.ops_per_card_monthly(window), ops_per_card_reference(config, window),
                                             thresholds.ops_per_card,
                                             [](std::size_t i) { return static_cast<double>(i + 1); }));
  report.checks.push_back(detail::make_check("amount", "input table", m.amounts, d.quantity.weights(),
                                             thresholds.amount, [](std::size_t i) { return amount_from_bin(i); }));
  report.checks.push_back(detail::make_check("day_of_week", "input table",
                                             m.day_of_week, day_of_week_reference(d.daily, config.start_day_of_week, window),
                                             thresholds.day_of_week, identity));
  report.checks.push_back(
      detail::make_check("hour", "input table", m.hour_of_day, d.hourly.weights(), thresholds.hour, identity));
  const Histogram gap_reference = resimulated_gap_reference(config);
  report.checks.push_back(detail::make_check("inter_tx_gaps", "independent re-run",
                                             m.inter_tx_gaps.folded(kGapBins), gap_reference.counts(),
                                             thresholds.inter_tx_gaps, identity));
  report.checks.push_back(detail::make_check(
      "ops_per_store", "poisson mixture over num_ops_stores", m.ops_per_store,
      ops_per_store_reference(d.num_ops_stores, config.n_stores, m.transactions), thresholds.ops_per_store,
      [](std::size_t i) { return store_weight_from_bin(i); }));
  return report;
}

template <class Range>
ValidationReport validate(const Range& records, const GenerationConfig& config,
                          const ValidationThresholds& thresholds = {}) {
  return validate(compute_marginals(records, config.start_day_of_week), config, thresholds);
}

}  // namespace moneyflow
