#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "moneyflow/distmodel.hpp"
#include "moneyflow/entities.hpp"
#include "moneyflow/error.hpp"
#include "moneyflow/random.hpp"
#include "moneyflow/sampling.hpp"

namespace moneyflow {

/// One transaction, fields in (day, card, hour, amount, store) order.
struct TransactionRecord {
  std::uint32_t day = 0;  // 0-based simulation day
  CardId card_id = 0;
  std::uint32_t hour = 0;  // [0, 24)
  double amount = 0.0;     // bin midpoint unless jitter is enabled
  StoreId store_id = 0;

  std::int64_t timestamp_hours() const noexcept { return std::int64_t{day} * 24 + hour; }

  friend bool operator==(const TransactionRecord&, const TransactionRecord&) = default;
};

/**
 * Burst dynamics on top of the Poisson day count.
 *
 * The day's rate is scaled by a unit-mean log-normal multiplier of log-scale
 * `overdispersion`, minus the inhibition carried in the card's debt. The debt
 * is a running ledger of executed minus expected transactions; a fraction
 * `1 - debt_decay` of it inhibits (or, when negative, boosts) each day.
 */
struct BurstConfig {
  bool enabled = false;
  double overdispersion = 1.0;
  double debt_decay = 0.1;

  bool active() const noexcept { return enabled && overdispersion > 0.0; }

  void validate() const {
    if (!(overdispersion >= 0.0) || !std::isfinite(overdispersion)) throw DomainError("burst overdispersion must be >= 0");
    if (!(debt_decay >= 0.0 && debt_decay <= 1.0)) throw DomainError("burst debt decay must lie in [0, 1]");
  }
};

struct SwapConfig {
  double probability = 0.0;  // per card per day; 0 disables swapping
  double similarity_ratio = 2.0;

  bool active() const noexcept { return probability > 0.0; }

  void validate() const {
    if (!(probability >= 0.0 && probability <= 1.0)) throw DomainError("swap probability must lie in [0, 1]");
    if (!(similarity_ratio >= 1.0) || !std::isfinite(similarity_ratio)) throw DomainError("swap similarity ratio must be >= 1");
  }
};

struct GenerationConfig {
  std::size_t n_cards = 2000;
  std::size_t n_stores = 1000;
  std::uint32_t n_days = 100;
  std::uint64_t seed = 1;
  DistributionSet distributions = default_distributions();
  BurstConfig burst;
  SwapConfig swap;
  std::uint32_t start_day_of_week = 0;  // 0 = Monday
  bool amount_jitter = false;
  unsigned threads = 1;  // never affects output

  void validate() const {
    if (n_cards == 0) throw DomainError("n_cards must be positive");
    if (n_stores == 0) throw DomainError("n_stores must be positive");
    if (start_day_of_week >= 7) throw DomainError("start day of week must lie in [0, 7)");
    burst.validate();
    swap.validate();
  }

  std::uint32_t day_of_week(std::uint32_t day) const noexcept { return (start_day_of_week + day) % 7; }
};

/// Parameters and tables, excluding the thread count.
inline nlohmann::json to_json(const GenerationConfig& c) {
  return {
      {"n_cards", c.n_cards},
      {"n_stores", c.n_stores},
      {"n_days", c.n_days},
      {"seed", c.seed},
      {"start_day_of_week", c.start_day_of_week},
      {"amount_jitter", c.amount_jitter},
      {"burst", {{"enabled", c.burst.enabled}, {"overdispersion", c.burst.overdispersion}, {"debt_decay", c.burst.debt_decay}}},
      {"swap", {{"probability", c.swap.probability}, {"similarity_ratio", c.swap.similarity_ratio}}},
      {"distributions", to_json(c.distributions)},
  };
}

inline GenerationConfig generation_config_from_json(const nlohmann::json& j) {
  try {
    GenerationConfig c;
    c.n_cards = j.at("n_cards").get<std::size_t>();
    c.n_stores = j.at("n_stores").get<std::size_t>();
    c.n_days = j.at("n_days").get<std::uint32_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.start_day_of_week = j.at("start_day_of_week").get<std::uint32_t>();
    c.amount_jitter = j.at("amount_jitter").get<bool>();
    const auto& b = j.at("burst");
    c.burst = {b.at("enabled").get<bool>(), b.at("overdispersion").get<double>(), b.at("debt_decay").get<double>()};
    const auto& s = j.at("swap");
    c.swap = {s.at("probability").get<double>(), s.at("similarity_ratio").get<double>()};
    c.distributions = distributions_from_json(j.at("distributions"));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed generation config: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid generation config: ") + e.what());
  }
}

/// Expected transactions on one day: (E / 30) * 7 * daily[day_of_week].
inline double daily_expected_count(const CardProfile& card, std::uint32_t day_of_week,
                                   const DistributionTable& daily_table) {
  if (day_of_week >= daily_table.bin_count()) throw DomainError("day of week out of range");
  return card.expected_monthly_ops * static_cast<double>(daily_table.bin_count()) * daily_table[day_of_week] /
         kDaysPerMonth;
}

/**
 * Draws one day's transaction count and updates the card's inhibition debt.
 *
 * Without bursts the count is Poisson(rate) and the debt is untouched. With
 * bursts the effective rate is max(0, rate * m - (1 - decay) * debt), m a
 * unit-mean log-normal, and the debt then absorbs count - rate. The ledger is
 * never decayed itself, which keeps the long-run mean equal to the rate. A
 * zero-rate day produces nothing and only decays the debt.
 */
inline std::uint64_t sample_daily_count(double rate, const BurstConfig& burst, CardProfile& card,
                                        RandomStream& rng) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) throw DomainError("daily rate must be finite and >= 0");
  if (!burst.active()) return poisson(rate, rng);
  if (rate == 0.0) {
    card.inhibition_debt *= 1.0 - burst.debt_decay;
    return 0;
  }
  const double multiplier = unit_mean_lognormal(burst.overdispersion, rng);
  const double effective = std::max(0.0, rate * multiplier - (1.0 - burst.debt_decay) * card.inhibition_debt);
  const std::uint64_t count = poisson(effective, rng);
  card.inhibition_debt += static_cast<double>(count) - rate;
  return count;
}

namespace streams {
inline constexpr std::uint64_t kCardInit = 0x63617264696e6974ULL;
inline constexpr std::uint64_t kStoreInit = 0x73746f7265696e69ULL;
inline constexpr std::uint64_t kSwap = 0x73776170646179ULL;
inline constexpr std::uint64_t kCardDay = 0x6361726464617973ULL;
}  // namespace streams

/**
 * The day-by-day simulation engine.
 *
 * For each day every card, in population order, draws its count and each of
 * its transactions gets an hour, a store and an amount sampled independently
 * of the card. Every (card, day) pair owns a random substream, so the output
 * is a pure function of the config and populations whatever the thread count.
 * Swaps, when enabled, run serially at each day boundary.
 */
class TransactionGenerator {
 public:
  explicit TransactionGenerator(GenerationConfig config) : config_(std::move(config)) {
    config_.validate();
    RandomStream card_rng(config_.seed, streams::kCardInit);
    cards_ = init_cards(config_.n_cards, config_.distributions.num_ops, card_rng);
    RandomStream store_rng(config_.seed, streams::kStoreInit);
    stores_ = init_stores(config_.n_stores, config_.distributions.num_ops_stores, store_rng);
    build_store_sampler();
  }

  TransactionGenerator(GenerationConfig config, std::vector<CardProfile> cards, std::vector<StoreProfile> stores)
      : config_(std::move(config)), cards_(std::move(cards)), stores_(std::move(stores)) {
    if (cards_.empty()) throw DomainError("card population is empty");
    if (stores_.empty()) throw DomainError("store population is empty");
    config_.n_cards = cards_.size();
    config_.n_stores = stores_.size();
    config_.validate();
    build_store_sampler();
  }

  const GenerationConfig& config() const noexcept { return config_; }
  const std::vector<CardProfile>& cards() const noexcept { return cards_; }
  const std::vector<StoreProfile>& stores() const noexcept { return stores_; }

  /// Streams every record to `sink` in (day, card, generation) order.
  /// Returns the number of records produced.
  template <class Sink>
  std::uint64_t run(Sink&& sink) const {
    std::vector<CardProfile> cards = cards_;
    const unsigned threads = std::max(1U, std::min<unsigned>(config_.threads, static_cast<unsigned>(cards.size())));
    std::vector<std::vector<TransactionRecord>> shards(threads > 1 ? threads : 0);
    std::uint64_t produced = 0;

    for (std::uint32_t day = 0; day < config_.n_days; ++day) {
      if (day > 0 && config_.swap.active()) {
        RandomStream swap_rng(config_.seed, derive_stream_id(streams::kSwap, day));
        swap_activities(cards, config_.swap.probability, config_.swap.similarity_ratio, swap_rng);
      }
      if (threads == 1) {
        for (auto& card : cards) {
          card_day(card, day, [&](const TransactionRecord& r) {
            sink(r);
            ++produced;
          });
        }
        continue;
      }
      const std::size_t chunk = (cards.size() + threads - 1) / threads;
      {
        std::vector<std::jthread> workers;
        workers.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) {
          workers.emplace_back([&, t] {
            auto& out = shards[t];
            out.clear();
            const std::size_t begin = std::min(cards.size(), t * chunk);
            const std::size_t end = std::min(cards.size(), begin + chunk);
            for (std::size_t i = begin; i < end; ++i) {
              card_day(cards[i], day, [&](const TransactionRecord& r) { out.push_back(r); });
            }
          });
        }
      }
      for (const auto& shard : shards) {
        for (const auto& r : shard) sink(r);
        produced += shard.size();
      }
    }
    return produced;
  }

 private:
  void build_store_sampler() {
    std::vector<double> weights;
    weights.reserve(stores_.size());
    for (const auto& s : stores_) {
      if (!(s.size_weight > 0.0)) throw DomainError("store weights must be positive");
      weights.push_back(s.size_weight);
    }
    store_sampler_ = AliasTable(weights);
  }

  template <class Emit>
  void card_day(CardProfile& card, std::uint32_t day, Emit&& emit) const {
    const auto& d = config_.distributions;
    RandomStream rng(config_.seed, derive_stream_id(streams::kCardDay, card.card_id, day));
    const double rate = daily_expected_count(card, config_.day_of_week(day), d.daily);
    const std::uint64_t count = sample_daily_count(rate, config_.burst, card, rng);
    for (std::uint64_t k = 0; k < count; ++k) {
      TransactionRecord r;
      r.day = day;
      r.card_id = card.card_id;
      r.hour = static_cast<std::uint32_t>(sample_bin(d.hourly, rng));
      r.store_id = stores_[store_sampler_.sample(rng)].store_id;
      const std::size_t bin = sample_bin(d.quantity, rng);
      r.amount = config_.amount_jitter ? amount_within_bin(bin, rng.uniform()) : amount_from_bin(bin);
      emit(r);
    }
  }

  GenerationConfig config_;
  std::vector<CardProfile> cards_;
  std::vector<StoreProfile> stores_;
  AliasTable store_sampler_;
};

inline std::vector<TransactionRecord> generate(const GenerationConfig& config) {
  std::vector<TransactionRecord> out;
  TransactionGenerator(config).run([&](const TransactionRecord& r) { out.push_back(r); });
  return out;
}

// ---------------------------------------------------------------------------
// Output: delimiter-separated text, header "day,card,hour,amount,store".

inline std::string format_amount(double amount) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, amount, std::chars_format::fixed, 1);
  return std::string(buf, res.ptr);
}

/// The "(0, 1, 17, 87.5, 78)" tuple form.
inline std::string format_tuple(const TransactionRecord& r) {
  return "(" + std::to_string(r.day) + ", " + std::to_string(r.card_id) + ", " + std::to_string(r.hour) + ", " +
         format_amount(r.amount) + ", " + std::to_string(r.store_id) + ")";
}

/// Buffered streaming writer; memory use does not grow with the record count.
class RecordWriter {
 public:
  explicit RecordWriter(std::ostream& out, char delimiter = ',') : out_(out), delim_(delimiter) {
    buffer_.reserve(kFlushAt + 128);
    buffer_ += "day";
    buffer_ += delim_;
    buffer_ += "card";
    buffer_ += delim_;
    buffer_ += "hour";
    buffer_ += delim_;
    buffer_ += "amount";
    buffer_ += delim_;
    buffer_ += "store\n";
  }

  RecordWriter(const RecordWriter&) = delete;
  RecordWriter& operator=(const RecordWriter&) = delete;
  ~RecordWriter() {
    try {
      flush();
    } catch (...) {
    }
  }

  void write(const TransactionRecord& r) {
    append(r.day);
    buffer_ += delim_;
    append(r.card_id);
    buffer_ += delim_;
    append(r.hour);
    buffer_ += delim_;
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, r.amount, std::chars_format::fixed, 1);
    buffer_.append(buf, res.ptr);
    buffer_ += delim_;
    append(r.store_id);
    buffer_ += '\n';
    ++written_;
    if (buffer_.size() >= kFlushAt) flush();
  }

  void operator()(const TransactionRecord& r) { write(r); }

  void flush() {
    if (!buffer_.empty()) {
      out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
      buffer_.clear();
    }
    out_.flush();
    if (!out_) throw Error("write to transaction output failed");
  }

  std::uint64_t written() const noexcept { return written_; }

 private:
  static constexpr std::size_t kFlushAt = 1 << 16;

  template <class Int>
  void append(Int v) {
    char buf[24];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    buffer_.append(buf, res.ptr);
  }

  std::ostream& out_;
  char delim_;
  std::string buffer_;
  std::uint64_t written_ = 0;
};

}  // namespace moneyflow
