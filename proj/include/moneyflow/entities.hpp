#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "moneyflow/distmodel.hpp"
#include "moneyflow/error.hpp"
#include "moneyflow/random.hpp"

namespace moneyflow {

using CardId = std::uint64_t;
using StoreId = std::uint64_t;

struct CardProfile {
  CardId card_id = 0;
  double expected_monthly_ops = 0.0;  // E, transactions per 30-day month
  double inhibition_debt = 0.0;       // executed minus expected, carried across days

  friend bool operator==(const CardProfile&, const CardProfile&) = default;
};

struct StoreProfile {
  StoreId store_id = 0;
  double size_weight = 1.0;  // relative; only ratios matter

  friend bool operator==(const StoreProfile&, const StoreProfile&) = default;
};

/// Cards 0..n-1 with E = sampled monthly-ops bin + 1.
inline std::vector<CardProfile> init_cards(std::size_t n_cards, const DistributionTable& num_ops_table,
                                           RandomStream& rng) {
  if (n_cards == 0) throw DomainError("a card population needs at least one card");
  if (num_ops_table.bin_count() != kMonthlyOpsBins) {
    throw DomainError("monthly-ops table needs " + std::to_string(kMonthlyOpsBins) + " bins");
  }
  std::vector<CardProfile> cards(n_cards);
  for (std::size_t i = 0; i < n_cards; ++i) {
    cards[i].card_id = i;
    cards[i].expected_monthly_ops = static_cast<double>(sample_bin(num_ops_table, rng) + 1);
  }
  return cards;
}

/// Stores 0..n-1 weighted by the midpoint of their sampled 20-unit bin.
inline std::vector<StoreProfile> init_stores(std::size_t n_stores, const DistributionTable& store_table,
                                             RandomStream& rng) {
  if (n_stores == 0) throw DomainError("a store population needs at least one store");
  if (store_table.bin_count() != kStoreBins) {
    throw DomainError("store-size table needs " + std::to_string(kStoreBins) + " bins");
  }
  std::vector<StoreProfile> stores(n_stores);
  for (std::size_t i = 0; i < n_stores; ++i) {
    stores[i].store_id = i;
    stores[i].size_weight = store_weight_from_bin(sample_bin(store_table, rng));
  }
  return stores;
}

/**
 * Exchanges expected activities between similar cards.
 *
 * Each card, in id order, starts a swap with probability `p_swap`. Its partner
 * is drawn uniformly among the other cards whose E lies within a factor
 * `similarity_ratio` of its own; without such a card nothing happens. Only E
 * moves, so the multiset of E values never changes.
 *
 * Draws per card: one for the swap decision, plus one (rarely more) for the
 * partner when a swap is attempted.
 */
inline void swap_activities(std::vector<CardProfile>& cards, double p_swap, double similarity_ratio,
                            RandomStream& rng) {
  if (!(p_swap >= 0.0 && p_swap <= 1.0)) throw DomainError("swap probability must lie in [0, 1]");
  if (!(similarity_ratio >= 1.0) || !std::isfinite(similarity_ratio)) {
    throw DomainError("similarity ratio must be finite and >= 1");
  }
  if (p_swap == 0.0 || cards.size() < 2) return;

  // `order` lists card indices by ascending E. Swapping two E values keeps the
  // sorted value sequence intact, so it is enough to swap their positions.
  std::vector<std::size_t> order(cards.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cards[a].expected_monthly_ops < cards[b].expected_monthly_ops;
  });
  std::vector<std::size_t> position(cards.size());
  std::vector<double> sorted_e(cards.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    position[order[r]] = r;
    sorted_e[r] = cards[order[r]].expected_monthly_ops;
  }

  for (std::size_t i = 0; i < cards.size(); ++i) {
    if (!(rng.uniform() < p_swap)) continue;
    const double e = cards[i].expected_monthly_ops;
    const auto lo = std::lower_bound(sorted_e.begin(), sorted_e.end(), e / similarity_ratio) - sorted_e.begin();
    const auto hi = std::upper_bound(sorted_e.begin(), sorted_e.end(), e * similarity_ratio) - sorted_e.begin();
    const auto candidates = static_cast<std::uint64_t>(hi - lo);
    if (candidates < 2) continue;  // only the card itself

    auto pick = static_cast<std::size_t>(lo) + rng.below(candidates - 1);
    if (pick >= position[i]) ++pick;  // skip self
    const std::size_t j = order[pick];

    std::swap(cards[i].expected_monthly_ops, cards[j].expected_monthly_ops);
    std::swap(order[position[i]], order[position[j]]);
    std::swap(position[i], position[j]);
  }
}

// ---------------------------------------------------------------------------
// Population tables: "card_id,expected_monthly_ops" and "store_id,size_weight".

namespace detail {

inline std::vector<std::pair<std::uint64_t, double>> read_id_value_table(std::istream& in, const char* header) {
  std::vector<std::pair<std::uint64_t, double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == header) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(line_no, "expected two comma-separated columns");
    try {
      std::size_t used = 0;
      const std::string id_text = line.substr(0, comma);
      const std::string value_text = line.substr(comma + 1);
      const auto id = std::stoull(id_text, &used);
      if (used != id_text.size()) throw ParseError(line_no, "bad id '" + id_text + "'");
      const double value = std::stod(value_text, &used);
      if (used != value_text.size()) throw ParseError(line_no, "bad value '" + value_text + "'");
      rows.emplace_back(id, value);
    } catch (const std::logic_error&) {
      throw ParseError(line_no, "unreadable row '" + line + "'");
    }
  }
  return rows;
}

inline void write_double(std::ostream& out, double v) {
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s.precision(17);
  s << v;
  out << s.str();
}

}  // namespace detail

inline void write_cards(std::ostream& out, const std::vector<CardProfile>& cards) {
  out << "card_id,expected_monthly_ops\n";
  for (const auto& c : cards) {
    out << c.card_id << ',';
    detail::write_double(out, c.expected_monthly_ops);
    out << '\n';
  }
}

inline void write_stores(std::ostream& out, const std::vector<StoreProfile>& stores) {
  out << "store_id,size_weight\n";
  for (const auto& s : stores) {
    out << s.store_id << ',';
    detail::write_double(out, s.size_weight);
    out << '\n';
  }
}

/// Ids must be unique; rows are returned sorted by id.
inline std::vector<CardProfile> read_cards(std::istream& in) {
  std::vector<CardProfile> cards;
  for (auto [id, e] : detail::read_id_value_table(in, "card_id,expected_monthly_ops")) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw DomainError("card " + std::to_string(id) + " has negative activity");
    cards.push_back({id, e, 0.0});
  }
  if (cards.empty()) throw EmptyDataError("card table is empty");
  std::sort(cards.begin(), cards.end(), [](const auto& a, const auto& b) { return a.card_id < b.card_id; });
  for (std::size_t i = 1; i < cards.size(); ++i) {
    if (cards[i].card_id == cards[i - 1].card_id) throw DomainError("duplicate card id " + std::to_string(cards[i].card_id));
  }
  return cards;
}

inline std::vector<StoreProfile> read_stores(std::istream& in) {
  std::vector<StoreProfile> stores;
  for (auto [id, w] : detail::read_id_value_table(in, "store_id,size_weight")) {
    if (!(w > 0.0) || !std::isfinite(w)) throw DomainError("store " + std::to_string(id) + " needs a positive weight");
    stores.push_back({id, w});
  }
  if (stores.empty()) throw EmptyDataError("store table is empty");
  std::sort(stores.begin(), stores.end(), [](const auto& a, const auto& b) { return a.store_id < b.store_id; });
  for (std::size_t i = 1; i < stores.size(); ++i) {
    if (stores[i].store_id == stores[i - 1].store_id) throw DomainError("duplicate store id " + std::to_string(stores[i].store_id));
  }
  return stores;
}

}  // namespace moneyflow
