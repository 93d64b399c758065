#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moneyflow/distmodel.hpp"
#include "moneyflow/error.hpp"
#include "moneyflow/generator.hpp"
#include "moneyflow/stats.hpp"

namespace moneyflow {

/// Column index of each record field.
struct ColumnMap {
  std::size_t day = 0;
  std::size_t card = 1;
  std::size_t hour = 2;
  std::size_t amount = 3;
  std::size_t store = 4;

  std::array<std::size_t, 5> indices() const noexcept { return {day, card, hour, amount, store}; }

  std::size_t max_index() const noexcept {
    const auto i = indices();
    return *std::max_element(i.begin(), i.end());
  }

  void validate() const {
    auto i = indices();
    std::sort(i.begin(), i.end());
    if (std::adjacent_find(i.begin(), i.end()) != i.end()) throw ConfigError("column indices must be distinct");
  }

  /// Locates the columns named day, card, hour, amount and store.
  static ColumnMap from_header(std::string_view header, char delimiter);
};

struct ParseOptions {
  char delimiter = ',';
  bool has_header = true;
  std::optional<ColumnMap> column_map;  // from the header when absent, else 0..4
  std::size_t error_budget = 0;         // bad lines tolerated before giving up
};

struct ParseIssue {
  std::size_t line = 0;
  std::string message;
};

namespace detail {

inline std::string_view trim(std::string_view s) noexcept {
  constexpr std::string_view ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delimiter, start);
    fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

template <class T>
bool parse_number(std::string_view text, T& value) noexcept {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

}  // namespace detail

inline ColumnMap ColumnMap::from_header(std::string_view header, char delimiter) {
  const auto fields = detail::split(detail::trim(header), delimiter);
  auto find = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i] == name) return i;
    }
    throw ConfigError("header lacks a '" + std::string(name) + "' column");
  };
  ColumnMap map{find("day"), find("card"), find("hour"), find("amount"), find("store")};
  map.validate();
  return map;
}

/**
 * Streaming reader for delimiter-separated transaction logs.
 *
 * Lines that break a record invariant are recorded as issues and skipped
 * until more than `error_budget` have accumulated, at which point the next
 * one is thrown as a ParseError. Amounts are snapped to the midpoint of their
 * 25-unit bin; anything past the last bin is clamped into it and counted.
 * Lines may also be written in the "(day, card, hour, amount, store)" form.
 */
class TransactionReader {
 public:
  TransactionReader(std::istream& in, ParseOptions options) : in_(in), options_(std::move(options)) {
    if (options_.column_map) {
      options_.column_map->validate();
      columns_ = *options_.column_map;
    }
    header_pending_ = options_.has_header;
  }

  /// Reads the next valid record; false at end of input.
  bool next(TransactionRecord& record) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      const std::string_view text = detail::trim(line);
      if (text.empty()) continue;
      if (header_pending_) {
        header_pending_ = false;
        if (!options_.column_map) columns_ = ColumnMap::from_header(text, options_.delimiter);
        continue;
      }
      std::string message;
      if (parse_line(text, record, message)) {
        ++records_;
        return true;
      }
      issues_.push_back({line_no_, message});
      if (issues_.size() > options_.error_budget) {
        throw ParseError(line_no_, message + " (error budget of " + std::to_string(options_.error_budget) +
                                       " exceeded)");
      }
    }
    return false;
  }

  const std::vector<ParseIssue>& issues() const noexcept { return issues_; }
  std::uint64_t records() const noexcept { return records_; }
  std::uint64_t amounts_clamped() const noexcept { return amounts_clamped_; }
  /// The amount of the last record as written in the input, before snapping.
  double last_raw_amount() const noexcept { return last_raw_amount_; }

 private:
  bool parse_line(std::string_view text, TransactionRecord& r, std::string& message) {
    if (text.size() >= 2 && text.front() == '(' && text.back() == ')') text = text.substr(1, text.size() - 2);
    const auto fields = detail::split(text, options_.delimiter);
    if (fields.size() <= columns_.max_index()) {
      message = "expected at least " + std::to_string(columns_.max_index() + 1) + " fields, got " +
                std::to_string(fields.size());
      return false;
    }
    std::uint64_t day = 0, hour = 0;
    double amount = 0.0;
    if (!detail::parse_number(fields[columns_.day], day) || day > std::numeric_limits<std::uint32_t>::max()) {
      message = "bad day '" + std::string(fields[columns_.day]) + "'";
      return false;
    }
    if (!detail::parse_number(fields[columns_.card], r.card_id)) {
      message = "bad card id '" + std::string(fields[columns_.card]) + "'";
      return false;
    }
    if (!detail::parse_number(fields[columns_.hour], hour) || hour >= kHourBins) {
      message = "hour '" + std::string(fields[columns_.hour]) + "' outside 0..23";
      return false;
    }
    if (!detail::parse_number(fields[columns_.amount], amount) || !std::isfinite(amount) || amount < 0.0) {
      message = "bad amount '" + std::string(fields[columns_.amount]) + "'";
      return false;
    }
    if (!detail::parse_number(fields[columns_.store], r.store_id)) {
      message = "bad store id '" + std::string(fields[columns_.store]) + "'";
      return false;
    }
    r.day = static_cast<std::uint32_t>(day);
    r.hour = static_cast<std::uint32_t>(hour);
    last_raw_amount_ = amount;
    if (amount >= static_cast<double>(kAmountBins) * kAmountStep) ++amounts_clamped_;
    r.amount = snap_amount(amount);
    return true;
  }

  std::istream& in_;
  ParseOptions options_;
  ColumnMap columns_;
  bool header_pending_ = false;
  std::size_t line_no_ = 0;
  std::uint64_t records_ = 0;
  std::uint64_t amounts_clamped_ = 0;
  double last_raw_amount_ = 0.0;
  std::vector<ParseIssue> issues_;
};

struct ParseResult {
  std::vector<TransactionRecord> records;
  std::vector<ParseIssue> issues;
  std::uint64_t amounts_clamped = 0;
};

inline ParseResult parse_transactions(std::istream& in, const ParseOptions& options = {}) {
  TransactionReader reader(in, options);
  ParseResult result;
  TransactionRecord r;
  while (reader.next(r)) result.records.push_back(r);
  result.issues = reader.issues();
  result.amounts_clamped = reader.amounts_clamped();
  return result;
}

// ---------------------------------------------------------------------------
// Fitting the five tables from a log.

struct FitSummary {
  std::uint64_t records = 0;
  std::uint64_t cards = 0;
  std::uint64_t stores = 0;
  std::uint32_t window_days = 0;
  std::uint64_t cards_clamped_low = 0;   // below 0.5 ops/month, counted as 1
  std::uint64_t cards_clamped_high = 0;  // above 100 ops/month, counted as 100
  std::uint64_t stores_clamped = 0;      // 1000 or more transactions
};

struct FitResult {
  DistributionSet distributions;
  FitSummary summary;
};

/**
 * Fits tables from already-computed marginals.
 *
 * Hour and amount tables are the empirical marginals. The daily table divides
 * each weekday's count by how often that weekday occurs in the window. Card
 * counts are rescaled to 30-day months and clamped to 1..100; store counts go
 * in bins of 20 clamped to 50 bins.
 */
inline FitResult fit_distributions(const MarginalSet& m, std::uint32_t window_days) {
  if (m.transactions == 0) throw EmptyDataError("cannot fit distributions from an empty log");
  if (window_days == 0) throw DomainError("fit window must span at least one day");

  FitResult fit;
  auto& s = fit.summary;
  s.records = m.transactions;
  s.cards = m.card_counts.size();
  s.stores = m.store_counts_by_id.size();
  s.window_days = window_days;

  std::vector<double> daily(kWeekdayBins, 0.0);
  const auto occurrences = day_of_week_reference(normalize({1, 1, 1, 1, 1, 1, 1}), m.start_day_of_week, window_days);
  for (std::size_t d = 0; d < kWeekdayBins; ++d) {
    if (occurrences[d] > 0.0) daily[d] = m.day_of_week[d] / occurrences[d];
  }

  std::vector<double> num_ops(kMonthlyOpsBins, 0.0);
  for (auto count : m.card_counts) {
    const auto b = monthly_ops_bin(count, window_days);
    num_ops[b.bin] += 1.0;
    s.cards_clamped_low += b.clamped_low;
    s.cards_clamped_high += b.clamped_high;
  }
  std::vector<double> stores(kStoreBins, 0.0);
  for (auto count : m.store_counts_by_id) {
    stores[store_count_bin(count)] += 1.0;
    if (count >= kStoreBins * 20) ++s.stores_clamped;
  }

  auto& d = fit.distributions;
  d.hourly = normalize(m.hour_of_day.counts(), BinSemantics::hour_of_day);
  d.daily = normalize(daily, BinSemantics::day_of_week);
  d.quantity = normalize(m.amounts.counts(), BinSemantics::amount);
  d.num_ops = normalize(num_ops, BinSemantics::monthly_ops);
  d.num_ops_stores = normalize(stores, BinSemantics::store_size);
  return fit;
}

/// `window_days` = 0 uses the observed window (last day + 1).
template <class Range>
FitResult fit_distributions(const Range& records, std::uint32_t window_days = 0, std::uint32_t start_day_of_week = 0) {
  MarginalAccumulator acc(start_day_of_week, /*track_sequences=*/false);
  for (const TransactionRecord& r : records) acc.add(r);
  const MarginalSet m = acc.finish();
  return fit_distributions(m, window_days == 0 ? m.window_days : window_days);
}

}  // namespace moneyflow
