#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "moneyflow/generator.hpp"
#include "moneyflow/stats.hpp"

namespace moneyflow {
namespace {

DistributionTable degenerate(std::size_t bins, std::size_t at, BinSemantics s) {
  std::vector<double> w(bins, 0.0);
  w[at] = 1.0;
  return normalize(w, s);
}

TEST(DailyExpectedCount, FifteenPerMonthIsHalfPerDay) {
  const auto uniform = normalize({1, 1, 1, 1, 1, 1, 1}, BinSemantics::day_of_week);
  const CardProfile card{0, 15.0, 0.0};
  for (std::uint32_t dow = 0; dow < 7; ++dow) EXPECT_EQ(daily_expected_count(card, dow, uniform), 0.5);
}

TEST(DailyExpectedCount, ZeroActivity) {
  const CardProfile idle{0, 0.0, 0.0};
  EXPECT_EQ(daily_expected_count(idle, 3, default_distributions().daily), 0.0);
}

TEST(DailyExpectedCount, WeekdayModulation) {
  const auto table = normalize({0.2, 0.1, 0.1, 0.1, 0.1, 0.2, 0.2}, BinSemantics::day_of_week);
  const CardProfile card{0, 30.0, 0.0};
  EXPECT_NEAR(daily_expected_count(card, 0, table), 1.4, 1e-12);
  EXPECT_NEAR(daily_expected_count(card, 1, table), 0.7, 1e-12);
  double week = 0.0;
  for (std::uint32_t d = 0; d < 7; ++d) week += daily_expected_count(card, d, table);
  EXPECT_NEAR(week, 7.0, 1e-12);  // a week holds 7/30 of the monthly E
  EXPECT_THROW(daily_expected_count(card, 7, table), DomainError);
}

TEST(SampleDailyCount, ZeroRate) {
  BurstConfig burst{true, 1.0, 0.1};
  CardProfile card{0, 0.0, 2.0};
  RandomStream rng(1, 1);
  EXPECT_EQ(sample_daily_count(0.0, burst, card, rng), 0U);
  EXPECT_DOUBLE_EQ(card.inhibition_debt, 1.8);
  CardProfile plain{0, 0.0, 0.0};
  EXPECT_EQ(sample_daily_count(0.0, BurstConfig{}, plain, rng), 0U);
}

TEST(SampleDailyCount, NegativeRateRejected) {
  CardProfile card;
  RandomStream rng(1, 1);
  EXPECT_THROW(sample_daily_count(-0.1, BurstConfig{}, card, rng), DomainError);
}

struct Moments {
  double mean;
  double variance;
};

Moments simulate_days(double rate, const BurstConfig& burst, int days, std::uint64_t seed) {
  CardProfile card{0, rate * 30.0, 0.0};
  RandomStream rng(seed, 0);
  double sum = 0.0, sq = 0.0;
  for (int d = 0; d < days; ++d) {
    const auto c = static_cast<double>(sample_daily_count(rate, burst, card, rng));
    sum += c;
    sq += c * c;
  }
  const double mean = sum / days;
  return {mean, sq / days - mean * mean};
}

TEST(SampleDailyCount, PoissonWithoutBursts) {
  const auto m = simulate_days(0.5, BurstConfig{}, 100000, 17);
  EXPECT_NEAR(m.mean, 0.5, 3 * std::sqrt(0.5 / 100000));
  EXPECT_NEAR(m.variance / m.mean, 1.0, 0.03);
}

TEST(SampleDailyCount, BurstsConserveMeanAndOverdisperse) {
  const BurstConfig burst{true, 1.0, 0.1};
  const auto m = simulate_days(0.5, burst, 100000, 18);
  EXPECT_LT(std::abs(m.mean - 0.5) / 0.5, 0.02);
  EXPECT_GT(m.variance, m.mean);
}

TEST(SampleDailyCount, ConservationAcrossRates) {
  const BurstConfig burst{true, 1.0, 0.1};
  for (double rate : {0.2, 0.5, 1.4, 3.3}) {
    const auto m = simulate_days(rate, burst, 10000, 19);
    EXPECT_LT(std::abs(m.mean - rate) / rate, 0.02) << rate;
  }
}

TEST(SampleDailyCount, ZeroSigmaEqualsDisabled) {
  const BurstConfig zero{true, 0.0, 0.3};
  CardProfile a{0, 15.0, 0.0}, b{0, 15.0, 0.0};
  RandomStream ra(3, 3), rb(3, 3);
  for (int d = 0; d < 5000; ++d) {
    ASSERT_EQ(sample_daily_count(0.5, zero, a, ra), sample_daily_count(0.5, BurstConfig{}, b, rb));
  }
  EXPECT_EQ(a, b);
}

GenerationConfig small_config() {
  GenerationConfig c;
  c.n_cards = 300;
  c.n_stores = 100;
  c.n_days = 30;
  c.seed = 11;
  return c;
}

TEST(Generate, ZeroDaysIsEmpty) {
  auto c = small_config();
  c.n_days = 0;
  EXPECT_TRUE(generate(c).empty());
}

TEST(Generate, RecordsAreValidAndCanonicallyOrdered) {
  const auto c = small_config();
  const auto records = generate(c);
  ASSERT_FALSE(records.empty());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    ASSERT_LT(r.day, c.n_days);
    ASSERT_LT(r.card_id, c.n_cards);
    ASSERT_LT(r.hour, 24U);
    ASSERT_LT(r.store_id, c.n_stores);
    ASSERT_EQ(snap_amount(r.amount), r.amount);
    if (i > 0) {
      const auto& p = records[i - 1];
      ASSERT_TRUE(p.day < r.day || (p.day == r.day && p.card_id <= r.card_id));
    }
  }
}

TEST(Generate, DeterministicAndThreadCountInvariant) {
  auto c = small_config();
  c.burst = {true, 1.0, 0.1};
  c.swap = {0.05, 2.0};
  const auto a = generate(c);
  const auto b = generate(c);
  EXPECT_EQ(a, b);
  c.threads = 4;
  EXPECT_EQ(generate(c), a);
  c.threads = 7;
  EXPECT_EQ(generate(c), a);
  c.seed = 12;
  EXPECT_NE(generate(c), a);
}

TEST(Generate, SerializedOutputIsByteIdentical) {
  const auto c = small_config();
  std::ostringstream a, b;
  {
    RecordWriter w(a);
    TransactionGenerator(c).run(w);
  }
  {
    RecordWriter w(b);
    TransactionGenerator(c).run(w);
  }
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().rfind("day,card,hour,amount,store\n", 0), 0U);
}

TEST(Generate, DegenerateTablesPassThrough) {
  auto c = small_config();
  c.distributions.hourly = degenerate(24, 17, BinSemantics::hour_of_day);
  c.distributions.quantity = degenerate(50, 3, BinSemantics::amount);
  c.n_stores = 1;
  const auto records = generate(c);
  ASSERT_FALSE(records.empty());
  for (const auto& r : records) {
    ASSERT_EQ(r.hour, 17U);
    ASSERT_EQ(r.amount, 87.5);
    ASSERT_EQ(r.store_id, 0U);
  }
  const auto m = compute_marginals(records);
  EXPECT_EQ(m.hour_of_day[17], m.hour_of_day.total());
  EXPECT_EQ(m.amounts[3], m.amounts.total());
}

TEST(Generate, SundayFreeTableProducesNoSundays) {
  auto c = small_config();
  c.distributions.daily = normalize({1, 1, 1, 1, 1, 1, 0}, BinSemantics::day_of_week);
  c.start_day_of_week = 3;
  for (const auto& r : generate(c)) ASSERT_NE(c.day_of_week(r.day), 6U);
}

TEST(Generate, TotalCountMatchesExpectation) {
  GenerationConfig c;  // 2000 cards, 1000 stores, 100 days
  c.seed = 5;
  TransactionGenerator g(c);
  double sum_e = 0.0;
  for (const auto& card : g.cards()) sum_e += card.expected_monthly_ops;
  const double expected = sum_e * c.n_days / 30.0;
  const double n = static_cast<double>(g.run([](const TransactionRecord&) {}));
  EXPECT_LT(std::abs(n - expected), 3 * std::sqrt(expected));
}

TEST(Generate, StoreSharesFollowWeights) {
  GenerationConfig c;
  c.n_cards = 3000;
  c.n_stores = 1000;
  c.n_days = 110;
  c.distributions.num_ops = degenerate(100, 99, BinSemantics::monthly_ops);  // 100 ops/month
  TransactionGenerator g(c);
  std::vector<double> hits(c.n_stores, 0.0);
  const auto n = g.run([&](const TransactionRecord& r) { hits[r.store_id] += 1.0; });
  ASSERT_GE(n, 1000000U);
  double total_w = 0.0;
  for (const auto& s : g.stores()) total_w += s.size_weight;
  double tv = 0.0;
  for (const auto& s : g.stores()) tv += std::abs(hits[s.store_id] / static_cast<double>(n) - s.size_weight / total_w);
  EXPECT_LT(0.5 * tv, 0.02);
}

TEST(Generate, AmountIndependentOfCardActivity) {
  GenerationConfig c;
  c.n_cards = 4000;
  c.n_days = 60;
  c.seed = 21;
  TransactionGenerator g(c);
  // Quartile class of each card's E.
  std::vector<double> es;
  for (const auto& card : g.cards()) es.push_back(card.expected_monthly_ops);
  auto sorted = es;
  std::sort(sorted.begin(), sorted.end());
  const double q1 = sorted[sorted.size() / 4], q2 = sorted[sorted.size() / 2], q3 = sorted[3 * sorted.size() / 4];
  auto quartile = [&](double e) { return e <= q1 ? 0 : e <= q2 ? 1 : e <= q3 ? 2 : 3; };

  std::vector<std::vector<double>> joint(4, std::vector<double>(kAmountBins, 0.0));
  double n = 0.0;
  g.run([&](const TransactionRecord& r) {
    joint[quartile(es[r.card_id])][amount_bin(r.amount)] += 1.0;
    n += 1.0;
  });
  std::vector<double> pa(4, 0.0), pb(kAmountBins, 0.0);
  for (int a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < kAmountBins; ++b) {
      pa[a] += joint[a][b] / n;
      pb[b] += joint[a][b] / n;
    }
  }
  double mi = 0.0;
  for (int a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < kAmountBins; ++b) {
      const double p = joint[a][b] / n;
      if (p > 0.0) mi += p * std::log2(p / (pa[a] * pb[b]));
    }
  }
  EXPECT_LT(mi, 0.01);
}

TEST(Generate, GapHistogramPeaksAtOneAndTwoDays) {
  GenerationConfig c;
  c.seed = 8;
  const auto m = compute_marginals(generate(c));
  const auto& g = m.inter_tx_gaps;
  for (std::size_t at : {24U, 48U}) {
    for (std::size_t k = at - 4; k <= at + 4; ++k) {
      if (k != at) {
        EXPECT_GT(g[at], g[k]) << "peak " << at << " vs " << k;
      }
    }
  }
}

TEST(Generate, SwapsRunAtDayBoundaries) {
  auto c = small_config();
  const auto plain = generate(c);
  c.swap = {0.5, 3.0};
  const auto swapped = generate(c);
  // Day 0 precedes any boundary, so it is unaffected.
  auto day0 = [](const std::vector<TransactionRecord>& v) {
    std::vector<TransactionRecord> out;
    for (const auto& r : v) {
      if (r.day == 0) out.push_back(r);
    }
    return out;
  };
  EXPECT_EQ(day0(plain), day0(swapped));
  EXPECT_NE(plain, swapped);
}

TEST(Generate, PreloadedPopulations) {
  auto c = small_config();
  std::vector<CardProfile> cards{{10, 30.0, 0.0}, {20, 60.0, 0.0}};
  std::vector<StoreProfile> stores{{5, 1.0}, {9, 3.0}};
  TransactionGenerator g(c, cards, stores);
  EXPECT_EQ(g.config().n_cards, 2U);
  std::map<CardId, int> per_card;
  g.run([&](const TransactionRecord& r) {
    ++per_card[r.card_id];
    ASSERT_TRUE(r.store_id == 5 || r.store_id == 9);
  });
  EXPECT_EQ(per_card.size(), 2U);
  EXPECT_THROW(TransactionGenerator(c, {}, stores), DomainError);
}

TEST(Generate, AmountJitterStaysInBin) {
  auto c = small_config();
  c.amount_jitter = true;
  const auto records = generate(c);
  bool off_midpoint = false;
  for (const auto& r : records) {
    ASSERT_GE(r.amount, 0.0);
    ASSERT_LT(r.amount, 1250.0);
    off_midpoint |= snap_amount(r.amount) != r.amount;
  }
  EXPECT_TRUE(off_midpoint);
}

TEST(GenerationConfig, Validation) {
  GenerationConfig c;
  c.n_cards = 0;
  EXPECT_THROW(TransactionGenerator{c}, DomainError);
  c = GenerationConfig{};
  c.start_day_of_week = 7;
  EXPECT_THROW(c.validate(), DomainError);
  c = GenerationConfig{};
  c.burst.debt_decay = 1.5;
  EXPECT_THROW(c.validate(), DomainError);
  c = GenerationConfig{};
  c.swap.similarity_ratio = 0.5;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(GenerationConfig, JsonRoundTrip) {
  GenerationConfig c;
  c.n_cards = 17;
  c.seed = 99;
  c.burst = {true, 0.7, 0.2};
  c.swap = {0.01, 1.5};
  c.start_day_of_week = 4;
  const auto back = generation_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(generation_config_from_json(to_json(back))));
  EXPECT_EQ(back.n_cards, 17U);
  EXPECT_EQ(back.burst.overdispersion, 0.7);
  EXPECT_EQ(back.start_day_of_week, 4U);
  auto broken = to_json(c);
  broken.erase("seed");
  EXPECT_THROW(generation_config_from_json(broken), ConfigError);
}

TEST(RecordFormat, CsvAndTuple) {
  const TransactionRecord r{0, 1, 17, 87.5, 78};
  std::ostringstream out;
  {
    RecordWriter w(out);
    w.write(r);
  }
  EXPECT_EQ(out.str(), "day,card,hour,amount,store\n0,1,17,87.5,78\n");
  EXPECT_EQ(format_tuple(r), "(0, 1, 17, 87.5, 78)");
  EXPECT_EQ(format_tuple({0, 2, 13, 62.5, 68}), "(0, 2, 13, 62.5, 68)");
  std::ostringstream tab;
  {
    RecordWriter w(tab, '\t');
    w.write({3, 4, 5, 1237.5, 6});
  }
  EXPECT_EQ(tab.str(), "day\tcard\thour\tamount\tstore\n3\t4\t5\t1237.5\t6\n");
}

}  // namespace
}  // namespace moneyflow
