// Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any failure.
#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli_app.hpp"
#include "moneyflow/moneyflow.hpp"

using namespace moneyflow;

namespace {

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << " (" << title << "): " << detail << std::endl;
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

long peak_rss_kb() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return u.ru_maxrss;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

GenerationConfig appendix_scale(std::uint64_t seed) {
  GenerationConfig c;  // 2000 cards, 1000 stores, 100 days, default tables
  c.seed = seed;
  return c;
}

bool gap_peaks(const Histogram& g) {
  for (std::size_t at : {24U, 48U}) {
    for (std::size_t k = at - 4; k <= at + 4; ++k) {
      if (k != at && !(g[at] > g[k])) return false;
    }
  }
  return true;
}

void criterion_1() {
  const auto uniform = normalize({1, 1, 1, 1, 1, 1, 1}, BinSemantics::day_of_week);
  const CardProfile card{0, 15.0, 0.0};
  bool exact = true;
  for (std::uint32_t d = 0; d < 7; ++d) exact &= daily_expected_count(card, d, uniform) == 0.5;
  report(1, "rate arithmetic", exact, "E=15/month, uniform week -> " + fmt(daily_expected_count(card, 0, uniform), 17));
}

struct Deferred {
  bool pass = false;
  std::string detail;
} criterion_9_result;

void criteria_2_3_9() {
  const auto t0 = std::chrono::steady_clock::now();
  const GenerationConfig config = appendix_scale(1);
  const auto records = generate(config);
  const MarginalSet m = compute_marginals(records, config.start_day_of_week);
  const ValidationReport r = validate(m, config);
  const double elapsed = seconds_since(t0);
  std::string detail = std::to_string(records.size()) + " records, " + fmt(elapsed, 3) + " s;";
  for (const auto& c : r.checks) detail += " " + c.name + "=" + fmt(c.distance.tv, 3);
  const bool required = r.at("hour").pass && r.at("day_of_week").pass && r.at("amount").pass &&
                        r.at("ops_per_card").pass && r.at("ops_per_store").pass;
  report(2, "self-consistency at 2000/1000/100", required && elapsed < 10.0, detail);

  int peaks = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto g = seed == 1 ? m.inter_tx_gaps : compute_marginals(generate(appendix_scale(seed))).inter_tx_gaps;
    peaks += gap_peaks(g);
  }
  report(3, "gap peaks at 24 h and 48 h", peaks >= 19, std::to_string(peaks) + "/20 seeds");

  double min_new = 1.0;
  for (std::size_t d = 1; d < m.activity.size(); ++d) min_new = std::min(min_new, m.activity[d].new_fraction());
  std::mt19937_64 gen(2024);
  bool agree = true;
  for (int t = 0; t < 200 && agree; ++t) {
    std::vector<TransactionRecord> s;
    const int n = 1 + static_cast<int>(gen() % 1000);
    for (int i = 0; i < n; ++i) {
      s.push_back({static_cast<std::uint32_t>(gen() % 15), gen() % 60, static_cast<std::uint32_t>(gen() % 24), 12.5,
                   gen() % 7});
    }
    sort_canonical(s);
    std::uint32_t days = 0;
    for (const auto& x : s) days = std::max(days, x.day + 1);
    std::vector<std::set<CardId>> active(days);
    for (const auto& x : s) active[x.day].insert(x.card_id);
    std::vector<DayActivity> brute(days);
    for (std::uint32_t d = 0; d < days; ++d) {
      for (auto card : active[d]) ++(d > 0 && active[d - 1].count(card) ? brute[d].repeating_cards : brute[d].new_cards);
    }
    agree = new_vs_repeating(s) == brute && compute_marginals(s).activity == brute;
  }
  criterion_9_result = {min_new > 0.5 && agree,
         "minimum daily new fraction " + fmt(min_new, 3) + ", brute-force agreement on 200 streams: " +
             (agree ? "exact" : "MISMATCH")};
}

void criterion_4() {
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const GenerationConfig c = appendix_scale(seed);
    TransactionGenerator g(c);
    double sum_e = 0.0;
    for (const auto& card : g.cards()) sum_e += card.expected_monthly_ops;
    const double expected = sum_e * c.n_days / kDaysPerMonth;  // n_cards * mean(E) * n_days / 30
    const double n = static_cast<double>(g.run([](const TransactionRecord&) {}));
    ok += std::abs(n - expected) <= 3.0 * std::sqrt(expected);
  }
  report(4, "total count within 3 sd", ok >= 19, std::to_string(ok) + "/20 seeds");
}

void criterion_5() {
  const auto t0 = std::chrono::steady_clock::now();
  const BurstConfig burst{true, 1.0, 0.1};
  bool pass = true;
  std::string detail;
  for (double rate : {0.2, 0.5, 1.0, 3.0}) {
    CardProfile card{0, rate * kDaysPerMonth, 0.0};
    RandomStream rng(77, static_cast<std::uint64_t>(rate * 1000));
    double sum = 0.0, sq = 0.0;
    constexpr int days = 10000;
    for (int d = 0; d < days; ++d) {
      const auto c = static_cast<double>(sample_daily_count(rate, burst, card, rng));
      sum += c;
      sq += c * c;
    }
    const double mean = sum / days;
    const double vmr = (sq / days - mean * mean) / mean;
    const double rel = std::abs(mean - rate) / rate;
    pass &= rel < 0.02 && vmr > 1.2;
    detail += "rate " + fmt(rate) + ": mean " + fmt(mean) + ", var/mean " + fmt(vmr, 3) + "; ";
  }
  const double elapsed = seconds_since(t0);
  report(5, "burst conservation", pass && elapsed < 30.0, detail + fmt(elapsed, 3) + " s");
}

void criterion_6() {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    std::vector<double> w(1 + gen() % 100);
    for (double& x : w) x = u(gen) < 0.1 ? 0.0 : -std::log(u(gen) + 1e-300);
    w[gen() % w.size()] += 1.0;
    const auto table = normalize(w);
    RandomStream rng(600 + t, 0);
    std::vector<double> hits(w.size(), 0.0);
    for (int i = 0; i < 1000000; ++i) hits[sample_bin(table, rng)] += 1.0;
    worst = std::max(worst, compare(hits, table.weights()).tv);
  }
  report(6, "sampler correctness", worst < 0.005, "worst TV over 10 tables " + fmt(worst, 3));
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "moneyflow");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion_7(const std::filesystem::path& dir) {
  const auto a = (dir / "a.csv").string(), b = (dir / "b.csv").string(), c = (dir / "c.csv").string();
  bool ok = cli({"generate", "-o", a, "--seed", "7", "--burst-sigma", "1", "--swap-prob", "0.01"}) == 0;
  ok &= cli({"generate", "-o", b, "--manifest", a + ".manifest.json"}) == 0;
  ok &= cli({"generate", "-o", c, "--manifest", a + ".manifest.json", "--threads", "4"}) == 0;
  const std::string sa = slurp(a);
  const bool same = ok && !sa.empty() && sa == slurp(b) && sa == slurp(c);
  report(7, "determinism", same,
         std::to_string(sa.size()) + " bytes; manifest replay and 4-thread replay " + (same ? "identical" : "DIFFER"));
}

void criterion_8() {
  const GenerationConfig config = appendix_scale(8);
  const auto fit = fit_distributions(generate(config), config.n_days).distributions;
  const double h = compare(fit.hourly.weights(), config.distributions.hourly.weights()).tv;
  const double d = compare(fit.daily.weights(), config.distributions.daily.weights()).tv;
  const double a = compare(fit.quantity.weights(), config.distributions.quantity.weights()).tv;
  report(8, "fit round trip", h < 0.05 && d < 0.05 && a < 0.05,
         "TV hour " + fmt(h, 3) + ", day " + fmt(d, 3) + ", amount " + fmt(a, 3));
}

void criterion_10(const std::filesystem::path& dir) {
  GenerationConfig c;
  // Enough cards for 15M transactions over 30 days, with 2% headroom.
  const double mean_e = monthly_ops_mean(c.distributions.num_ops);
  c.n_cards = static_cast<std::size_t>(std::ceil(15'000'000 / mean_e * 1.02));
  c.n_stores = 100'000;
  c.seed = 10;
  const auto path = (dir / "big.csv").string();

  // Same populations, a tenth of the output first: peak memory must not follow output size.
  c.n_days = 3;
  std::uint64_t small = 0;
  {
    std::ofstream f(path, std::ios::binary);
    RecordWriter w(f);
    small = TransactionGenerator(c).run(w);
  }
  const long rss_small = peak_rss_kb();

  c.n_days = 30;
  const auto t0 = std::chrono::steady_clock::now();
  std::uint64_t n = 0;
  {
    std::ofstream f(path, std::ios::binary);
    RecordWriter w(f);
    n = TransactionGenerator(c).run(w);
  }
  const double elapsed = seconds_since(t0);
  const long rss_large = peak_rss_kb();
  const auto bytes = std::filesystem::file_size(path);
  std::filesystem::remove(path);

  const long growth_kb = rss_large - rss_small;
  const bool pass = n >= 15'000'000 && elapsed < 60.0 && growth_kb < 64 * 1024;
  report(10, "15M transactions streamed", pass,
         std::to_string(n) + " records (" + std::to_string(bytes >> 20) + " MiB) in " + fmt(elapsed, 3) +
             " s; peak RSS " + std::to_string(rss_small / 1024) + " MiB at " + std::to_string(small) +
             " records, " + std::to_string(rss_large / 1024) + " MiB at " + std::to_string(n));
}

}  // namespace

int main() {
  const auto dir = std::filesystem::temp_directory_path() / ("moneyflow-acceptance-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  try {
    criterion_1();
    criteria_2_3_9();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7(dir);
    criterion_8();
    report(9, "new vs repeating", criterion_9_result.pass, criterion_9_result.detail);
    criterion_10(dir);
  } catch (const std::exception& e) {
    std::cout << "FAIL unexpected error: " << e.what() << std::endl;
    ++failures;
  }
  std::filesystem::remove_all(dir);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion failure(s)") << std::endl;
  return failures == 0 ? 0 : 1;
}
