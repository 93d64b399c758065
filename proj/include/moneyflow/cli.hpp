#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "moneyflow/distmodel.hpp"
#include "moneyflow/entities.hpp"
#include "moneyflow/error.hpp"
#include "moneyflow/generator.hpp"
#include "moneyflow/ingest.hpp"
#include "moneyflow/stats.hpp"

namespace moneyflow::cli {

inline constexpr const char* kToolName = "moneyflow";
inline constexpr const char* kToolVersion = "0.1.0";
/// Directory searched for distributions.json when no --config is given.
inline constexpr const char* kConfigDirEnv = "MONEYFLOW_CONFIG_DIR";

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kDataError = 3,
  kValidationFailed = 4,
  kIoError = 5,
};

enum class Command { generate, validate, fit, inspect };

struct CliConfig {
  Command command = Command::generate;

  std::optional<std::string> config_path;    // distribution config
  std::optional<std::string> manifest_path;  // full run description to replay or validate against
  std::optional<std::string> input_path;
  std::optional<std::string> output_path;
  std::optional<std::string> manifest_out;  // default: <output>.manifest.json
  std::optional<std::string> out_dir;       // histogram data files
  std::optional<std::string> write_config;  // dump the resolved distribution config

  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_cards;
  std::optional<std::size_t> n_stores;
  std::optional<std::uint32_t> n_days;
  std::optional<std::uint32_t> start_dow;
  std::optional<double> burst_sigma;  // enables bursts
  std::optional<double> burst_decay;
  std::optional<double> swap_prob;
  std::optional<double> swap_ratio;
  bool amount_jitter = false;
  unsigned threads = 1;

  std::optional<std::string> cards_file;  // load populations instead of sampling them
  std::optional<std::string> stores_file;
  std::optional<std::string> dump_cards;
  std::optional<std::string> dump_stores;

  char delimiter = ',';
  bool has_header = true;
  std::size_t error_budget = 100;
  bool sort_input = false;
  std::optional<std::uint32_t> fit_days;
  std::optional<std::string> amount_cpd_path;
};

// ---------------------------------------------------------------------------

/// FNV-1a over the canonical JSON of the config.
inline std::string config_hash(const GenerationConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

inline nlohmann::json make_manifest(const GenerationConfig& config, std::uint64_t record_count,
                                    const std::string& output) {
  return {
      {"tool", kToolName},
      {"version", kToolVersion},
      {"seed", config.seed},
      {"config_hash", config_hash(config)},
      {"record_count", record_count},
      {"output", output},
      {"config", to_json(config)},
  };
}

inline GenerationConfig config_from_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest " + path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("config")) throw ConfigError("manifest " + path + " has no config");
  GenerationConfig config = generation_config_from_json(j.at("config"));
  if (j.contains("config_hash") && j.at("config_hash") != config_hash(config)) {
    throw ConfigError("manifest " + path + " config does not match its hash");
  }
  return config;
}

inline DistributionSet resolve_distributions(const CliConfig& cli) {
  if (cli.config_path) return load_distributions(*cli.config_path);
  if (const char* dir = std::getenv(kConfigDirEnv); dir != nullptr && *dir != '\0') {
    const auto path = std::filesystem::path(dir) / "distributions.json";
    if (std::filesystem::exists(path)) return load_distributions(path.string());
  }
  return default_distributions();
}

/// Manifest (if any), then distribution config, then flag overrides.
inline GenerationConfig resolve_config(const CliConfig& cli) {
  GenerationConfig c = cli.manifest_path ? config_from_manifest(*cli.manifest_path) : GenerationConfig{};
  if (!cli.manifest_path || cli.config_path) c.distributions = resolve_distributions(cli);
  if (cli.seed) c.seed = *cli.seed;
  if (cli.n_cards) c.n_cards = *cli.n_cards;
  if (cli.n_stores) c.n_stores = *cli.n_stores;
  if (cli.n_days) c.n_days = *cli.n_days;
  if (cli.start_dow) c.start_day_of_week = *cli.start_dow;
  if (cli.burst_sigma) {
    c.burst.enabled = true;
    c.burst.overdispersion = *cli.burst_sigma;
  }
  if (cli.burst_decay) c.burst.debt_decay = *cli.burst_decay;
  if (cli.swap_prob) c.swap.probability = *cli.swap_prob;
  if (cli.swap_ratio) c.swap.similarity_ratio = *cli.swap_ratio;
  if (cli.amount_jitter) c.amount_jitter = true;
  c.threads = cli.threads;
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

namespace detail {

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

inline std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot open " + path + " for writing");
  return f;
}

inline std::ifstream open_input(const std::optional<std::string>& path) {
  if (!path) throw ConfigError("an --input file is required");
  std::ifstream f(*path, std::ios::binary);
  if (!f) throw ConfigError("cannot open input " + *path);
  return f;
}

inline ParseOptions parse_options(const CliConfig& cli) {
  ParseOptions o;
  o.delimiter = cli.delimiter;
  o.has_header = cli.has_header;
  o.error_budget = cli.error_budget;
  return o;
}

/// Streams the input through `acc`, or loads and sorts it first when asked.
inline void accumulate(const CliConfig& cli, MarginalAccumulator& acc, TransactionReader& reader,
                       std::vector<double>* raw_amounts = nullptr) {
  TransactionRecord r;
  if (!cli.sort_input) {
    while (reader.next(r)) {
      acc.add(r);
      if (raw_amounts) raw_amounts->push_back(reader.last_raw_amount());
    }
    return;
  }
  std::vector<TransactionRecord> all;
  while (reader.next(r)) {
    all.push_back(r);
    if (raw_amounts) raw_amounts->push_back(reader.last_raw_amount());
  }
  sort_canonical(all);
  for (const auto& rec : all) acc.add(rec);
}

inline void report_issues(const TransactionReader& reader, std::ostream& err) {
  for (const auto& issue : reader.issues()) err << "warning: line " << issue.line << ": " << issue.message << '\n';
}

inline void write_panels(const std::string& dir, const ValidationReport& report, bool with_reference) {
  std::filesystem::create_directories(dir);
  for (const auto& c : report.checks) {
    auto f = open_output((std::filesystem::path(dir) / (c.name + ".dat")).string());
    write_histogram_data(f, c.empirical, c.bin_value);
    if (with_reference) {
      auto g = open_output((std::filesystem::path(dir) / (c.name + ".reference.dat")).string());
      write_histogram_data(g, c.reference, c.bin_value);
    }
  }
}

template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const EmptyDataError& e) {
    err << "data error: EmptyDataError: " << e.what() << '\n';
    return kDataError;
  } catch (const DomainError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::ios_base::failure& e) {
    err << "io error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kIoError;
  } catch (const Error& e) {
    err << "io error: " << e.what() << '\n';
    return kIoError;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Writes the transaction file and its manifest.
inline int run_generate(const CliConfig& cli, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (!cli.output_path) throw ConfigError("generate needs --output");
    GenerationConfig config = resolve_config(cli);
    std::optional<TransactionGenerator> generator;
    if (cli.cards_file || cli.stores_file) {
      if (!cli.cards_file || !cli.stores_file) throw ConfigError("--cards-file and --stores-file go together");
      std::ifstream cf(*cli.cards_file), sf(*cli.stores_file);
      if (!cf || !sf) throw ConfigError("cannot open population files");
      try {
        generator.emplace(config, read_cards(cf), read_stores(sf));
      } catch (const Error& e) {
        throw ConfigError(std::string("population files: ") + e.what());
      }
    } else {
      generator.emplace(config);
    }
    config = generator->config();

    if (cli.write_config) save_distributions(config.distributions, *cli.write_config);
    if (cli.dump_cards) {
      auto f = detail::open_output(*cli.dump_cards);
      write_cards(f, generator->cards());
    }
    if (cli.dump_stores) {
      auto f = detail::open_output(*cli.dump_stores);
      write_stores(f, generator->stores());
    }

    std::uint64_t count = 0;
    {
      auto file = detail::open_output(*cli.output_path);
      RecordWriter writer(file);
      count = generator->run(writer);
      writer.flush();
    }
    const std::string manifest_path = cli.manifest_out.value_or(*cli.output_path + ".manifest.json");
    {
      auto mf = detail::open_output(manifest_path);
      mf << make_manifest(config, count, std::filesystem::path(*cli.output_path).filename().string()).dump(2) << '\n';
      if (!mf) throw std::ios_base::failure("failed writing " + manifest_path);
    }
    out << "records: " << count << '\n'
        << "output: " << *cli.output_path << '\n'
        << "manifest: " << manifest_path << '\n'
        << "config_hash: " << config_hash(config) << '\n';
    return kOk;
  });
}

/// Compares a transaction file with its reference config; 0 iff every marginal passes.
inline int run_validate(const CliConfig& cli, std::ostream& out, std::ostream& err,
                        const ValidationThresholds& thresholds = {}) {
  return detail::guarded(err, [&] {
    const GenerationConfig config = resolve_config(cli);
    auto in = detail::open_input(cli.input_path);
    TransactionReader reader(in, detail::parse_options(cli));
    MarginalAccumulator acc(config.start_day_of_week);
    detail::accumulate(cli, acc, reader);
    detail::report_issues(reader, err);
    const MarginalSet marginals = acc.finish();
    const ValidationReport report = validate(marginals, config, thresholds);
    out << report.to_text();
    if (cli.out_dir) {
      detail::write_panels(*cli.out_dir, report, true);
      auto f = detail::open_output((std::filesystem::path(*cli.out_dir) / "report.txt").string());
      f << report.to_text();
    }
    return report.passed() ? kOk : kValidationFailed;
  });
}

/// Fits a distribution config from a transaction log.
inline int run_fit(const CliConfig& cli, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (!cli.output_path) throw ConfigError("fit needs --output");
    auto in = detail::open_input(cli.input_path);
    TransactionReader reader(in, detail::parse_options(cli));
    MarginalAccumulator acc(cli.start_dow.value_or(0), /*track_sequences=*/false);
    std::vector<double> raw_amounts;
    detail::accumulate(cli, acc, reader, cli.amount_cpd_path ? &raw_amounts : nullptr);
    detail::report_issues(reader, err);
    const MarginalSet marginals = acc.finish();
    const std::uint32_t window = cli.fit_days.value_or(marginals.window_days);
    const FitResult fit = fit_distributions(marginals, window);
    save_distributions(fit.distributions, *cli.output_path);

    if (cli.amount_cpd_path) {
      std::vector<double> grid;
      for (double v = 0.0; v <= 2000.0; v += 5.0) grid.push_back(v);
      const CpdCurve curve = cpd(raw_amounts, grid);
      auto f = detail::open_output(*cli.amount_cpd_path);
      write_histogram_data(f, curve.probabilities, [&](std::size_t i) { return curve.grid[i]; });
    }

    const auto& s = fit.summary;
    out << "records: " << s.records << '\n'
        << "parse_errors: " << reader.issues().size() << '\n'
        << "cards: " << s.cards << '\n'
        << "stores: " << s.stores << '\n'
        << "window_days: " << s.window_days << '\n'
        << "amounts_clamped: " << reader.amounts_clamped() << '\n'
        << "cards_clamped_low: " << s.cards_clamped_low << '\n'
        << "cards_clamped_high: " << s.cards_clamped_high << '\n'
        << "stores_clamped: " << s.stores_clamped << '\n'
        << "output: " << *cli.output_path << '\n';
    if (s.cards_clamped_high > 0) {
      err << "warning: " << s.cards_clamped_high << " card(s) above 100 ops/month clamped into the top bin\n";
    }
    if (s.stores_clamped > 0) {
      err << "warning: " << s.stores_clamped << " store(s) above the last size bin clamped into it\n";
    }
    return kOk;
  });
}

/// Summary marginals of any transaction file, no reference needed.
inline int run_inspect(const CliConfig& cli, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    auto in = detail::open_input(cli.input_path);
    TransactionReader reader(in, detail::parse_options(cli));
    MarginalAccumulator acc(cli.start_dow.value_or(0));
    detail::accumulate(cli, acc, reader);
    detail::report_issues(reader, err);
    const MarginalSet m = acc.finish();

    std::ostringstream s;
    s.imbue(std::locale::classic());
    s << std::setprecision(6);
    s << "transactions: " << m.transactions << '\n'
      << "window_days: " << m.window_days << '\n'
      << "cards: " << m.card_counts.size() << '\n'
      << "stores: " << m.store_counts_by_id.size() << '\n'
      << "mean_ops_per_card_month: "
      << static_cast<double>(m.transactions) / static_cast<double>(m.card_counts.size()) * kDaysPerMonth /
             static_cast<double>(m.window_days)
      << '\n';

    double new_sum = 0.0;
    std::size_t days = 0;
    for (std::size_t d = 1; d < m.activity.size(); ++d) {
      if (m.activity[d].new_cards + m.activity[d].repeating_cards == 0) continue;
      new_sum += m.activity[d].new_fraction();
      ++days;
    }
    s << "new_card_fraction_mean: " << (days ? new_sum / static_cast<double>(days) : 0.0) << '\n';

    auto row = [&](const char* name, const Histogram& h) {
      s << name << ':';
      for (double p : h.probabilities()) s << ' ' << p;
      s << '\n';
    };
    row("day_of_week", m.day_of_week);
    row("day_of_week_amount", m.day_of_week_amount);
    row("hour_of_day", m.hour_of_day);
    row("hour_of_day_amount", m.hour_of_day_amount);

    // Amount CPD from the binned midpoints: mass of bins whose midpoint exceeds v.
    s << "amount_cpd:";
    for (double v : {25.0, 50.0, 100.0, 200.0, 400.0, 600.0, 800.0, 1000.0}) {
      double above = 0.0;
      for (std::size_t b = 0; b < kAmountBins; ++b) {
        if (amount_from_bin(b) > v) above += m.amounts[b];
      }
      s << ' ' << v << '=' << above / m.amounts.total();
    }
    s << '\n';

    const Histogram& g = m.inter_tx_gaps;
    auto local_max = [&](std::size_t at) {
      for (std::size_t k = at - 4; k <= at + 4; ++k) {
        if (k != at && g[k] >= g[at]) return false;
      }
      return g[at] > 0.0;
    };
    s << "gap_pairs: " << g.total() << '\n'
      << "gap_local_max_24h: " << (local_max(24) ? "true" : "false") << '\n'
      << "gap_local_max_48h: " << (local_max(48) ? "true" : "false") << '\n';
    out << s.str();

    if (cli.out_dir) {
      ValidationReport panels;
      auto add = [&](const char* name, const Histogram& h, std::function<double(std::size_t)> bin_value) {
        MarginalCheck c;
        c.name = name;
        c.empirical = h.probabilities();
        c.bin_value = std::move(bin_value);
        panels.checks.push_back(std::move(c));
      };
      auto identity = [](std::size_t i) { return static_cast<double>(i); };
      add("ops_per_card", m.ops_per_card_monthly(m.window_days), [](std::size_t i) { return static_cast<double>(i + 1); });
      add("amount", m.amounts, [](std::size_t i) { return amount_from_bin(i); });
      add("day_of_week", m.day_of_week, identity);
      add("hour", m.hour_of_day, identity);
      add("inter_tx_gaps", m.inter_tx_gaps.folded(kGapBins), identity);
      add("ops_per_store", m.ops_per_store, [](std::size_t i) { return store_weight_from_bin(i); });
      detail::write_panels(*cli.out_dir, panels, false);
    }
    return kOk;
  });
}

inline int run(const CliConfig& cli, std::ostream& out, std::ostream& err) {
  switch (cli.command) {
    case Command::generate: return run_generate(cli, out, err);
    case Command::validate: return run_validate(cli, out, err);
    case Command::fit: return run_fit(cli, out, err);
    case Command::inspect: return run_inspect(cli, out, err);
  }
  return kConfigError;
}

}  // namespace moneyflow::cli
