#pragma once

#include <ostream>
#include <string>

#include "CLI11.hpp"
#include "moneyflow/cli.hpp"

namespace moneyflow::cli {

namespace detail {

inline void add_model_options(CLI::App& app, CliConfig& c) {
  app.add_option("--config", c.config_path, "Distribution config (JSON with the five weight tables)");
  app.add_option("--manifest", c.manifest_path, "Run manifest to replay or validate against");
  app.add_option("--cards", c.n_cards, "Number of cards")->check(CLI::PositiveNumber);
  app.add_option("--stores", c.n_stores, "Number of stores")->check(CLI::PositiveNumber);
  app.add_option("--days", c.n_days, "Days in the time window");
  app.add_option("--seed", c.seed, "Random seed");
  app.add_option("--start-dow", c.start_dow, "Day of week of day 0 (0 = Monday)")->check(CLI::Range(0, 6));
  app.add_option("--burst-sigma", c.burst_sigma, "Enable bursts with this log-normal spread")->check(CLI::NonNegativeNumber);
  app.add_option("--burst-decay", c.burst_decay, "Share of inhibition debt forgiven per day")->check(CLI::Range(0.0, 1.0));
  app.add_option("--swap-prob", c.swap_prob, "Per-card daily activity swap probability")->check(CLI::Range(0.0, 1.0));
  app.add_option("--swap-ratio", c.swap_ratio, "Largest activity ratio between swap partners")->check(CLI::Range(1.0, 1e300));
}

inline void add_input_options(CLI::App& app, CliConfig& c) {
  app.add_option("--input,-i", c.input_path, "Transaction file")->required();
  app.add_option("--delimiter", c.delimiter, "Field delimiter");
  app.add_flag("!--no-header", c.has_header, "Input has no header line (columns day,card,hour,amount,store)");
  app.add_option("--max-errors", c.error_budget, "Malformed lines tolerated before failing");
  app.add_flag("--sort", c.sort_input, "Load and sort the input by (day, card) before analysis");
}

}  // namespace detail

/// Parses arguments and runs one command. Returns the process exit status.
inline int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CliConfig c;
  CLI::App app{"Synthetic card-transaction generator and validator", kToolName};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Generate a transaction file and its manifest");
  detail::add_model_options(*gen, c);
  gen->add_option("--output,-o", c.output_path, "Transaction file to write")->required();
  gen->add_option("--manifest-out", c.manifest_out, "Manifest path (default <output>.manifest.json)");
  gen->add_option("--threads", c.threads, "Worker threads; output does not depend on it")->check(CLI::PositiveNumber);
  gen->add_flag("--amount-jitter", c.amount_jitter, "Spread amounts uniformly inside their bin");
  gen->add_option("--write-config", c.write_config, "Also write the distribution config in use");
  gen->add_option("--cards-file", c.cards_file, "Load cards (card_id,expected_monthly_ops)");
  gen->add_option("--stores-file", c.stores_file, "Load stores (store_id,size_weight)");
  gen->add_option("--dump-cards", c.dump_cards, "Write the card population");
  gen->add_option("--dump-stores", c.dump_stores, "Write the store population");
  gen->callback([&] { c.command = Command::generate; });

  auto* val = app.add_subcommand("validate", "Compare a transaction file with its reference config");
  detail::add_model_options(*val, c);
  detail::add_input_options(*val, c);
  val->add_option("--out-dir", c.out_dir, "Directory for histogram data files and report.txt");
  val->callback([&] { c.command = Command::validate; });

  auto* fit = app.add_subcommand("fit", "Fit a distribution config from a transaction log");
  detail::add_input_options(*fit, c);
  fit->add_option("--output,-o", c.output_path, "Distribution config to write")->required();
  fit->add_option("--days", c.fit_days, "Window length in days (default: last day + 1)")->check(CLI::PositiveNumber);
  fit->add_option("--start-dow", c.start_dow, "Day of week of day 0 (0 = Monday)")->check(CLI::Range(0, 6));
  fit->add_option("--amount-cpd", c.amount_cpd_path, "Write the pre-snapping amount CPD");
  fit->callback([&] { c.command = Command::fit; });

  auto* ins = app.add_subcommand("inspect", "Print summary marginals of a transaction file");
  detail::add_input_options(*ins, c);
  ins->add_option("--start-dow", c.start_dow, "Day of week of day 0 (0 = Monday)")->check(CLI::Range(0, 6));
  ins->add_option("--out-dir", c.out_dir, "Directory for histogram data files");
  ins->callback([&] { c.command = Command::inspect; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  return run(c, out, err);
}

}  // namespace moneyflow::cli
