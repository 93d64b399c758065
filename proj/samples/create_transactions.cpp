// 2000 cards, 1000 stores, 100 days with the default tables; prints the first
// records in tuple form and the dataset size.
#include <iostream>

#include "moneyflow/moneyflow.hpp"

int main() {
  moneyflow::GenerationConfig config;
  config.n_cards = 2000;
  config.n_stores = 1000;
  config.n_days = 100;

  const auto transactions = moneyflow::generate(config);
  for (std::size_t i = 0; i < 3 && i < transactions.size(); ++i) {
    std::cout << moneyflow::format_tuple(transactions[i]) << '\n';
  }
  std::cout << transactions.size() << " transactions\n";
}
