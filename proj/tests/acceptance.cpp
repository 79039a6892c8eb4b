#include <iostream>

#include "kioc/acceptance.hpp"

int main() {
  const kioc::ExperimentConfig cfg;
  int failed = 0;
  for (const auto& r : kioc::acceptance::run_all(cfg)) {
    std::cout << kioc::acceptance::format(r) << std::endl;
    if (!r.passed) ++failed;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
