// Prints the architecture audit table as CSV.
#include <iostream>

#include "denseed/arch/audit.hpp"

int main() {
  const auto report = denseed::arch::audit_table(denseed::arch::reference_specs());
  std::cout << report.to_csv();
  return report.hard_matches() ? 0 : 1;
}
