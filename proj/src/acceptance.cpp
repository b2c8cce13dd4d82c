#include "poro/acceptance.hpp"

#include <cstdio>

namespace poro {

int acceptance_suite(const std::string&, const std::string&, const std::string&) {
  std::puts("acceptance suite pending");
  return 1;
}

} // namespace poro
