#pragma once

// Acceptance harness: executes every acceptance criterion at its pinned
// tolerance and prints one PASS/FAIL line per criterion.

#include <string>

namespace poro {

// tier: "fast" (reduced instances) or "full". Returns the number of failed
// criteria (0 = all green).
int acceptance_suite(const std::string& tier, const std::string& scenario_dir,
                     const std::string& out_dir);

} // namespace poro
