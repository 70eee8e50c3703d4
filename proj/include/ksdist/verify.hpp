#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace ksd {

enum class Suite { quick, full };

Suite suite_from_string(const std::string& s);
const char* to_string(Suite s);

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  /// Budget from the criterion text, 0 if none.
  double budget_seconds = 0.0;
  std::vector<std::pair<std::string, double>> metrics;
  std::string detail;
};

struct VerifyReport {
  Suite suite = Suite::quick;
  std::uint64_t seed = 0;
  std::vector<CriterionResult> criteria;
  double seconds = 0.0;

  bool all_passed() const;
};

/// Number of acceptance criteria.
constexpr int kCriteria = 14;

/// Runs one criterion (1-based id). The quick suite shrinks sample counts;
/// the full suite uses the sizes and tolerances of the criteria as stated.
CriterionResult run_criterion(int id, Suite suite, std::uint64_t seed);

/// Runs the selected criteria (all if empty), reporting each as it finishes.
VerifyReport run_verify(Suite suite, std::uint64_t seed, const std::vector<int>& only = {},
                        const std::function<void(const CriterionResult&)>& on_result = {});

}  // namespace ksd
