// Runs every acceptance criterion at its stated size and tolerance, one
// PASS/FAIL line each. Exit status is nonzero if any criterion fails.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "ksdist/verify.hpp"

int main(int argc, char** argv) {
  ksd::Suite suite = ksd::Suite::full;
  std::uint64_t seed = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--quick") suite = ksd::Suite::quick;
    if (a == "--seed" && i + 1 < argc) seed = std::strtoull(argv[++i], nullptr, 10);
  }
  const ksd::VerifyReport rep = ksd::run_verify(suite, seed, {}, [](const ksd::CriterionResult& c) {
    std::printf("%s C%-2d %-48s %7.1f s  %s\n", c.passed ? "PASS" : "FAIL", c.id, c.name.c_str(), c.seconds,
                c.detail.c_str());
    std::fflush(stdout);
  });
  int failed = 0;
  for (const auto& c : rep.criteria) failed += c.passed ? 0 : 1;
  std::printf("%d/%zu criteria passed (%s suite, seed %llu, %.1f s)\n", static_cast<int>(rep.criteria.size()) - failed,
              rep.criteria.size(), ksd::to_string(suite), static_cast<unsigned long long>(seed), rep.seconds);
  return failed == 0 ? 0 : 1;
}
