#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace probetraj::selftest {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::size_t cases = 0;
  std::string detail;  // worst error or first failure
};

SuiteResult hmm_enumeration(std::uint64_t seed, int cases = 100);
SuiteResult em_monotone(std::uint64_t seed, int datasets = 20);
SuiteResult projector(std::uint64_t seed, int cases = 100);
SuiteResult threshold_scan(std::uint64_t seed, int cases = 100);
SuiteResult span_search(std::uint64_t seed, int cases = 200);
SuiteResult spearman(std::uint64_t seed, int cases = 100);
SuiteResult gradient_check(std::uint64_t seed, int cases = 20);

std::vector<SuiteResult> run_all(std::uint64_t seed);
// One PASS/FAIL line per suite; true when all pass.
bool report(const std::vector<SuiteResult>& results, std::ostream& out);

}  // namespace probetraj::selftest
