#pragma once

#include <string>
#include <vector>

namespace flowps {

struct SuiteResult {
  std::string name;
  bool pass = true;
  double max_err = 0.0;  // largest error seen by the suite's checks
  std::string note;      // first failure (or exception) description
};

// Runs the library self-checks. The fast set covers every module's
// closed-form examples and identities in a few seconds; full adds the
// Monte-Carlo suites (transport moments, posterior moments, sampling and a
// short training run) and stays under the ten-minute budget.
std::vector<SuiteResult> run_verify(bool full);

// Number of failed suites (the CLI exit code).
int count_failures(const std::vector<SuiteResult>& results);

}  // namespace flowps
