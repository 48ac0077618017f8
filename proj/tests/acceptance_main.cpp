// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion.

#include <cstdio>
#include <functional>
#include <vector>

#include "sophia/checks.hpp"

int main() {
  using Check = std::function<sophia::CheckResult()>;
  std::vector<Check> checks = {
      sophia::check_autodiff_correctness,    sophia::check_hutchinson_unbiasedness,
      sophia::check_gnb_exactness,           sophia::check_toy_landscape,
      sophia::check_theorem1_validation,     sophia::check_signgd_lower_bound,
      sophia::check_sophia_update_contracts, sophia::check_speedup_surrogate,
      sophia::check_gamma_tuning,            sophia::check_determinism,
  };
  bool all_pass = true;
  for (const Check& check : checks) {
    sophia::CheckResult r = check();
    std::printf("[%s] %s %s — %s (%.2f s)\n", r.pass ? "PASS" : "FAIL", r.id.c_str(),
                r.name.c_str(), r.detail.c_str(), r.seconds);
    std::fflush(stdout);
    all_pass = all_pass && r.pass;
  }
  std::printf("%s\n", all_pass ? "acceptance: all criteria passed" : "acceptance: FAILURES");
  return all_pass ? 0 : 1;
}
