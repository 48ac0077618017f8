#pragma once

#include <string>
#include <vector>

#include "sophia/tensor.hpp"

namespace sophia {

/// One verification outcome; `detail` carries the measured numbers so a
/// failure is diagnosable from the log alone.
struct CheckResult {
  std::string id;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

// The ten acceptance checks. Each pins its tolerances internally.
CheckResult check_autodiff_correctness();   // C1
CheckResult check_hutchinson_unbiasedness();// C2
CheckResult check_gnb_exactness();          // C3
CheckResult check_toy_landscape();          // C4
CheckResult check_theorem1_validation();    // C5
CheckResult check_signgd_lower_bound();     // C6
CheckResult check_sophia_update_contracts();// C7
CheckResult check_speedup_surrogate();      // C8
CheckResult check_gamma_tuning();           // C9
CheckResult check_determinism();            // C10

std::vector<CheckResult> run_all_checks();

/// Named validation suites exposed through `validate --suite ...`:
/// autodiff, estimators, theory, toy2d.
std::vector<CheckResult> run_suite(const std::string& suite);
std::vector<std::string> suite_names();

/// First grid point of the documented initialization scan from which vanilla
/// Newton stalls at a non-minimum stationary point while the clipped update
/// reaches the global minimum (and SignGD is strictly slower).
Tensor scan_toy2d_init();

}  // namespace sophia
