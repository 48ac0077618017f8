#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sophia/optimizers.hpp"
#include "sophia/problems.hpp"

namespace sophia {

/// Plain-text key-value config document: one `section.key = value` per line,
/// `#` comments, unknown keys rejected (fail fast on hyperparameter typos).
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> parse_key_value_file(const std::filesystem::path& path);

struct ProblemSpec {
  std::string kind = "tiny_lm";  // toy2d | quadratic | classifier | tiny_lm
  uint64_t seed = 1;
  // quadratic
  int64_t dim = 10;
  double kappa = 100.0;
  bool rotated = false;
  // classifier
  int64_t classes = 3;
  int64_t inputs = 5;
  int64_t hidden = 8;
  int64_t examples = 256;
  // tiny_lm
  int64_t vocab = 32;
  int64_t context = 8;
  int64_t embed = 32;

  std::shared_ptr<Problem> instantiate() const;
};

struct ExperimentConfig {
  ProblemSpec problem;
  /// sophia_h | sophia_g | adamw | lion | gd | signgd | sign_momentum | normalize
  std::string optimizer = "adamw";
  SophiaConfig sophia = SophiaConfig::defaults_for(EstimatorKind::hutchinson);
  BaselineHyper baseline = BaselineHyper::defaults_for(BaselineKind::adamw);

  int64_t steps = 1000;
  int64_t warmup = 50;
  double peak_lr = 1e-3;
  double final_lr_frac = 0.05;
  int64_t batch = 64;
  int64_t hess_batch = 32;
  uint64_t seed = 0;
  int64_t eval_interval = 50;
  /// Peak-LR grid for the slow side of `compare` (descending probe order).
  std::vector<double> lr_grid;

  bool is_sophia() const { return optimizer == "sophia_h" || optimizer == "sophia_g"; }
  BaselineKind baseline_kind() const;

  void validate() const;
  static ExperimentConfig from_kv(const std::map<std::string, std::string>& kv);
  static ExperimentConfig from_file(const std::filesystem::path& path);
};

}  // namespace sophia
