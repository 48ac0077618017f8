#include "sophia/config.hpp"

#include <fstream>
#include <sstream>

#include "sophia/errors.hpp"

namespace sophia {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' needs an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' needs a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "' needs true/false, got '" + v + "'");
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(to_double(key, part));
  }
  if (out.empty()) throw ConfigError("key '" + key + "' needs a comma-separated list");
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    if (kv.count(key)) throw ConfigError("duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> parse_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

std::shared_ptr<Problem> ProblemSpec::instantiate() const {
  if (kind == "toy2d") return make_toy2d();
  if (kind == "quadratic") return make_quadratic(dim, kappa, rotated, seed);
  if (kind == "classifier") return make_classifier(classes, inputs, hidden, examples, seed);
  if (kind == "tiny_lm") return make_tiny_lm(vocab, context, embed, seed);
  throw ConfigError("unknown problem kind '" + kind + "'");
}

BaselineKind ExperimentConfig::baseline_kind() const {
  if (optimizer == "gd") return BaselineKind::gd;
  if (optimizer == "signgd") return BaselineKind::signgd;
  if (optimizer == "sign_momentum") return BaselineKind::sign_momentum;
  if (optimizer == "adamw") return BaselineKind::adamw;
  if (optimizer == "lion") return BaselineKind::lion;
  if (optimizer == "normalize") return BaselineKind::normalize;
  throw ConfigError("'" + optimizer + "' is not a baseline optimizer");
}

void ExperimentConfig::validate() const {
  if (steps < 1) throw ConfigError("run.steps must be positive");
  if (warmup < 0 || warmup >= steps) throw ConfigError("run.warmup must lie in [0, steps)");
  if (peak_lr <= 0.0) throw ConfigError("run.peak_lr must be positive");
  if (final_lr_frac <= 0.0 || final_lr_frac > 1.0)
    throw ConfigError("run.final_lr_frac must lie in (0, 1]");
  if (batch < 1) throw ConfigError("run.batch must be positive");
  if (hess_batch < 1) throw ConfigError("run.hess_batch must be positive");
  if (eval_interval < 1) throw ConfigError("run.eval_interval must be positive");
  if (is_sophia()) {
    if (sophia.beta1 <= 0.0 || sophia.beta1 >= 1.0 || sophia.beta2 <= 0.0 || sophia.beta2 >= 1.0)
      throw ConfigError("optimizer betas must lie in (0, 1)");
    if (sophia.gamma <= 0.0) throw ConfigError("optimizer.gamma must be positive");
    if (sophia.eps <= 0.0) throw ConfigError("optimizer.eps must be positive");
    if (sophia.hessian_interval < 1) throw ConfigError("optimizer.k must be >= 1");
    if (sophia.weight_decay < 0.0) throw ConfigError("optimizer.weight_decay must be >= 0");
  } else {
    baseline_kind();  // throws on unknown names
  }
}

ExperimentConfig ExperimentConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  // Optimizer kind first: it selects the hyperparameter defaults the other
  // keys override.
  if (auto it = kv.find("optimizer.kind"); it != kv.end()) cfg.optimizer = it->second;
  if (cfg.optimizer == "sophia_h")
    cfg.sophia = SophiaConfig::defaults_for(EstimatorKind::hutchinson);
  else if (cfg.optimizer == "sophia_g")
    cfg.sophia = SophiaConfig::defaults_for(EstimatorKind::gnb);
  else
    cfg.baseline = BaselineHyper::defaults_for(cfg.baseline_kind());

  for (const auto& [key, value] : kv) {
    if (key == "optimizer.kind") {
      // handled above
    } else if (key == "problem.kind") {
      cfg.problem.kind = value;
    } else if (key == "problem.seed") {
      cfg.problem.seed = static_cast<uint64_t>(to_int(key, value));
    } else if (key == "problem.dim") {
      cfg.problem.dim = to_int(key, value);
    } else if (key == "problem.kappa") {
      cfg.problem.kappa = to_double(key, value);
    } else if (key == "problem.rotated") {
      cfg.problem.rotated = to_bool(key, value);
    } else if (key == "problem.classes") {
      cfg.problem.classes = to_int(key, value);
    } else if (key == "problem.inputs") {
      cfg.problem.inputs = to_int(key, value);
    } else if (key == "problem.hidden") {
      cfg.problem.hidden = to_int(key, value);
    } else if (key == "problem.examples") {
      cfg.problem.examples = to_int(key, value);
    } else if (key == "problem.vocab") {
      cfg.problem.vocab = to_int(key, value);
    } else if (key == "problem.context") {
      cfg.problem.context = to_int(key, value);
    } else if (key == "problem.embed") {
      cfg.problem.embed = to_int(key, value);
    } else if (key == "optimizer.beta1") {
      cfg.sophia.beta1 = cfg.baseline.beta1 = to_double(key, value);
    } else if (key == "optimizer.beta2") {
      cfg.sophia.beta2 = cfg.baseline.beta2 = to_double(key, value);
    } else if (key == "optimizer.gamma") {
      cfg.sophia.gamma = to_double(key, value);
    } else if (key == "optimizer.eps") {
      cfg.sophia.eps = cfg.baseline.eps = to_double(key, value);
    } else if (key == "optimizer.k") {
      cfg.sophia.hessian_interval = to_int(key, value);
    } else if (key == "optimizer.weight_decay") {
      cfg.sophia.weight_decay = cfg.baseline.weight_decay = to_double(key, value);
    } else if (key == "optimizer.grad_clip") {
      if (value == "none")
        cfg.sophia.grad_clip_norm.reset();
      else
        cfg.sophia.grad_clip_norm = to_double(key, value);
    } else if (key == "optimizer.precond") {
      if (value == "sophia")
        cfg.sophia.mode = PreconditionerMode::sophia;
      else if (value == "adahessian")
        cfg.sophia.mode = PreconditionerMode::adahessian_like;
      else if (value == "empirical_fisher")
        cfg.sophia.mode = PreconditionerMode::empirical_fisher;
      else
        throw ConfigError("optimizer.precond must be sophia|adahessian|empirical_fisher");
    } else if (key == "run.steps") {
      cfg.steps = to_int(key, value);
    } else if (key == "run.warmup") {
      cfg.warmup = to_int(key, value);
    } else if (key == "run.peak_lr") {
      cfg.peak_lr = to_double(key, value);
    } else if (key == "run.final_lr_frac") {
      cfg.final_lr_frac = to_double(key, value);
    } else if (key == "run.batch") {
      cfg.batch = to_int(key, value);
    } else if (key == "run.hess_batch") {
      cfg.hess_batch = to_int(key, value);
    } else if (key == "run.seed") {
      cfg.seed = static_cast<uint64_t>(to_int(key, value));
    } else if (key == "run.eval_interval") {
      cfg.eval_interval = to_int(key, value);
    } else if (key == "grid.peak_lr") {
      cfg.lr_grid = to_double_list(key, value);
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  return from_kv(parse_key_value_file(path));
}

}  // namespace sophia
