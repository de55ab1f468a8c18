#include "kgcicam/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace kgcicam {

std::string run_role_name(RunRole role) {
  switch (role) {
    case RunRole::baseline: return "baseline";
    case RunRole::ci_cam: return "ci-cam";
    case RunRole::cls_expert: return "cls-expert";
    case RunRole::loc_expert: return "loc-expert";
    case RunRole::kg_ci_cam: return "kg-ci-cam";
  }
  return "?";
}

RunRole run_role_from_name(const std::string& name) {
  if (name == "baseline") return RunRole::baseline;
  if (name == "ci-cam") return RunRole::ci_cam;
  if (name == "cls-expert") return RunRole::cls_expert;
  if (name == "loc-expert") return RunRole::loc_expert;
  if (name == "kg-ci-cam") return RunRole::kg_ci_cam;
  throw ConfigError("unknown role: " + name);
}

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("config field epochs: must be >= 1");
  if (batch_size < 1) throw ConfigError("config field batch_size: must be >= 1");
  if (learning_rate <= 0) throw ConfigError("config field learning_rate: must be > 0");
  if (lambda <= 0) throw ConfigError("config field lambda: must be > 0");
  if (epsilon <= 0) throw ConfigError("config field epsilon: must be > 0");
  if (t_cls <= 0 || t_loc <= 0)
    throw ConfigError("config field t_cls/t_loc: must be > 0");
  if (alpha < 0 || alpha > 1) throw ConfigError("config field alpha: must be in [0,1]");
  if (box_threshold <= 0 || box_threshold >= 1)
    throw ConfigError("config field box_threshold: must be in (0,1)");
  if (mask_threshold <= 0 || mask_threshold >= 1)
    throw ConfigError("config field mask_threshold: must be in (0,1)");
  if (val_fraction < 0 || val_fraction >= 1)
    throw ConfigError("config field val_fraction: must be in [0,1)");
  if (mu < 0 || eta < 0 || beta < 0 || delta < 0)
    throw ConfigError("config field mu/eta/beta/delta: must be >= 0");
  if (score_convention != "logits" && score_convention != "probs")
    throw ConfigError("config field score_convention: must be logits or probs");
  if (kl_direction != "forward" && kl_direction != "reverse")
    throw ConfigError("config field kl_direction: must be forward or reverse");
  if (role == RunRole::kg_ci_cam &&
      (cls_expert_checkpoint.empty() || loc_expert_checkpoint.empty()))
    throw ConfigError(
        "config field cls_expert_checkpoint/loc_expert_checkpoint: required for "
        "role kg-ci-cam");
  if (data_root.empty()) throw ConfigError("config field data_root: required");
}

namespace {

std::string ints_to_csv(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> csv_to_ints(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoi(tok));
    } catch (...) {
      throw ConfigError("config field " + key + ": bad integer list '" + s + "'");
    }
  }
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw ConfigError("config field " + key + ": bad number '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (...) {
    throw ConfigError("config field " + key + ": bad integer '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("config field " + key + ": bad boolean '" + v + "'");
}

}  // namespace

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "role: " << run_role_name(role) << "\n";
  os << "data_root: " << data_root << "\n";
  os << "train_split: " << train_split << "\n";
  os << "test_split: " << test_split << "\n";
  os << "out_dir: " << out_dir << "\n";
  os << "n_classes: " << n_classes << "\n";
  os << "epochs: " << epochs << "\n";
  os << "batch_size: " << batch_size << "\n";
  os << "learning_rate: " << learning_rate << "\n";
  os << "seed: " << seed << "\n";
  os << "val_fraction: " << val_fraction << "\n";
  os << "backbone_channels: " << ints_to_csv(backbone_channels) << "\n";
  os << "backbone_strides: " << ints_to_csv(backbone_strides) << "\n";
  os << "nonlocal_after: " << ints_to_csv(nonlocal_after) << "\n";
  os << "lambda: " << lambda << "\n";
  os << "epsilon: " << epsilon << "\n";
  os << "rho: " << rho << "\n";
  os << "gamma_curve: " << gamma_curve << "\n";
  os << "box_threshold: " << box_threshold << "\n";
  os << "mask_threshold: " << mask_threshold << "\n";
  os << "mu: " << mu << "\n";
  os << "eta: " << eta << "\n";
  os << "beta: " << beta << "\n";
  os << "delta: " << delta << "\n";
  os << "score_convention: " << score_convention << "\n";
  os << "alpha: " << alpha << "\n";
  os << "t_cls: " << t_cls << "\n";
  os << "t_loc: " << t_loc << "\n";
  os << "kl_direction: " << kl_direction << "\n";
  os << "t_squared: " << (t_squared ? 1 : 0) << "\n";
  os << "teacher_cache: " << (teacher_cache ? 1 : 0) << "\n";
  if (!knowledge_cache.empty()) os << "knowledge_cache: " << knowledge_cache << "\n";
  if (!cls_expert_checkpoint.empty())
    os << "cls_expert_checkpoint: " << cls_expert_checkpoint << "\n";
  if (!loc_expert_checkpoint.empty())
    os << "loc_expert_checkpoint: " << loc_expert_checkpoint << "\n";
  return os.str();
}

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>>
      setters = {
          {"role", [&](const std::string&, const std::string& v) { cfg.role = run_role_from_name(v); }},
          {"data_root", [&](const std::string&, const std::string& v) { cfg.data_root = v; }},
          {"train_split", [&](const std::string&, const std::string& v) { cfg.train_split = v; }},
          {"test_split", [&](const std::string&, const std::string& v) { cfg.test_split = v; }},
          {"out_dir", [&](const std::string&, const std::string& v) { cfg.out_dir = v; }},
          {"n_classes", [&](const std::string& k, const std::string& v) { cfg.n_classes = to_int(k, v); }},
          {"epochs", [&](const std::string& k, const std::string& v) { cfg.epochs = to_int(k, v); }},
          {"batch_size", [&](const std::string& k, const std::string& v) { cfg.batch_size = to_int(k, v); }},
          {"learning_rate", [&](const std::string& k, const std::string& v) { cfg.learning_rate = to_double(k, v); }},
          {"seed", [&](const std::string&, const std::string& v) { cfg.seed = static_cast<unsigned long long>(std::stoull(v)); }},
          {"val_fraction", [&](const std::string& k, const std::string& v) { cfg.val_fraction = to_double(k, v); }},
          {"backbone_channels", [&](const std::string& k, const std::string& v) { cfg.backbone_channels = csv_to_ints(k, v); }},
          {"backbone_strides", [&](const std::string& k, const std::string& v) { cfg.backbone_strides = csv_to_ints(k, v); }},
          {"nonlocal_after", [&](const std::string& k, const std::string& v) { cfg.nonlocal_after = csv_to_ints(k, v); }},
          {"lambda", [&](const std::string& k, const std::string& v) { cfg.lambda = to_double(k, v); }},
          {"epsilon", [&](const std::string& k, const std::string& v) { cfg.epsilon = to_double(k, v); }},
          {"rho", [&](const std::string& k, const std::string& v) { cfg.rho = to_double(k, v); }},
          {"gamma_curve", [&](const std::string&, const std::string& v) { cfg.gamma_curve = v; }},
          {"box_threshold", [&](const std::string& k, const std::string& v) { cfg.box_threshold = to_double(k, v); }},
          {"mask_threshold", [&](const std::string& k, const std::string& v) { cfg.mask_threshold = to_double(k, v); }},
          {"mu", [&](const std::string& k, const std::string& v) { cfg.mu = to_double(k, v); }},
          {"eta", [&](const std::string& k, const std::string& v) { cfg.eta = to_double(k, v); }},
          {"beta", [&](const std::string& k, const std::string& v) { cfg.beta = to_double(k, v); }},
          {"delta", [&](const std::string& k, const std::string& v) { cfg.delta = to_double(k, v); }},
          {"score_convention", [&](const std::string&, const std::string& v) { cfg.score_convention = v; }},
          {"alpha", [&](const std::string& k, const std::string& v) { cfg.alpha = to_double(k, v); }},
          {"t_cls", [&](const std::string& k, const std::string& v) { cfg.t_cls = to_double(k, v); }},
          {"t_loc", [&](const std::string& k, const std::string& v) { cfg.t_loc = to_double(k, v); }},
          {"kl_direction", [&](const std::string&, const std::string& v) { cfg.kl_direction = v; }},
          {"t_squared", [&](const std::string& k, const std::string& v) { cfg.t_squared = to_bool(k, v); }},
          {"teacher_cache", [&](const std::string& k, const std::string& v) { cfg.teacher_cache = to_bool(k, v); }},
          {"knowledge_cache", [&](const std::string&, const std::string& v) { cfg.knowledge_cache = v; }},
          {"cls_expert_checkpoint", [&](const std::string&, const std::string& v) { cfg.cls_expert_checkpoint = v; }},
          {"loc_expert_checkpoint", [&](const std::string&, const std::string& v) { cfg.loc_expert_checkpoint = v; }},
      };
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') continue;  // section header
    size_t colon = t.find(':');
    if (colon == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key: value'");
    std::string key = trim(t.substr(0, colon));
    std::string value = trim(t.substr(colon + 1));
    auto it = setters.find(key);
    if (it == setters.end())
      throw ConfigError("config field " + key + ": unknown key (line " +
                        std::to_string(line_no) + ")");
    it->second(key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return parse_run_config_text(os.str());
}

}  // namespace kgcicam
