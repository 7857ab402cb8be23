// Flat key-value run configuration: a config file plus `--section.key value`
// flag overrides. Unknown keys and type mismatches are usage errors (exit 2).

#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nast {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "out.dir", "seed",
      // model architecture
      "model.num_layers", "model.num_heads", "model.hidden_dim", "model.feedforward_dim",
      "model.max_len", "model.predictor_layers", "model.max_slack", "model.dropout",
      "model.no_aligned_input", "model.no_cross_attention",
      // training
      "train.lr", "train.disc_lr", "train.batch_size", "train.max_steps", "train.alpha",
      "train.beta_x", "train.beta_y", "train.gamma", "train.regime", "train.align",
      "train.gumbel_temperature", "train.drop_prob", "train.mask_prob", "train.insert_prob",
      "train.max_insertions", "train.disc_steps", "train.gen_steps", "train.eval_every",
      "train.clip_norm", "train.style_warmup_steps",
      // data
      "data.train_x", "data.train_y", "data.test_x", "data.test_y", "data.refs_x",
      "data.refs_y", "data.vocab", "data.min_freq",
      // classifier substitute
      "clf.train_steps", "clf.batch_size", "clf.lr", "clf.num_layers", "clf.hidden_dim",
      // synth
      "synth.spec", "synth.test_fraction",
      // transfer
      "transfer.checkpoint", "transfer.input", "transfer.style", "transfer.output",
      "transfer.alignment_output",
      // eval
      "eval.hyp_xy", "eval.hyp_yx", "eval.src_x", "eval.src_y", "eval.refs_x", "eval.refs_y",
      "eval.report",
      // align-analyze
      "analyze.sources", "analyze.outputs", "analyze.alignments", "analyze.report",
      // cycle-only experiment
      "cycle.max_steps", "cycle.num_seeds", "cycle.eval_size", "cycle.batch_size", "cycle.lr",
  };
  return keys;
}

class RunConfig {
 public:
  void set(const std::string& key, const std::string& value) {
    if (!known_config_keys().count(key)) throw ConfigError("unknown config key: " + key);
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required config key: " + key);
    return it->second;
  }

  int64_t get_int(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      size_t pos = 0;
      int64_t v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected integer, got '" + it->second + "'");
    }
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected number, got '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key " + key + ": expected boolean, got '" + it->second + "'");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    auto it = values_.find(key);
    if (it == values_.end()) return out;
    std::istringstream is(it->second);
    std::string item;
    while (std::getline(is, item, ','))
      if (!item.empty()) out.push_back(item);
    return out;
  }

  // Deterministic echo of the resolved configuration.
  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " " << v << "\n";
    return os.str();
  }

  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::istringstream is(line);
      std::string key;
      if (!(is >> key)) continue;
      std::string value;
      std::getline(is, value);
      size_t start = value.find_first_not_of(" \t");
      size_t end = value.find_last_not_of(" \t");
      if (start == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": key '" + key +
                          "' has no value");
      set(key, value.substr(start, end - start + 1));
    }
  }

  // argv after the subcommand: [--config file] then --section.key value pairs.
  static RunConfig parse(const std::vector<std::string>& args) {
    RunConfig cfg;
    size_t i = 0;
    if (i + 1 < args.size() && args[i] == "--config") {
      cfg.load_file(args[i + 1]);
      i += 2;
    }
    for (; i < args.size(); i += 2) {
      const std::string& flag = args[i];
      if (flag.rfind("--", 0) != 0) throw ConfigError("expected --section.key flag, got: " + flag);
      if (i + 1 >= args.size()) throw ConfigError("flag " + flag + " has no value");
      cfg.set(flag.substr(2), args[i + 1]);
    }
    return cfg;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace nast
