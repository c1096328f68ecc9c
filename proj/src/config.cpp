#include "xsrank/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>

namespace xsrank {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  if (!v.empty() && v.front() == '-') throw ConfigError("'" + key + "' must not be negative");
  return parse_number<std::size_t>(key, v);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

template <class T, class F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F&& one) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(one(key, item));
  if (out.empty()) throw ConfigError("'" + key + "' needs at least one value");
  return out;
}

std::vector<double> doubles(const std::string& key, const std::string& v) {
  return parse_list<double>(key, v, parse_number<double>);
}
std::vector<std::size_t> counts(const std::string& key, const std::string& v) {
  return parse_list<std::size_t>(key, v, parse_count);
}

fs::path resolve(const std::string& v, const fs::path& base) {
  fs::path p(v);
  return p.is_relative() && !base.empty() ? base / p : p;
}

constexpr ScorerKind kNeural[] = {ScorerKind::MlpRegress, ScorerKind::PairwiseNet, ScorerKind::ListMleNet,
                                  ScorerKind::ListNetNet};

void each_base_space(RunConfig& c, const std::function<void(SearchSpace&)>& f) {
  for (const auto k : kNeural) {
    auto [it, inserted] = c.pipeline.base_spaces.try_emplace(k, SearchSpace::for_scorer(k));
    f(it->second);
  }
}

std::string num(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (const auto& x : xs) {
    if (!s.empty()) s += ",";
    if constexpr (std::is_same_v<T, double>)
      s += num(x);
    else if constexpr (std::is_same_v<T, std::string>)
      s += x;
    else
      s += std::to_string(x);
  }
  return s;
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = trim(std::string_view(text).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& value, const fs::path& base) {
  auto& p = c.pipeline;
  const std::string& v = value;
  if (key == "prices") c.prices = resolve(v, base);
  else if (key == "vix") c.vix = resolve(v, base);
  else if (key == "out") c.out = resolve(v, base);
  else if (key == "models") {
    c.models = split_list(v);
    if (c.models.empty()) throw ConfigError("'models' needs at least one model");
  } else if (key == "universe") c.universe = split_list(v);
  else if (key == "save_models") c.save_models = parse_bool(key, v);
  else if (key == "seed") p.seed = c.synth.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "workers") p.workers = parse_count(key, v);
  else if (key == "m") p.m = parse_count(key, v);
  else if (key == "k") p.k = parse_count(key, v);
  else if (key == "sigma_target") p.sigma_target = parse_number<double>(key, v);
  else if (key == "block_years") p.block_years = parse_number<int>(key, v);
  else if (key == "max_epochs") p.train.max_epochs = parse_count(key, v);
  else if (key == "patience") p.train.patience = parse_count(key, v);
  else if (key == "train_fraction") p.train.train_fraction = parse_number<double>(key, v);
  else if (key == "label_target") {
    if (v == "vol_scaled") p.frame.label_target = LabelTarget::VolScaled;
    else if (v == "raw") p.frame.label_target = LabelTarget::Raw;
    else throw ConfigError("'label_target' is vol_scaled or raw, got '" + v + "'");
  } else if (key == "min_prior_returns") p.frame.min_prior_returns = parse_count(key, v);
  else if (key == "vix_window") p.vix_window = parse_number<int>(key, v);
  else if (key == "vix_threshold") p.vix_threshold = parse_number<double>(key, v);
  else if (key == "vol_span") p.risk.vol_span = parse_number<int>(key, v);
  else if (key == "winsor_span") p.risk.winsor_span = parse_number<int>(key, v);
  else if (key == "winsor_width") p.risk.winsor_width = parse_number<double>(key, v);
  else if (key == "trials") {
    const auto n = parse_count(key, v);
    each_base_space(c, [&](SearchSpace& s) { s.n_trials = n; });
  } else if (key == "base.dropout") {
    const auto g = doubles(key, v);
    each_base_space(c, [&](SearchSpace& s) { s.dropout_rates = g; });
  } else if (key == "base.learning_rate") {
    const auto g = doubles(key, v);
    each_base_space(c, [&](SearchSpace& s) { s.learning_rates = g; });
  } else if (key == "base.hidden_width") {
    const auto g = counts(key, v);
    each_base_space(c, [&](SearchSpace& s) { s.hidden_widths = g; });
  } else if (key == "context.trials") p.context_space.n_trials = parse_count(key, v);
  else if (key == "context.dropout") p.context_space.dropout_rates = doubles(key, v);
  else if (key == "context.learning_rate") p.context_space.learning_rates = doubles(key, v);
  else if (key == "context.d_fc") p.context_space.d_fc = counts(key, v);
  else if (key == "context.d_ff") p.context_space.d_ff = counts(key, v);
  else if (key == "context.layers") p.context_space.n_layers = counts(key, v);
  else if (key == "context.heads") p.context_space.n_heads = parse_count(key, v);
  else if (key == "synth.assets") c.synth.n_assets = parse_count(key, v);
  else if (key == "synth.days") c.synth.n_days = parse_count(key, v);
  else if (key == "synth.momentum") c.synth.momentum_strength = parse_number<double>(key, v);
  else if (key == "synth.context") c.synth.context_strength = parse_number<double>(key, v);
  else throw ConfigError("unknown setting '" + key + "'");
}

RunConfig parse_config(std::istream& in, const fs::path& base_dir) {
  RunConfig c;
  std::string line;
  std::set<std::string> seen;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
    const auto key = trim(std::string_view(text).substr(0, eq));
    const auto value = trim(std::string_view(text).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(no) + ": missing key");
    if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(no) + ": '" + key + "' set twice");
    try {
      apply_setting(c, key, value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(no) + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.parent_path());
}

void RunConfig::validate() const {
  pipeline.validate();
  synth.validate();
  std::set<std::string> names;
  for (const auto& m : models)
    if (!names.insert(m).second) throw ConfigError("model '" + m + "' listed twice");
  (void)model_ids();
  std::set<std::string> assets(universe.begin(), universe.end());
  if (assets.size() != universe.size()) throw ConfigError("universe lists an asset twice");
}

void RunConfig::require_inputs() const {
  if (prices.empty()) throw ConfigError("no prices file configured");
  if (vix.empty()) throw ConfigError("no vix file configured");
  for (const auto& p : {prices, vix})
    if (!fs::is_regular_file(p)) throw ConfigError("input file " + p.string() + " does not exist");
}

std::vector<ModelId> RunConfig::model_ids() const {
  std::vector<ModelId> out;
  for (const auto& m : models) out.push_back(parse_model(m));
  return out;
}

std::map<std::string, std::string> describe(const RunConfig& c) {
  const auto& p = c.pipeline;
  std::map<std::string, std::string> d;
  d["prices"] = c.prices.string();
  d["vix"] = c.vix.string();
  d["out"] = c.out.string();
  d["models"] = join(c.models);
  d["universe"] = join(c.universe);
  d["save_models"] = c.save_models ? "true" : "false";
  d["seed"] = std::to_string(p.seed);
  d["workers"] = std::to_string(p.workers);
  d["m"] = std::to_string(p.m);
  d["k"] = std::to_string(p.k);
  d["sigma_target"] = num(p.sigma_target);
  d["block_years"] = std::to_string(p.block_years);
  d["max_epochs"] = std::to_string(p.train.max_epochs);
  d["patience"] = std::to_string(p.train.patience);
  d["train_fraction"] = num(p.train.train_fraction);
  d["label_target"] = p.frame.label_target == LabelTarget::Raw ? "raw" : "vol_scaled";
  d["min_prior_returns"] = std::to_string(p.frame.min_prior_returns);
  d["vix_window"] = std::to_string(p.vix_window);
  d["vix_threshold"] = num(p.vix_threshold);
  d["vol_span"] = std::to_string(p.risk.vol_span);
  d["winsor_span"] = std::to_string(p.risk.winsor_span);
  d["winsor_width"] = num(p.risk.winsor_width);
  for (const auto k : kNeural) {
    const auto s = p.base_space(k);
    const std::string pre = "base." + base_name(k) + ".";
    d[pre + "trials"] = std::to_string(s.n_trials);
    d[pre + "dropout"] = join(s.dropout_rates);
    d[pre + "learning_rate"] = join(s.learning_rates);
    d[pre + "hidden_width"] = join(s.hidden_widths);
  }
  const auto& cs = p.context_space;
  d["context.trials"] = std::to_string(cs.n_trials);
  d["context.dropout"] = join(cs.dropout_rates);
  d["context.learning_rate"] = join(cs.learning_rates);
  d["context.d_fc"] = join(cs.d_fc);
  d["context.d_ff"] = join(cs.d_ff);
  d["context.layers"] = join(cs.n_layers);
  d["context.heads"] = std::to_string(cs.n_heads);
  d["synth.assets"] = std::to_string(c.synth.n_assets);
  d["synth.days"] = std::to_string(c.synth.n_days);
  d["synth.momentum"] = num(c.synth.momentum_strength);
  d["synth.context"] = num(c.synth.context_strength);
  return d;
}

}  // namespace xsrank
