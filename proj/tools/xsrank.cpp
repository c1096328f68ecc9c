// xsrank: synth / run / report.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "xsrank/artifacts.hpp"
#include "xsrank/config.hpp"

namespace fs = std::filesystem;
using namespace xsrank;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitTraining = 4, kExitOther = 1;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string models;
  std::string out;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, Overrides& o, bool need_config) {
  auto* c = cmd->add_option("--config", o.config, "key = value configuration file");
  if (need_config) c->required();
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--models", o.models, "comma-separated model list, e.g. Rand,LN,LN+P");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--workers", o.workers, "parallel training jobs");
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) apply_setting(cfg, "seed", std::to_string(*o.seed));
  if (!o.models.empty()) apply_setting(cfg, "models", o.models);
  if (!o.out.empty()) cfg.out = o.out;
  if (o.workers) apply_setting(cfg, "workers", std::to_string(*o.workers));
  cfg.validate();
  return cfg;
}

template <class F>
fs::path emit(const fs::path& dir, const char* name, F&& write) {
  std::ostringstream s;
  write(s);
  write_text(dir / name, s.str());
  spdlog::info("wrote {}", (dir / name).string());
  return name;
}

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : describe(cfg)) j[k] = v;
  return j;
}

// Keeps entries of an existing manifest and refreshes digests.
void write_manifest(const fs::path& dir, std::vector<fs::path> files, json extra) {
  const auto path = dir / "manifest.json";
  if (fs::exists(path)) {
    try {
      std::ifstream in(path);
      const auto old = json::parse(in);
      for (const auto& f : old.at("files")) {
        const fs::path p = f.at("path").get<std::string>();
        if (std::find(files.begin(), files.end(), p) == files.end() && fs::exists(dir / p)) files.push_back(p);
      }
      for (const auto& [k, v] : old.items())
        if (k != "files" && !extra.contains(k)) extra[k] = v;
    } catch (const json::exception& e) {
      spdlog::warn("ignoring unreadable manifest: {}", e.what());
    }
  }
  std::sort(files.begin(), files.end());
  write_text(path, file_manifest(dir, files, std::move(extra)).dump(2) + "\n");
}

int cmd_synth(const Overrides& o) {
  RunConfig cfg = resolve_config(o);
  fs::create_directories(cfg.out);
  const auto market = make_synthetic_panel(cfg.synth);
  std::vector<fs::path> files;
  files.push_back(emit(cfg.out, "prices.csv", [&](std::ostream& s) { write_price_panel(s, market.prices); }));
  files.push_back(emit(cfg.out, "vix.csv", [&](std::ostream& s) { write_vix(s, market.vix); }));
  json extra = {{"command", "synth"},
                {"synthetic",
                 {{"assets", cfg.synth.n_assets},
                  {"days", cfg.synth.n_days},
                  {"momentum_strength", cfg.synth.momentum_strength},
                  {"context_strength", cfg.synth.context_strength},
                  {"seed", cfg.synth.seed}}}};
  write_manifest(cfg.out, files, extra);
  return kExitOk;
}

int cmd_run(const Overrides& o) {
  RunConfig cfg = resolve_config(o);
  cfg.require_inputs();
  const auto ids = cfg.model_ids();

  PricePanel prices = load_price_panel(cfg.prices.string());
  if (!cfg.universe.empty()) prices = select_assets(prices, cfg.universe);
  const VixSeries vix = load_vix(cfg.vix.string());
  spdlog::info("{} assets x {} dates; models: {}", prices.n_assets(), prices.n_dates(), describe(cfg).at("models"));

  const auto result = run_pipeline(prices, vix, ids, cfg.pipeline);

  fs::create_directories(cfg.out);
  std::vector<ReportSeries> rs;
  for (const auto& s : result.series) rs.push_back(report_series(s, result.frame.dates));
  const auto report = build_report(rs, result.states, cfg.pipeline.sigma_target);

  std::vector<fs::path> files;
  files.push_back(emit(cfg.out, "features.csv", [&](std::ostream& s) { write_features_csv(s, result.frame); }));
  files.push_back(
      emit(cfg.out, "decisions.csv", [&](std::ostream& s) { write_decisions_csv(s, result.series, result.frame); }));
  files.push_back(emit(cfg.out, "returns.csv", [&](std::ostream& s) { write_returns_csv(s, rs); }));
  files.push_back(emit(cfg.out, "ndcg.csv", [&](std::ostream& s) { write_ndcg_csv(s, rs, cfg.pipeline.k); }));
  files.push_back(emit(cfg.out, "report.json", [&](std::ostream& s) { s << report.dump(2) << '\n'; }));
  files.push_back(emit(cfg.out, "cumulative.csv",
                       [&](std::ostream& s) { write_cumulative_csv(s, rs, cfg.pipeline.sigma_target); }));
  files.push_back(emit(cfg.out, "regimes.csv", [&](std::ostream& s) { write_regimes_csv(s, report); }));
  if (cfg.save_models) {
    fs::create_directories(cfg.out / "models");
    for (const auto& [name, bundles] : result.bundles)
      for (std::size_t b = 0; b < bundles.size(); ++b) {
        const fs::path rel = fs::path("models") / (name + "_block" + std::to_string(b) + ".json");
        save_bundle(cfg.out / rel, bundles[b]);
        files.push_back(rel);
      }
  }
  json extra = {{"command", "run"},
                {"config", config_json(cfg)},
                {"inputs",
                 {{"prices", {{"path", cfg.prices.string()}, {"sha256", sha256_hex(cfg.prices)}}},
                  {"vix", {{"path", cfg.vix.string()}, {"sha256", sha256_hex(cfg.vix)}}}}},
                {"training", training_manifest(result)}};
  write_manifest(cfg.out, files, extra);
  return kExitOk;
}

int cmd_report(const Overrides& o) {
  RunConfig cfg = resolve_config(o);
  if (cfg.vix.empty() || !fs::is_regular_file(cfg.vix)) throw ConfigError("report needs an existing vix file");
  const auto rs = read_report_series(cfg.out / "returns.csv", cfg.out / "ndcg.csv");
  const auto states =
      classify_market_state(load_vix(cfg.vix.string()), cfg.pipeline.vix_window, cfg.pipeline.vix_threshold);
  const auto report = build_report(rs, states, cfg.pipeline.sigma_target);
  std::vector<fs::path> files;
  files.push_back(emit(cfg.out, "report.json", [&](std::ostream& s) { s << report.dump(2) << '\n'; }));
  files.push_back(emit(cfg.out, "cumulative.csv",
                       [&](std::ostream& s) { write_cumulative_csv(s, rs, cfg.pipeline.sigma_target); }));
  files.push_back(emit(cfg.out, "regimes.csv", [&](std::ostream& s) { write_regimes_csv(s, report); }));
  write_manifest(cfg.out, files, json::object());
  return kExitOk;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("xsrank");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("XSRANK_LOG")) {
    const std::string v(env);
    const auto level = spdlog::level::from_str(v);
    // from_str maps anything unknown to "off"
    if (level == spdlog::level::off && v != "off")
      throw ConfigError("XSRANK_LOG must be one of trace, debug, info, warning, error, critical, off");
    spdlog::set_level(level);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware learning-to-rank for cross-sectional currency momentum"};
  app.require_subcommand(1);
  Overrides synth_o, run_o, report_o;
  auto* synth = app.add_subcommand("synth", "write a synthetic prices.csv and vix.csv");
  add_common(synth, synth_o, false);
  auto* run = app.add_subcommand("run", "walk-forward training, backtest and report");
  add_common(run, run_o, true);
  auto* report = app.add_subcommand("report", "rebuild report.json from returns.csv and ndcg.csv");
  add_common(report, report_o, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    setup_logging();
    if (*synth) return cmd_synth(synth_o);
    if (*run) return cmd_run(run_o);
    if (*report) return cmd_report(report_o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ModelError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const TrainingError& e) {
    std::cerr << "training failure: " << e.what() << '\n';
    return kExitTraining;
  } catch (const NumericError& e) {
    std::cerr << "training failure: " << e.what() << '\n';
    return kExitTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
