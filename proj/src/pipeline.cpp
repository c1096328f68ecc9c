#include "xsrank/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace xsrank {

using nlohmann::json;

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  workers = std::clamp<std::size_t>(workers, 1, n);
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    auto work = [&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
          failed = true;
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string base_name(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::Random: return "Rand";
    case ScorerKind::MacdHeuristic: return "Baz";
    case ScorerKind::MlpRegress: return "MLP";
    case ScorerKind::PairwiseNet: return "PW";
    case ScorerKind::ListMleNet: return "ML";
    case ScorerKind::ListNetNet: return "LN";
  }
  return "?";
}

std::vector<std::string> all_model_names() {
  return {"Rand", "Baz", "MLP", "PW", "ML", "LN", "PW+P", "PW+L", "ML+P", "ML+L", "LN+P", "LN+L"};
}

ModelId parse_model(std::string_view name) {
  ModelId id;
  id.name = std::string(name);
  std::string_view base = name;
  if (const auto plus = name.find('+'); plus != std::string_view::npos) {
    base = name.substr(0, plus);
    const auto suffix = name.substr(plus + 1);
    if (suffix == "P")
      id.context = LossKind::Pairwise;
    else if (suffix == "L")
      id.context = LossKind::ListNet;
    else
      throw ConfigError("unknown context variant in model '" + id.name + "' (expected +P or +L)");
  }
  bool found = false;
  for (const auto k : {ScorerKind::Random, ScorerKind::MacdHeuristic, ScorerKind::MlpRegress, ScorerKind::PairwiseNet,
                       ScorerKind::ListMleNet, ScorerKind::ListNetNet}) {
    if (base_name(k) == base) {
      id.base = k;
      found = true;
    }
  }
  if (!found) throw ConfigError("unknown model '" + id.name + "'");
  if (id.context && !(id.base == ScorerKind::PairwiseNet || id.base == ScorerKind::ListMleNet ||
                      id.base == ScorerKind::ListNetNet))
    throw ConfigError("context variants exist only for PW, ML and LN (got '" + id.name + "')");
  return id;
}

SearchSpace PipelineSettings::base_space(ScorerKind kind) const {
  if (const auto it = base_spaces.find(kind); it != base_spaces.end()) return it->second;
  return SearchSpace::for_scorer(kind);
}

void PipelineSettings::validate() const {
  if (k == 0 || k > m) throw ConfigError("need 0 < k <= m");
  if (!(sigma_target > 0.0)) throw ConfigError("sigma_target must be positive");
  if (workers == 0) throw ConfigError("workers must be positive");
  if (block_years <= 0) throw ConfigError("block_years must be positive");
  if (vix_window <= 0) throw ConfigError("vix_window must be positive");
  train.validate();
  context_space.validate();
  for (const auto& [kind, space] : base_spaces) space.validate();
}

ModelSeries backtest(const ScorerBundle& bundle, const FeatureFrame& frame, std::span<const DateSlice> slices,
                     std::size_t m, std::size_t k, double sigma_target) {
  ModelSeries out;
  out.model = bundle.model;
  ContextScorer scorer;
  if (bundle.context) {
    const auto* params = &bundle.context->params;
    scorer = [params](const ContextSublist& s) { return rerank(*params, s); };
  }
  for (const auto& s : slices) {
    const auto rows = frame.rows_of(s);
    const auto scores = score_cross_section(bundle.base, rows);
    auto d = bundle.context ? select_portfolio_context(rows, scores, scorer, bundle.base.zscore, m, k)
                            : select_portfolio_baseline(rows, scores, k);
    std::vector<int> labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = rows[i].label;
    out.dates.push_back(s.date);
    out.returns.push_back(strategy_return(d, rows, sigma_target));
    out.ndcg_long.push_back(ndcg_of_order(labels, d.long_order, k, Side::Long));
    out.ndcg_short.push_back(ndcg_of_order(labels, d.short_order, k, Side::Short));
    out.decisions.push_back(std::move(d));
  }
  return out;
}

namespace {

std::uint64_t job_seed(std::uint64_t seed, std::string_view what, std::size_t block) {
  return nk::Rng(seed).split(what).split(block).next_u64();
}

void append(ModelSeries& into, ModelSeries&& part) {
  auto move_all = [](auto& dst, auto& src) { dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end())); };
  move_all(into.dates, part.dates);
  move_all(into.returns, part.returns);
  move_all(into.ndcg_long, part.ndcg_long);
  move_all(into.ndcg_short, part.ndcg_short);
  move_all(into.decisions, part.decisions);
}

}  // namespace

PipelineResult run_pipeline(const PricePanel& prices, const VixSeries& vix, const std::vector<ModelId>& models,
                            const PipelineSettings& settings) {
  settings.validate();
  if (models.empty()) throw ConfigError("no models requested");
  for (std::size_t i = 0; i < models.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (models[i].name == models[j].name) throw ConfigError("model '" + models[i].name + "' requested twice");

  PipelineResult res;
  res.frame = build_feature_frame(prices, build_return_panel(prices, settings.risk), settings.frame);
  res.states = classify_market_state(vix, settings.vix_window, settings.vix_threshold);
  res.blocks = make_walk_forward_plan(prices.dates, settings.block_years);
  const std::size_t nb = res.blocks.size();
  spdlog::info("{} feature rows over {} dates; {} walk-forward blocks", res.frame.rows.size(), res.frame.slices.size(),
               nb);

  std::vector<std::vector<DateSlice>> train(nb), test(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    train[b] = training_slices(res.frame, res.blocks[b].train);
    test[b] = slices_in(res.frame, res.blocks[b].test);
    if (train[b].size() < 2)
      throw DataError("walk-forward block " + std::to_string(b) + " (" + format_date(res.blocks[b].train.first) +
                      " .. " + format_date(res.blocks[b].train.last) + ") has too little training data");
  }

  // Stage one: every distinct base ranker per block.
  std::vector<ScorerKind> kinds;
  for (const auto& m : models)
    if (std::find(kinds.begin(), kinds.end(), m.base) == kinds.end()) kinds.push_back(m.base);
  std::vector<std::optional<SearchedBase>> bases(kinds.size() * nb);
  parallel_for(bases.size(), settings.workers, [&](std::size_t j) {
    const auto kind = kinds[j / nb];
    const std::size_t b = j % nb;
    TrainConfig cfg = settings.train;
    cfg.seed = job_seed(settings.seed, base_name(kind), b);
    spdlog::info("training {} on block {}", base_name(kind), b);
    const auto space = is_neural(kind) ? settings.base_space(kind) : SearchSpace{};
    bases[j] = search_base_ranker(kind, space, res.frame, train[b], cfg, 1);
  });
  auto base_of = [&](ScorerKind kind, std::size_t b) -> const SearchedBase& {
    const auto i = static_cast<std::size_t>(std::find(kinds.begin(), kinds.end(), kind) - kinds.begin());
    return *bases[i * nb + b];
  };

  // Stage two: context re-rankers on top of their frozen bases.
  std::vector<const ModelId*> ctx;
  for (const auto& m : models)
    if (m.context) ctx.push_back(&m);
  std::vector<std::optional<SearchedContext>> contexts(ctx.size() * nb);
  parallel_for(contexts.size(), settings.workers, [&](std::size_t j) {
    const auto& id = *ctx[j / nb];
    const std::size_t b = j % nb;
    TrainConfig cfg = settings.train;
    cfg.seed = job_seed(settings.seed, id.name, b);
    spdlog::info("training {} on block {}", id.name, b);
    contexts[j] = search_context_model(base_of(id.base, b).trained.model, *id.context, settings.context_space,
                                       res.frame, train[b], settings.m, cfg, 1);
  });

  for (std::size_t j = 0; j < bases.size(); ++j) {
    const auto& sb = *bases[j];
    res.training.push_back({base_name(kinds[j / nb]), j % nb, job_seed(settings.seed, base_name(kinds[j / nb]), j % nb),
                            sb.hyper, sb.trained.trace, sb.search.losses});
  }
  for (std::size_t j = 0; j < contexts.size(); ++j) {
    const auto& sc = *contexts[j];
    res.training.push_back({ctx[j / nb]->name, j % nb, job_seed(settings.seed, ctx[j / nb]->name, j % nb), sc.hyper,
                            sc.trained.trace, sc.search.losses});
  }

  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const auto& id = models[mi];
    auto& list = res.bundles[id.name];
    list.clear();
    for (std::size_t b = 0; b < nb; ++b) {
      ScorerBundle bundle;
      bundle.model = id.name;
      bundle.train_window = res.blocks[b].train;
      const auto& base = base_of(id.base, b);
      bundle.base = base.trained.model;
      bundle.base_hyper = base.hyper;
      if (id.context) {
        const auto ci = static_cast<std::size_t>(std::find(ctx.begin(), ctx.end(), &id) - ctx.begin());
        const auto& c = *contexts[ci * nb + b];
        bundle.context = c.trained.model;
        bundle.context_hyper = c.hyper;
      }
      list.push_back(std::move(bundle));
    }
  }

  res.series.resize(models.size());
  parallel_for(models.size(), settings.workers, [&](std::size_t mi) {
    const auto& id = models[mi];
    ModelSeries all;
    all.model = id.name;
    for (std::size_t b = 0; b < nb; ++b)
      append(all, backtest(res.bundles.at(id.name)[b], res.frame, test[b], settings.m, settings.k,
                           settings.sigma_target));
    res.series[mi] = std::move(all);
  });
  return res;
}

ReportSeries report_series(const ModelSeries& s, const std::vector<Date>& dates) {
  ReportSeries r;
  r.model = s.model;
  for (const auto t : s.dates) r.dates.push_back(dates.at(t));
  r.returns = s.returns;
  r.ndcg_long = s.ndcg_long;
  r.ndcg_short = s.ndcg_short;
  return r;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json summary_json(const PerformanceSummary& s) {
  return {{"observations", s.observations},
          {"expected_return", s.expected_return},
          {"volatility", s.volatility},
          {"sharpe", opt(s.sharpe)},
          {"downside_deviation", s.downside_deviation},
          {"max_drawdown", s.max_drawdown},
          {"sortino", opt(s.sortino)},
          {"calmar", opt(s.calmar)},
          {"hit_rate", s.hit_rate},
          {"ap_al", opt(s.ap_al)}};
}

json regime_json(const std::optional<RegimeStats>& r) {
  if (!r) return nullptr;
  return {{"count", r->count}, {"sharpe", opt(r->sharpe)}, {"mean_ndcg", opt(r->mean_ndcg)}};
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

json build_report(const std::vector<ReportSeries>& series, const MarketStateSeries& states, double sigma_target) {
  json report;
  report["sigma_target"] = sigma_target;
  report["risk_off_fraction"] = states.states.empty() ? json(nullptr) : json(states.risk_off_fraction());
  json models = json::array();
  for (const auto& s : series) {
    json m;
    m["model"] = s.model;
    m["observations"] = s.returns.size();
    if (!s.dates.empty()) {
      m["first_date"] = format_date(s.dates.front());
      m["last_date"] = format_date(s.dates.back());
    }
    const double nl = mean_of(s.ndcg_long), ns = mean_of(s.ndcg_short);
    m["ndcg"] = {{"long", nl}, {"short", ns}, {"mean", 0.5 * (nl + ns)}};
    if (s.returns.size() >= 2) {
      m["raw"] = summary_json(performance_summary(s.returns));
      try {
        const auto scaled = rescale_to_target(s.returns, sigma_target);
        m["rescaled"] = summary_json(performance_summary(scaled));
        std::vector<double> ndcg(s.returns.size());
        for (std::size_t i = 0; i < ndcg.size(); ++i) ndcg[i] = 0.5 * (s.ndcg_long[i] + s.ndcg_short[i]);
        const auto rb = regime_breakdown(s.dates, scaled, ndcg, states);
        m["regimes"] = {{"normal", regime_json(rb.normal)}, {"risk_off", regime_json(rb.risk_off)},
                        {"excluded", rb.excluded}};
      } catch (const NumericError& e) {
        spdlog::warn("{}: {}", s.model, e.what());
        m["rescaled"] = nullptr;
      }
    }
    models.push_back(std::move(m));
  }
  report["models"] = std::move(models);
  return report;
}

}  // namespace xsrank
