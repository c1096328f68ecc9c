#include "xsrank/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "xsrank/optim.hpp"

namespace xsrank {

namespace cr = std::chrono;

std::vector<WalkForwardBlock> make_walk_forward_plan(std::span<const Date> dates, int block_years) {
  if (dates.empty()) throw DataError("walk-forward plan needs dates");
  if (block_years <= 0) throw ConfigError("block length must be positive");
  if (!std::is_sorted(dates.begin(), dates.end())) throw DataError("dates must be increasing");
  const int y0 = static_cast<int>(dates.front().year());
  const int y1 = static_cast<int>(dates.back().year());
  if (y1 - y0 + 1 < 2 * block_years)
    throw ConfigError("walk-forward needs at least " + std::to_string(2 * block_years) + " calendar years, got " +
                      std::to_string(y1 - y0 + 1));
  std::vector<WalkForwardBlock> plan;
  for (int start = y0 + block_years; start <= y1; start += block_years) {
    WalkForwardBlock b;
    b.train = {cr::year{start - block_years} / cr::January / 1, cr::year{start - 1} / cr::December / 31};
    const int end = std::min(start + block_years - 1, y1);
    b.test = {cr::year{start} / cr::January / 1, cr::year{end} / cr::December / 31};
    plan.push_back(b);
  }
  return plan;
}

std::vector<DateSlice> training_slices(const FeatureFrame& frame, const DateRange& range) {
  std::vector<DateSlice> out;
  for (const auto& s : frame.slices) {
    if (s.date + 1 >= frame.dates.size()) continue;
    if (range.contains(frame.dates[s.date]) && range.contains(frame.dates[s.date + 1])) out.push_back(s);
  }
  return out;
}

std::vector<DateSlice> slices_in(const FeatureFrame& frame, const DateRange& range) {
  std::vector<DateSlice> out;
  for (const auto& s : frame.slices)
    if (range.contains(frame.dates[s.date])) out.push_back(s);
  return out;
}

void TrainConfig::validate() const {
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience == 0) throw ConfigError("patience must be positive");
  if (patience >= max_epochs) throw ConfigError("patience must be smaller than max_epochs");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
}

FitTrace fit(Trainable& model, const TrainConfig& config) {
  config.validate();
  FitTrace trace;
  nk::Rng rng = nk::Rng(config.seed).split("epochs");
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    nk::Rng epoch_rng = rng.split(epoch);
    trace.train_loss.push_back(model.train_epoch(epoch_rng));
    const double v = model.validation_loss();
    trace.validation_loss.push_back(v);
    if (v < trace.best_validation_loss) {
      trace.best_validation_loss = v;
      trace.best_epoch = epoch;
      model.keep_best();
      stale = 0;
    } else if (++stale >= config.patience) {
      spdlog::debug("early stop at epoch {} (best {} at {})", epoch, trace.best_validation_loss, trace.best_epoch);
      break;
    }
  }
  if (trace.best_epoch == 0) throw TrainingError("validation loss never became finite");
  model.restore_best();
  return trace;
}

ChronoSplit chronological_split(std::span<const DateSlice> slices, double train_fraction) {
  if (slices.size() < 2) throw DataError("need at least two dates to split into train and validation");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(slices.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, slices.size() - 1);
  ChronoSplit s;
  s.train.assign(slices.begin(), slices.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(slices.begin() + static_cast<std::ptrdiff_t>(n_train), slices.end());
  return s;
}

namespace {

struct Batch {
  nk::Tensor x;
  std::vector<double> y;
};

class NetworkTrainable final : public Trainable {
 public:
  NetworkTrainable(MlpNetwork& net, LossKind loss, double dropout, double lr, std::vector<Batch> train,
                   std::vector<Batch> validation)
      : net_(net), loss_(loss), dropout_(dropout), adam_(lr), train_(std::move(train)),
        validation_(std::move(validation)), best_(net.params()) {}

  double train_epoch(nk::Rng& rng) override {
    std::vector<std::size_t> order(train_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    nk::Rng drop = rng.split("dropout");
    double total = 0.0;
    for (const auto i : order) {
      tape_.clear();
      const auto p = bind_leaves(tape_, net_.params());
      const auto scores = net_.forward(p, tape_.constant(train_[i].x), dropout_, drop, true);
      const auto loss = loss_on_tape(loss_, scores, train_[i].y);
      tape_.backward(loss);
      total += loss.value()[0];
      adam_.step(net_.params(), tape_.gradients(p));
    }
    return total / static_cast<double>(order.size());
  }

  double validation_loss() override {
    double total = 0.0;
    for (const auto& b : validation_) total += evaluate_loss(loss_, b.y, net_.predict(b.x)).value;
    return total / static_cast<double>(validation_.size());
  }

  void keep_best() override { best_ = net_.params(); }
  void restore_best() override { net_.params() = best_; }

 private:
  MlpNetwork& net_;
  LossKind loss_;
  double dropout_;
  nk::Adam adam_;
  std::vector<Batch> train_, validation_;
  std::vector<nk::Tensor> best_;
  nk::Tape tape_;
};

std::vector<Batch> make_batches(const FeatureFrame& frame, std::span<const DateSlice> slices, const ZScore& z,
                                LossKind loss) {
  std::vector<Batch> out;
  out.reserve(slices.size());
  for (const auto& s : slices) {
    const auto rows = frame.rows_of(s);
    Batch b{feature_matrix(rows, z), {}};
    b.y.reserve(rows.size());
    for (const auto& r : rows) b.y.push_back(loss == LossKind::Mse ? r.target : static_cast<double>(r.label));
    out.push_back(std::move(b));
  }
  return out;
}

using SublistPair = std::pair<ContextSublist, ContextSublist>;

class ContextTrainable final : public Trainable {
 public:
  ContextTrainable(EncoderParams& params, LossKind loss, double lr, std::vector<SublistPair> train,
                   std::vector<SublistPair> validation)
      : params_(params), loss_(loss), adam_(lr), train_(std::move(train)), validation_(std::move(validation)) {
    keep_best();
  }

  double train_epoch(nk::Rng& rng) override {
    std::vector<std::size_t> order(train_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    nk::Rng drop = rng.split("dropout");
    double total = 0.0;
    for (const auto i : order) {
      tape_.clear();
      const auto vars = bind(tape_, params_);
      const auto& [lo, sh] = train_[i];
      const auto s_long = encoder_forward(params_, vars, lo.features(), params_.dropout_rate, drop, true);
      const auto s_short = encoder_forward(params_, vars, sh.features(), params_.dropout_rate, drop, true);
      const auto loss = nk::add(loss_on_tape(loss_, s_long, lo.relevance()), loss_on_tape(loss_, s_short, sh.relevance()));
      tape_.backward(loss);
      total += loss.value()[0];
      adam_.step(params_.tensors(), tape_.gradients(vars.all));
    }
    return total / static_cast<double>(order.size());
  }

  double validation_loss() override {
    double total = 0.0;
    for (const auto& [lo, sh] : validation_) {
      total += evaluate_loss(loss_, lo.relevance(), rerank(params_, lo)).value;
      total += evaluate_loss(loss_, sh.relevance(), rerank(params_, sh)).value;
    }
    return total / static_cast<double>(validation_.size());
  }

  void keep_best() override {
    best_.clear();
    for (const auto* t : params_.tensors()) best_.push_back(*t);
  }
  void restore_best() override {
    const auto ts = params_.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) *ts[i] = best_[i];
  }

 private:
  EncoderParams& params_;
  LossKind loss_;
  nk::Adam adam_;
  std::vector<SublistPair> train_, validation_;
  std::vector<nk::Tensor> best_;
  nk::Tape tape_;
};

std::vector<DateSlice> gather_rows_check(std::span<const DateSlice> window) {
  if (window.empty()) throw DataError("training window has no dates");
  return {window.begin(), window.end()};
}

}  // namespace

TrainedBase train_model(const ScorerSpec& spec, const FeatureFrame& frame, std::span<const DateSlice> window,
                        const TrainConfig& config) {
  spec.validate();
  const auto slices = gather_rows_check(window);
  std::vector<FeatureRow> all;
  for (const auto& s : slices) {
    const auto r = frame.rows_of(s);
    all.insert(all.end(), r.begin(), r.end());
  }
  TrainedBase out{BaseRanker::untrained(spec, ZScore::fit(all)), {}};
  if (!is_neural(spec.kind)) return out;

  const auto loss = loss_for(spec.kind);
  const auto split = chronological_split(slices, config.train_fraction);
  NetworkTrainable t(*out.model.network, loss, spec.dropout_rate, spec.learning_rate,
                     make_batches(frame, split.train, out.model.zscore, loss),
                     make_batches(frame, split.validation, out.model.zscore, loss));
  out.trace = fit(t, config);
  return out;
}

TrainedContext train_context_stage(const BaseRanker& base, const FeatureFrame& frame,
                                   std::span<const DateSlice> window, std::size_t m, const EncoderSpec& spec,
                                   const TrainConfig& config) {
  spec.validate();
  if (m == 0) throw ConfigError("sublist length must be positive");
  std::vector<DateSlice> usable;
  for (const auto& s : gather_rows_check(window))
    if (s.size() >= m) usable.push_back(s);
  if (usable.empty()) throw DataError("every training date has fewer than " + std::to_string(m) + " assets");
  if (usable.size() < window.size())
    spdlog::warn("context training skips {} of {} dates with fewer than {} assets", window.size() - usable.size(),
                 window.size(), m);
  const auto split = chronological_split(usable, config.train_fraction);

  auto build = [&](const std::vector<DateSlice>& slices) {
    std::vector<SublistPair> out;
    out.reserve(slices.size());
    for (const auto& s : slices) {
      const auto rows = frame.rows_of(s);
      out.push_back(make_sublists(rows, score_cross_section(base, rows), m, base.zscore));
    }
    return out;
  };

  TrainedContext out{{spec, EncoderParams::init(spec, kFeatureCount, nk::Rng(spec.seed).split("context-init"))}, {}};
  ContextTrainable t(out.model.params, spec.loss, spec.learning_rate, build(split.train), build(split.validation));
  out.trace = fit(t, config);
  return out;
}

// ---------------------------------------------------------------------------

SearchSpace SearchSpace::for_scorer(ScorerKind kind) {
  SearchSpace s;
  s.dropout_rates = {0.0, 0.2, 0.4, 0.6, 0.8};
  switch (kind) {
    case ScorerKind::MlpRegress:
      s.hidden_widths = {16, 32, 64, 128, 256};
      s.learning_rates = {1e-7, 1e-6, 1e-5, 1e-4, 1e-3};
      break;
    case ScorerKind::ListNetNet:
      s.hidden_widths = {8, 16, 32, 64, 128};
      s.learning_rates = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
      break;
    case ScorerKind::ListMleNet:
    case ScorerKind::PairwiseNet:
      s.hidden_widths = {8, 16, 32, 64, 128};
      s.learning_rates = {1e-7, 1e-6, 1e-5, 1e-4, 1e-3};
      break;
    default:
      throw ConfigError("scorer kind '" + std::string(to_string(kind)) + "' has no hyperparameters");
  }
  s.d_fc = {16};
  s.d_ff = {16};
  s.n_layers = {1};
  return s;
}

SearchSpace SearchSpace::for_context() {
  SearchSpace s;
  s.dropout_rates = {0.0, 0.2, 0.4, 0.6, 0.8};
  s.learning_rates = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  s.hidden_widths = {16};
  s.d_fc = {16, 32, 64, 128, 256};
  s.d_ff = {16, 32, 64, 128, 256};
  s.n_layers = {1, 2, 3, 4};
  return s;
}

void SearchSpace::validate() const {
  if (dropout_rates.empty() || learning_rates.empty() || hidden_widths.empty() || d_fc.empty() || d_ff.empty() ||
      n_layers.empty())
    throw ConfigError("search grids must be non-empty");
  if (n_trials == 0) throw ConfigError("search needs at least one trial");
  if (n_heads == 0) throw ConfigError("head count must be positive");
}

std::vector<HyperParams> sample_trials(const SearchSpace& space, std::uint64_t seed) {
  space.validate();
  const nk::Rng root = nk::Rng(seed).split("search");
  std::vector<HyperParams> out;
  out.reserve(space.n_trials);
  for (std::size_t i = 0; i < space.n_trials; ++i) {
    nk::Rng r = root.split(i);
    auto pick = [&](const auto& grid) { return grid[r.below(grid.size())]; };
    HyperParams h;
    h.dropout_rate = pick(space.dropout_rates);
    h.learning_rate = pick(space.learning_rates);
    h.hidden_width = pick(space.hidden_widths);
    h.d_fc = pick(space.d_fc);
    h.d_ff = pick(space.d_ff);
    h.n_layers = pick(space.n_layers);
    h.n_heads = space.n_heads;
    out.push_back(h);
  }
  return out;
}

SearchResult hyperparameter_search(const SearchSpace& space, std::uint64_t seed,
                                   const std::function<double(const HyperParams&, std::size_t)>& evaluate,
                                   std::size_t workers) {
  SearchResult res;
  res.trials = sample_trials(space, seed);
  const std::size_t n = res.trials.size();
  res.losses.assign(n, std::numeric_limits<double>::infinity());

  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const double v = evaluate(res.trials[i], i);
        res.losses[i] = std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
      } catch (const NumericError& e) {
        spdlog::warn("trial {} diverged: {}", i, e.what());
      } catch (const TrainingError& e) {
        spdlog::warn("trial {} failed: {}", i, e.what());
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, n);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  res.best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (res.losses[i] < res.losses[res.best]) res.best = i;
  if (!std::isfinite(res.losses[res.best])) throw TrainingError("every search trial failed");
  return res;
}

SearchedBase search_base_ranker(ScorerKind kind, const SearchSpace& space, const FeatureFrame& frame,
                                std::span<const DateSlice> window, const TrainConfig& config, std::size_t workers) {
  if (!is_neural(kind)) {
    ScorerSpec spec;
    spec.kind = kind;
    spec.seed = config.seed;
    return {train_model(spec, frame, window, config), {}, {}};
  }
  std::vector<std::optional<TrainedBase>> models(space.n_trials);
  auto evaluate = [&](const HyperParams& h, std::size_t i) {
    ScorerSpec spec;
    spec.kind = kind;
    spec.hidden_width = h.hidden_width;
    spec.dropout_rate = h.dropout_rate;
    spec.learning_rate = h.learning_rate;
    spec.seed = nk::Rng(config.seed).split(i).next_u64();
    TrainConfig c = config;
    c.seed = spec.seed;
    auto t = train_model(spec, frame, window, c);
    const double loss = t.trace.best_validation_loss;
    models[i] = std::move(t);
    return loss;
  };
  auto res = hyperparameter_search(space, config.seed, evaluate, workers);
  return {std::move(*models[res.best]), res.trials[res.best], std::move(res)};
}

SearchedContext search_context_model(const BaseRanker& base, LossKind loss, const SearchSpace& space,
                                     const FeatureFrame& frame, std::span<const DateSlice> window, std::size_t m,
                                     const TrainConfig& config, std::size_t workers) {
  std::vector<std::optional<TrainedContext>> models(space.n_trials);
  const nk::Rng root = nk::Rng(config.seed).split("context-search");
  auto evaluate = [&](const HyperParams& h, std::size_t i) {
    EncoderSpec spec;
    spec.d_model = h.d_fc;
    spec.d_ff = h.d_ff;
    spec.n_layers = h.n_layers;
    spec.n_heads = h.n_heads;
    spec.dropout_rate = h.dropout_rate;
    spec.learning_rate = h.learning_rate;
    spec.loss = loss;
    spec.seed = root.split(i).next_u64();
    TrainConfig c = config;
    c.seed = spec.seed;
    auto t = train_context_stage(base, frame, window, m, spec, c);
    const double v = t.trace.best_validation_loss;
    models[i] = std::move(t);
    return v;
  };
  auto res = hyperparameter_search(space, root.split("grid").next_u64(), evaluate, workers);
  return {std::move(*models[res.best]), res.trials[res.best], std::move(res)};
}

}  // namespace xsrank
