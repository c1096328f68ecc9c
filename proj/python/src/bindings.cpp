#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "xsrank/artifacts.hpp"
#include "xsrank/config.hpp"
#include "xsrank/context_transformer.hpp"
#include "xsrank/strategy.hpp"
#include "xsrank/synthetic.hpp"

namespace py = pybind11;
using namespace xsrank;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

py::array_t<double> to_array(std::span<const double> v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> to_array(const nk::Tensor& t) {
  if (t.shape().size() != 2) return to_array(t.values());
  py::array_t<double> out({static_cast<py::ssize_t>(t.rows()), static_cast<py::ssize_t>(t.cols())});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

nk::Tensor to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  return nk::Tensor::matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), to_vector(a));
}

Side parse_side(const std::string& s) {
  if (s == "long") return Side::Long;
  if (s == "short") return Side::Short;
  throw UsageError("side must be 'long' or 'short'");
}

std::vector<std::string> iso(const std::vector<Date>& dates) {
  std::vector<std::string> out;
  out.reserve(dates.size());
  for (const auto d : dates) out.push_back(format_date(d));
  return out;
}

py::object opt(const std::optional<double>& v) { return v ? py::cast(*v) : py::none(); }

py::dict summary_dict(const PerformanceSummary& s) {
  py::dict d;
  d["observations"] = s.observations;
  d["expected_return"] = s.expected_return;
  d["volatility"] = s.volatility;
  d["sharpe"] = opt(s.sharpe);
  d["downside_deviation"] = s.downside_deviation;
  d["max_drawdown"] = s.max_drawdown;
  d["sortino"] = opt(s.sortino);
  d["calmar"] = opt(s.calmar);
  d["hit_rate"] = s.hit_rate;
  d["ap_al"] = opt(s.ap_al);
  return d;
}

std::string setting_text(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
  if (py::isinstance<py::str>(v)) return v.cast<std::string>();
  if (py::isinstance<py::float_>(v)) return format_double(v.cast<double>());
  if (py::isinstance<py::int_>(v)) return py::str(v).cast<std::string>();
  std::string out;
  for (const auto& item : v) out += (out.empty() ? "" : ",") + setting_text(item);
  return out;
}

py::dict run(const std::filesystem::path& prices, const std::filesystem::path& vix,
             const std::optional<std::vector<std::string>>& models, const py::dict& settings) {
  RunConfig cfg;
  for (const auto& [k, v] : settings) apply_setting(cfg, py::str(k).cast<std::string>(), setting_text(v));
  cfg.prices = prices;
  cfg.vix = vix;
  if (models) cfg.models = *models;
  cfg.validate();
  cfg.require_inputs();

  PricePanel panel = load_price_panel(cfg.prices.string());
  if (!cfg.universe.empty()) panel = select_assets(panel, cfg.universe);
  const VixSeries v = load_vix(cfg.vix.string());
  const auto ids = cfg.model_ids();

  PipelineResult result;
  {
    py::gil_scoped_release release;
    result = run_pipeline(panel, v, ids, cfg.pipeline);
  }
  std::vector<ReportSeries> rs;
  for (const auto& s : result.series) rs.push_back(report_series(s, result.frame.dates));

  py::dict series;
  for (const auto& s : rs) {
    py::dict d;
    d["dates"] = iso(s.dates);
    d["returns"] = to_array(s.returns);
    d["ndcg_long"] = to_array(s.ndcg_long);
    d["ndcg_short"] = to_array(s.ndcg_short);
    series[py::str(s.model)] = d;
  }
  py::dict bundles;
  for (const auto& [name, list] : result.bundles) bundles[py::str(name)] = py::cast(list);
  py::dict out;
  out["report"] = build_report(rs, result.states, cfg.pipeline.sigma_target).dump();
  out["training"] = training_manifest(result).dump();
  out["series"] = series;
  out["bundles"] = bundles;
  out["risk_off_fraction"] = result.states.risk_off_fraction();
  return out;
}

std::vector<double> bundle_scores(const ScorerBundle& b, const Array& x) {
  const auto m = to_matrix(x);
  if (m.cols() != kFeatureCount) throw ShapeError("features must have " + std::to_string(kFeatureCount) + " columns");
  std::vector<FeatureRow> rows(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    rows[i].asset = i;
    for (std::size_t c = 0; c < kFeatureCount; ++c) rows[i].x[c] = m(i, c);
  }
  return score_cross_section(b.base, rows);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Context-aware learning to rank for cross-sectional momentum";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<ModelError>(m, "ModelError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<MetricError>(m, "MetricError", base.ptr());

  m.def("model_names", &all_model_names);
  m.def("feature_names", [] {
    std::vector<std::string> out;
    for (const auto n : feature_names()) out.emplace_back(n);
    return out;
  });

  m.def(
      "synthetic_panel",
      [](std::size_t assets, std::size_t days, double momentum, double context, std::uint64_t seed) {
        SyntheticSpec s;
        s.n_assets = assets;
        s.n_days = days;
        s.momentum_strength = momentum;
        s.context_strength = context;
        s.seed = seed;
        const auto mk = make_synthetic_panel(s);
        py::array_t<double> rates({static_cast<py::ssize_t>(mk.prices.n_dates()),
                                   static_cast<py::ssize_t>(mk.prices.n_assets())});
        std::copy(mk.prices.rates.begin(), mk.prices.rates.end(), rates.mutable_data());
        py::dict d;
        d["dates"] = iso(mk.prices.dates);
        d["assets"] = mk.prices.assets;
        d["rates"] = rates;
        d["vix_dates"] = iso(mk.vix.dates);
        d["vix"] = to_array(mk.vix.close);
        return d;
      },
      py::arg("assets") = 31, py::arg("days") = 2609, py::arg("momentum") = 0.3, py::arg("context") = 0.0,
      py::arg("seed") = 0);

  m.def(
      "write_synthetic",
      [](const std::filesystem::path& dir, std::size_t assets, std::size_t days, double momentum, double context,
         std::uint64_t seed) {
        SyntheticSpec s{assets, days, momentum, context, seed};
        s.validate();
        const auto mk = make_synthetic_panel(s);
        std::filesystem::create_directories(dir);
        std::ostringstream p, v;
        write_price_panel(p, mk.prices);
        write_vix(v, mk.vix);
        write_text(dir / "prices.csv", p.str());
        write_text(dir / "vix.csv", v.str());
      },
      py::arg("dir"), py::arg("assets") = 31, py::arg("days") = 2609, py::arg("momentum") = 0.3,
      py::arg("context") = 0.0, py::arg("seed") = 0);

  m.def(
      "ndcg_at_k",
      [](const std::vector<int>& labels, const std::vector<double>& scores, std::size_t k, const std::string& side) {
        return ndcg_at_k(labels, scores, k, parse_side(side));
      },
      py::arg("labels"), py::arg("scores"), py::arg("k") = 3, py::arg("side") = "long");

  m.def(
      "loss",
      [](const std::string& kind, const std::vector<double>& labels, const std::vector<double>& scores) {
        const auto lv = evaluate_loss(loss_kind_from_string(kind), labels, scores);
        return py::make_tuple(lv.value, to_array(lv.grad));
      },
      py::arg("kind"), py::arg("labels"), py::arg("scores"),
      "Loss value and gradient w.r.t. scores; kind is pairwise, listnet, listmle or mse.");

  m.def("decile_labels", [](const std::vector<double>& v) { return decile_labels(v); });
  m.def("positional_encoding", [](std::size_t rows, std::size_t d) { return to_array(positional_encoding(rows, d)); });
  m.def("scaled_dot_attention", [](const Array& q, const Array& k, const Array& v) {
    return to_array(scaled_dot_attention(to_matrix(q), to_matrix(k), to_matrix(v)));
  });

  m.def(
      "strategy_return",
      [](const std::vector<int>& signal, const std::vector<double>& vol, const std::vector<double>& r, double target) {
        return strategy_return(signal, vol, r, target);
      },
      py::arg("signal"), py::arg("vol"), py::arg("next_returns"), py::arg("sigma_target") = 0.15);
  m.def(
      "rescale_to_target",
      [](const std::vector<double>& r, double target) { return to_array(rescale_to_target(r, target)); },
      py::arg("returns"), py::arg("sigma_target") = 0.15);
  m.def("performance_summary", [](const std::vector<double>& r) { return summary_dict(performance_summary(r)); });
  m.def(
      "risk_off",
      [](const std::vector<std::string>& dates, const std::vector<double>& close, int window, double threshold) {
        VixSeries v;
        for (const auto& d : dates) v.dates.push_back(parse_date(d));
        v.close = close;
        const auto s = classify_market_state(v, window, threshold);
        py::dict out;
        out["dates"] = iso(s.dates);
        std::vector<bool> flags;
        for (const auto st : s.states) flags.push_back(st == MarketState::RiskOff);
        out["risk_off"] = flags;
        return out;
      },
      py::arg("dates"), py::arg("close"), py::arg("window") = 60, py::arg("threshold") = 5.0);

  py::class_<ScorerBundle>(m, "Bundle")
      .def_readonly("model", &ScorerBundle::model)
      .def_property_readonly("has_context", [](const ScorerBundle& b) { return b.context.has_value(); })
      .def_property_readonly("train_window",
                             [](const ScorerBundle& b) -> py::object {
                               if (!b.train_window) return py::none();
                               return py::make_tuple(format_date(b.train_window->first),
                                                     format_date(b.train_window->last));
                             })
      .def("save", [](const ScorerBundle& b, const std::filesystem::path& p) { save_bundle(p, b); })
      .def("to_json", [](const ScorerBundle& b) { return to_json(b).dump(); })
      .def("base_scores", &bundle_scores, py::arg("features"),
           "Base-ranker scores for one cross-section of raw (un-normalised) feature rows.");
  m.def("load_bundle", [](const std::filesystem::path& p) { return load_bundle(p); });

  m.def("_run", &run, py::arg("prices"), py::arg("vix"), py::arg("models") = py::none(),
        py::arg("settings") = py::dict());
}
