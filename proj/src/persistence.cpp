#include "xsrank/persistence.hpp"

#include <fstream>

namespace xsrank {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json hyper_to_json(const HyperParams& h) {
  return {{"dropout_rate", h.dropout_rate}, {"learning_rate", h.learning_rate}, {"hidden_width", h.hidden_width},
          {"d_fc", h.d_fc},                 {"d_ff", h.d_ff},                   {"n_layers", h.n_layers},
          {"n_heads", h.n_heads}};
}

HyperParams hyper_from_json(const json& j) {
  HyperParams h;
  h.dropout_rate = j.at("dropout_rate").get<double>();
  h.learning_rate = j.at("learning_rate").get<double>();
  h.hidden_width = j.at("hidden_width").get<std::size_t>();
  h.d_fc = j.at("d_fc").get<std::size_t>();
  h.d_ff = j.at("d_ff").get<std::size_t>();
  h.n_layers = j.at("n_layers").get<std::size_t>();
  h.n_heads = j.at("n_heads").get<std::size_t>();
  return h;
}

json vector_json(const FeatureVector& v) { return json(std::vector<double>(v.begin(), v.end())); }

FeatureVector feature_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != kFeatureCount) throw ModelError("feature scaling has the wrong width");
  FeatureVector out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

template <class F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed model file: ") + e.what());
  } catch (const ShapeError& e) {
    throw ModelError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace

json tensor_to_json(const nk::Tensor& t) {
  return {{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

nk::Tensor tensor_from_json(const json& j) {
  return nk::Tensor(j.at("shape").get<std::vector<std::size_t>>(), j.at("values").get<std::vector<double>>());
}

json to_json(const BaseRanker& m) {
  json j;
  j["kind"] = std::string(to_string(m.spec.kind));
  j["hidden_width"] = m.spec.hidden_width;
  j["dropout_rate"] = m.spec.dropout_rate;
  j["learning_rate"] = m.spec.learning_rate;
  j["seed"] = m.spec.seed;
  j["zscore"] = {{"mean", vector_json(m.zscore.mean)}, {"scale", vector_json(m.zscore.scale)}};
  if (m.network) {
    json net;
    net["inputs"] = m.network->inputs();
    net["width"] = m.network->width();
    net["activation"] = m.network->activation() == Activation::Tanh ? "tanh" : "relu";
    json params = json::array();
    for (const auto& t : m.network->params()) params.push_back(tensor_to_json(t));
    net["params"] = params;
    j["network"] = net;
  }
  return j;
}

BaseRanker base_ranker_from_json(const json& j) {
  return guarded([&] {
    BaseRanker m;
    m.spec.kind = scorer_kind_from_string(j.at("kind").get<std::string>());
    m.spec.hidden_width = j.at("hidden_width").get<std::size_t>();
    m.spec.dropout_rate = j.at("dropout_rate").get<double>();
    m.spec.learning_rate = j.at("learning_rate").get<double>();
    m.spec.seed = j.at("seed").get<std::uint64_t>();
    m.zscore.mean = feature_vector(j.at("zscore").at("mean"));
    m.zscore.scale = feature_vector(j.at("zscore").at("scale"));
    if (j.contains("network")) {
      const auto& net = j.at("network");
      const auto act = net.at("activation").get<std::string>() == "tanh" ? Activation::Tanh : Activation::Relu;
      auto mlp = MlpNetwork::zeros(net.at("inputs").get<std::size_t>(), net.at("width").get<std::size_t>(), act);
      const auto& params = net.at("params");
      if (params.size() != mlp.params().size()) throw ModelError("network parameter count mismatch");
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto t = tensor_from_json(params[i]);
        if (!t.same_shape(mlp.params()[i])) throw ModelError("network parameter shape mismatch");
        mlp.params()[i] = std::move(t);
      }
      m.network = std::move(mlp);
    } else if (is_neural(m.spec.kind)) {
      throw ModelError("neural scorer saved without parameters");
    }
    return m;
  });
}

json to_json(const ContextModel& m) {
  json j;
  j["d_model"] = m.spec.d_model;
  j["d_ff"] = m.spec.d_ff;
  j["n_layers"] = m.spec.n_layers;
  j["n_heads"] = m.spec.n_heads;
  j["dropout_rate"] = m.spec.dropout_rate;
  j["learning_rate"] = m.spec.learning_rate;
  j["loss"] = std::string(to_string(m.spec.loss));
  j["seed"] = m.spec.seed;
  j["input_width"] = m.params.input_width;
  j["positional"] = m.params.positional;
  json params = json::array();
  for (const auto* t : m.params.tensors()) params.push_back(tensor_to_json(*t));
  j["params"] = params;
  return j;
}

ContextModel context_model_from_json(const json& j) {
  return guarded([&] {
    ContextModel m;
    m.spec.d_model = j.at("d_model").get<std::size_t>();
    m.spec.d_ff = j.at("d_ff").get<std::size_t>();
    m.spec.n_layers = j.at("n_layers").get<std::size_t>();
    m.spec.n_heads = j.at("n_heads").get<std::size_t>();
    m.spec.dropout_rate = j.at("dropout_rate").get<double>();
    m.spec.learning_rate = j.at("learning_rate").get<double>();
    m.spec.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    m.spec.seed = j.at("seed").get<std::uint64_t>();
    m.params = EncoderParams::init(m.spec, j.at("input_width").get<std::size_t>(), nk::Rng(0));
    m.params.positional = j.at("positional").get<bool>();
    const auto& params = j.at("params");
    auto slots = m.params.tensors();
    if (params.size() != slots.size()) throw ModelError("encoder parameter count mismatch");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      auto t = tensor_from_json(params[i]);
      if (!t.same_shape(*slots[i])) throw ModelError("encoder parameter shape mismatch");
      *slots[i] = std::move(t);
    }
    return m;
  });
}

json to_json(const ScorerBundle& b) {
  json j;
  j["format"] = kFormatVersion;
  j["model"] = b.model;
  j["base"] = to_json(b.base);
  j["base_hyper"] = hyper_to_json(b.base_hyper);
  if (b.context) {
    j["context"] = to_json(*b.context);
    j["context_hyper"] = hyper_to_json(b.context_hyper);
  }
  if (b.train_window)
    j["train_window"] = {{"first", format_date(b.train_window->first)}, {"last", format_date(b.train_window->last)}};
  return j;
}

ScorerBundle bundle_from_json(const json& j) {
  return guarded([&] {
    if (j.at("format").get<int>() != kFormatVersion) throw ModelError("unsupported model file version");
    ScorerBundle b;
    b.model = j.at("model").get<std::string>();
    b.base = base_ranker_from_json(j.at("base"));
    b.base_hyper = hyper_from_json(j.at("base_hyper"));
    if (j.contains("context")) {
      b.context = context_model_from_json(j.at("context"));
      b.context_hyper = hyper_from_json(j.at("context_hyper"));
    }
    if (j.contains("train_window")) {
      const auto& w = j.at("train_window");
      try {
        b.train_window = DateRange{parse_date(w.at("first").get<std::string>()), parse_date(w.at("last").get<std::string>())};
      } catch (const DataError& e) {
        throw ModelError(std::string("bad train window: ") + e.what());
      }
    }
    return b;
  });
}

void save_bundle(const std::filesystem::path& path, const ScorerBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file " + path.string());
  out << to_json(bundle).dump(1) << '\n';
}

ScorerBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ModelError("malformed model file " + path.string() + ": " + e.what());
  }
  return bundle_from_json(j);
}

}  // namespace xsrank
