#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "xsrank/training.hpp"

namespace xsrank {

/// A trained base ranker with its optional context re-ranker.
struct ScorerBundle {
  std::string model;  // e.g. "LN+P"
  BaseRanker base;
  HyperParams base_hyper;
  std::optional<ContextModel> context;
  HyperParams context_hyper;
  std::optional<DateRange> train_window;
};

nlohmann::json tensor_to_json(const nk::Tensor& t);
nk::Tensor tensor_from_json(const nlohmann::json& j);

nlohmann::json to_json(const BaseRanker& model);
BaseRanker base_ranker_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ContextModel& model);
ContextModel context_model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ScorerBundle& bundle);
ScorerBundle bundle_from_json(const nlohmann::json& j);

/// Doubles are written in shortest round-trip form, so loading restores every
/// parameter bit for bit.
void save_bundle(const std::filesystem::path& path, const ScorerBundle& bundle);
ScorerBundle load_bundle(const std::filesystem::path& path);

}  // namespace xsrank
