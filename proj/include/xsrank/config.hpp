#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xsrank/pipeline.hpp"
#include "xsrank/synthetic.hpp"

namespace xsrank {

/// Everything a `run`, `synth` or `report` invocation needs.
struct RunConfig {
  std::filesystem::path prices;
  std::filesystem::path vix;
  std::filesystem::path out = "xsrank-out";
  std::vector<std::string> models = all_model_names();
  std::vector<std::string> universe;  // empty: every asset in the file
  bool save_models = true;
  PipelineSettings pipeline;
  SyntheticSpec synth;

  /// Checks invariants that do not need the file system.
  void validate() const;
  /// Checks that the input files exist.
  void require_inputs() const;
  std::vector<ModelId> model_ids() const;
};

/// `key = value` lines; `#` starts a comment. Relative paths are resolved
/// against `base_dir`. Unknown keys and malformed values are config errors.
RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Applies one setting; used by the parser and by command-line overrides.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir = {});

std::vector<std::string> split_list(const std::string& text);

/// Every key in canonical form with its current value, for the manifest.
std::map<std::string, std::string> describe(const RunConfig& cfg);

}  // namespace xsrank
