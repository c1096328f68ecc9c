#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xsrank/pipeline.hpp"

namespace xsrank {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

std::string sha256_hex(const std::filesystem::path& file);

/// date,model,return
void write_returns_csv(std::ostream& out, const std::vector<ReportSeries>& series);
/// date,model,side,ndcg<k>
void write_ndcg_csv(std::ostream& out, const std::vector<ReportSeries>& series, std::size_t k);
/// date,model,asset,signal,base_rank,context_rank (one row per asset and date)
void write_decisions_csv(std::ostream& out, const std::vector<ModelSeries>& series, const FeatureFrame& frame);
/// date,model,cumulative: compounded wealth of the volatility-rescaled series
void write_cumulative_csv(std::ostream& out, const std::vector<ReportSeries>& series, double sigma_target);
/// model,state,count,sharpe,mean_ndcg from a report built by build_report
void write_regimes_csv(std::ostream& out, const nlohmann::json& report);

/// Inverse of write_returns_csv + write_ndcg_csv; model order follows
/// first appearance in the returns file.
std::vector<ReportSeries> read_report_series(const std::filesystem::path& returns_csv,
                                             const std::filesystem::path& ndcg_csv);

/// Block boundaries, winning hyperparameters, validation curves and seeds.
nlohmann::json training_manifest(const PipelineResult& result);

/// {"files": [{path, bytes, sha256}...]} plus `extra`, with paths relative to `dir`.
nlohmann::json file_manifest(const std::filesystem::path& dir, const std::vector<std::filesystem::path>& files,
                             nlohmann::json extra = nlohmann::json::object());

/// Writes `text` to `path` in one go (binary mode, no newline translation).
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace xsrank
