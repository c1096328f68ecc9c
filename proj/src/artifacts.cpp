#include "xsrank/artifacts.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace xsrank {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  if (is_missing(v)) return "";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string sha256_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read " + file.string() + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 unavailable");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

void write_returns_csv(std::ostream& out, const std::vector<ReportSeries>& series) {
  out << "date,model,return\n";
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.returns.size(); ++i)
      out << format_date(s.dates[i]) << ',' << s.model << ',' << format_double(s.returns[i]) << '\n';
}

void write_ndcg_csv(std::ostream& out, const std::vector<ReportSeries>& series, std::size_t k) {
  out << "date,model,side,ndcg" << k << '\n';
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.dates.size(); ++i) {
      const auto d = format_date(s.dates[i]);
      out << d << ',' << s.model << ",long," << format_double(s.ndcg_long[i]) << '\n';
      out << d << ',' << s.model << ",short," << format_double(s.ndcg_short[i]) << '\n';
    }
}

void write_decisions_csv(std::ostream& out, const std::vector<ModelSeries>& series, const FeatureFrame& frame) {
  out << "date,model,asset,signal,base_rank,context_rank\n";
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.decisions.size(); ++i) {
      const auto& d = s.decisions[i];
      const auto date = format_date(frame.dates.at(s.dates[i]));
      for (std::size_t j = 0; j < d.assets.size(); ++j)
        out << date << ',' << s.model << ',' << frame.assets.at(d.assets[j]) << ',' << d.signal[j] << ','
            << d.base_rank[j] << ',' << d.context_rank[j] << '\n';
    }
}

void write_cumulative_csv(std::ostream& out, const std::vector<ReportSeries>& series, double sigma_target) {
  out << "date,model,cumulative\n";
  for (const auto& s : series) {
    if (s.returns.size() < 2) continue;
    std::vector<double> r;
    try {
      r = rescale_to_target(s.returns, sigma_target);
    } catch (const NumericError&) {
      continue;
    }
    double w = 1.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      w *= 1.0 + r[i];
      out << format_date(s.dates[i]) << ',' << s.model << ',' << format_double(w) << '\n';
    }
  }
}

void write_regimes_csv(std::ostream& out, const json& report) {
  out << "model,state,count,sharpe,mean_ndcg\n";
  auto cell = [](const json& j, const char* key) {
    return j.contains(key) && j.at(key).is_number() ? format_double(j.at(key).get<double>()) : std::string();
  };
  for (const auto& m : report.at("models")) {
    if (!m.contains("regimes")) continue;
    for (const char* state : {"normal", "risk_off"}) {
      const auto& r = m.at("regimes").at(state);
      if (r.is_null()) continue;
      out << m.at("model").get<std::string>() << ',' << state << ',' << r.at("count").get<std::size_t>() << ','
          << cell(r, "sharpe") << ',' << cell(r, "mean_ndcg") << '\n';
    }
  }
}

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header_prefix) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind(header_prefix, 0) != 0)
    throw DataError(path.string() + ": expected header starting '" + header_prefix + "'");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t no = 2; std::getline(in, line); ++no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    cells.push_back(std::to_string(no));  // line number rides along for messages
    rows.push_back(std::move(cells));
  }
  return rows;
}

double cell_double(const std::string& v, const fs::path& path, const std::string& line) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw DataError(path.string() + " line " + line + ": bad number '" + v + "'");
  return out;
}

}  // namespace

std::vector<ReportSeries> read_report_series(const fs::path& returns_csv, const fs::path& ndcg_csv) {
  std::vector<ReportSeries> out;
  std::map<std::string, std::size_t> index;
  for (const auto& row : read_csv(returns_csv, "date,model,return")) {
    if (row.size() != 4) throw DataError(returns_csv.string() + " line " + row.back() + ": expected 3 fields");
    auto [it, fresh] = index.try_emplace(row[1], out.size());
    if (fresh) out.push_back(ReportSeries{row[1], {}, {}, {}, {}});
    auto& s = out[it->second];
    try {
      s.dates.push_back(parse_date(row[0]));
    } catch (const DataError& e) {
      throw DataError(returns_csv.string() + " line " + row.back() + ": " + e.what());
    }
    s.returns.push_back(cell_double(row[2], returns_csv, row.back()));
  }
  for (auto& s : out) {
    s.ndcg_long.assign(s.returns.size(), kMissing);
    s.ndcg_short.assign(s.returns.size(), kMissing);
  }
  std::map<std::string, std::size_t> cursor;
  for (const auto& row : read_csv(ndcg_csv, "date,model,side,ndcg")) {
    if (row.size() != 5) throw DataError(ndcg_csv.string() + " line " + row.back() + ": expected 4 fields");
    const auto it = index.find(row[1]);
    if (it == index.end()) throw DataError(ndcg_csv.string() + " line " + row.back() + ": model not in returns file");
    auto& s = out[it->second];
    auto& pos = cursor[row[1] + "/" + row[2]];
    if (pos >= s.dates.size() || format_date(s.dates[pos]) != row[0])
      throw DataError(ndcg_csv.string() + " line " + row.back() + ": dates do not line up with the returns file");
    const double v = cell_double(row[3], ndcg_csv, row.back());
    if (row[2] == "long") s.ndcg_long[pos] = v;
    else if (row[2] == "short") s.ndcg_short[pos] = v;
    else throw DataError(ndcg_csv.string() + " line " + row.back() + ": side must be long or short");
    ++pos;
  }
  for (const auto& s : out)
    for (std::size_t i = 0; i < s.dates.size(); ++i)
      if (is_missing(s.ndcg_long[i]) || is_missing(s.ndcg_short[i]))
        throw DataError(ndcg_csv.string() + ": no ndcg for " + s.model + " on " + format_date(s.dates[i]));
  return out;
}

namespace {

json hyper_json(const HyperParams& h) {
  return {{"dropout_rate", h.dropout_rate}, {"learning_rate", h.learning_rate}, {"hidden_width", h.hidden_width},
          {"d_fc", h.d_fc}, {"d_ff", h.d_ff}, {"n_layers", h.n_layers}, {"n_heads", h.n_heads}};
}

json finite_list(const std::vector<double>& v) {
  json a = json::array();
  for (const double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

}  // namespace

json training_manifest(const PipelineResult& r) {
  json blocks = json::array();
  for (const auto& b : r.blocks)
    blocks.push_back({{"train", {format_date(b.train.first), format_date(b.train.last)}},
                      {"test", {format_date(b.test.first), format_date(b.test.last)}}});
  json stages = json::array();
  for (const auto& t : r.training)
    stages.push_back({{"model", t.model},
                      {"block", t.block},
                      {"seed", t.seed},
                      {"hyperparameters", hyper_json(t.hyper)},
                      {"epochs", t.trace.epochs_run()},
                      {"best_epoch", t.trace.best_epoch},
                      {"train_loss", finite_list(t.trace.train_loss)},
                      {"validation_loss", finite_list(t.trace.validation_loss)},
                      {"trial_losses", finite_list(t.trial_losses)}});
  return {{"blocks", blocks}, {"stages", stages}};
}

json file_manifest(const fs::path& dir, const std::vector<fs::path>& files, json extra) {
  json list = json::array();
  for (const auto& f : files) {
    const auto full = f.is_absolute() ? f : dir / f;
    list.push_back({{"path", fs::relative(full, dir).generic_string()},
                    {"bytes", fs::file_size(full)},
                    {"sha256", sha256_hex(full)}});
  }
  extra["files"] = std::move(list);
  return extra;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace xsrank
