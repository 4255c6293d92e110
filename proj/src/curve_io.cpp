#include "impactlab/curve_io.hpp"

#include <sstream>

#include "impactlab/error.hpp"
#include "impactlab/series_io.hpp"
#include "impactlab/text.hpp"

namespace impactlab {

namespace {
constexpr const char* kColumns = "tau,value,dispersion,n_samples";
}

std::string curve_csv(const LagCurve& c) {
  std::string out = "# impactlab-curve v1 kind=";
  out += to_string(c.meta.kind);
  out += " mode=";
  out += to_string(c.meta.mode);
  out += '\n';
  out += kColumns;
  out += '\n';
  for (std::size_t k = 0; k < c.size(); ++k) {
    append_int(out, c.lags[k]);
    out += ',';
    if (c.defined(k)) append_double(out, c.value[k]);
    out += ',';
    if (c.defined(k)) append_double(out, c.dispersion[k]);
    out += ',';
    append_int(out, c.n_samples[k]);
    out += '\n';
  }
  return out;
}

LagCurve parse_curve_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!read_line(in, line)) throw Error(Errc::format_error, "empty curve file");
  auto kv = parse_header_line(line, "impactlab-curve", 1);
  LagCurve c;
  if (kv.count("kind")) c.meta.kind = parse_curve_kind(kv["kind"]);
  if (kv.count("mode")) c.meta.mode = parse_sign_mode(kv["mode"]);
  if (!read_line(in, line) || line != kColumns)
    throw Error(Errc::format_error, "bad curve column header", 2);
  std::vector<std::string_view> f;
  std::int64_t row = 2;
  while (read_line(in, line)) {
    ++row;
    if (line.empty()) continue;
    split_fields(line, ',', f);
    if (f.size() != 4) throw Error(Errc::format_error, "curve row needs 4 fields", row);
    auto tau = parse_int(f[0]);
    auto n = parse_int(f[3]);
    if (!tau || !n || *n < 0) throw Error(Errc::format_error, "bad curve row", row);
    double v = kMissing, d = kMissing;
    if (*n > 0) {
      auto pv = parse_double(f[1]);
      auto pd = parse_double(f[2]);
      if (!pv || !pd) throw Error(Errc::format_error, "defined lag without value", row);
      v = *pv;
      d = *pd;
    }
    if (!c.lags.empty() && *tau <= c.lags.back())
      throw Error(Errc::format_error, "curve lags must increase", row);
    c.lags.push_back(static_cast<int>(*tau));
    c.value.push_back(v);
    c.dispersion.push_back(d);
    c.n_samples.push_back(*n);
  }
  return c;
}

nlohmann::ordered_json curve_sidecar(const LagCurve& c, const std::string& lag_grid_hash) {
  nlohmann::ordered_json j;
  j["format"] = "impactlab-curve";
  j["version"] = 1;
  j["kind"] = to_string(c.meta.kind);
  j["mode"] = to_string(c.meta.mode);
  j["i"] = c.meta.pair.i;
  j["j"] = c.meta.pair.j;
  j["aggregate"] = c.meta.aggregate;
  j["dates"] = c.meta.dates;
  j["lag_grid_hash"] = lag_grid_hash;
  j["weighting"] = c.meta.weighting;
  return j;
}

void apply_sidecar(LagCurve& c, const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "impactlab-curve")
      throw Error(Errc::format_error, "sidecar is not an impactlab-curve document");
    c.meta.kind = parse_curve_kind(j.at("kind").get<std::string>());
    c.meta.mode = parse_sign_mode(j.at("mode").get<std::string>());
    c.meta.pair = {j.value("i", ""), j.value("j", "")};
    c.meta.aggregate = j.value("aggregate", "");
    c.meta.dates = j.value("dates", std::vector<std::string>{});
    c.meta.weighting = j.value("weighting", "equal_day");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format_error, std::string("bad curve sidecar: ") + e.what());
  }
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const std::string& suffix) {
  auto p = stem;
  p += suffix;
  return p;
}

void write_curve(const std::filesystem::path& stem, const LagCurve& curve,
                 const std::string& lag_grid_hash) {
  write_text_file(with_suffix(stem, ".csv"), curve_csv(curve));
  write_text_file(with_suffix(stem, ".json"), curve_sidecar(curve, lag_grid_hash).dump(2) + "\n");
}

LagCurve read_curve(const std::filesystem::path& csv_path) {
  auto c = parse_curve_csv(read_text_file(csv_path));
  auto side = csv_path;
  side.replace_extension(".json");
  if (std::filesystem::exists(side)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(side));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::format_error, side.string() + ": " + e.what());
    }
    apply_sidecar(c, j);
  }
  return c;
}

}  // namespace impactlab
