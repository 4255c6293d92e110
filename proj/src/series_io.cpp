#include "impactlab/series_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "impactlab/error.hpp"
#include "impactlab/text.hpp"

namespace impactlab {

namespace {

std::string header_line(const char* magic, const std::string& symbol, const SessionGrid& grid) {
  std::string h = "# ";
  h += magic;
  h += " v1 symbol=" + symbol + " date=" + format_date(grid.date) +
       " session=" + grid.bounds.to_string() + " len=" + std::to_string(grid.len());
  return h;
}

SessionGrid grid_from_header(const std::map<std::string, std::string>& kv) {
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(Errc::format_error, std::string("header lacks ") + key);
    return it->second;
  };
  auto date = parse_date(get("date"));
  if (!date) throw Error(Errc::format_error, "bad date in header");
  auto grid = SessionGrid::make(*date, SessionBounds::parse(get("session")));
  if (std::to_string(grid.len()) != get("len"))
    throw Error(Errc::format_error, "header len disagrees with session bounds");
  return grid;
}

}  // namespace

std::map<std::string, std::string> parse_header_line(const std::string& line,
                                                     const std::string& magic, int version) {
  std::istringstream ss(line);
  std::string hash, got_magic, got_version;
  ss >> hash >> got_magic >> got_version;
  if (hash != "#" || got_magic != magic)
    throw Error(Errc::format_error, "expected '# " + magic + "' header, got '" + line + "'");
  if (got_version != "v" + std::to_string(version))
    throw Error(Errc::format_error, "unsupported " + magic + " version " + got_version);
  std::map<std::string, std::string> kv;
  std::string tok;
  while (ss >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) throw Error(Errc::format_error, "bad header token " + tok);
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

void write_series(std::ostream& out, const SecondSeries& s) {
  std::string buf = header_line("impactlab-series", s.symbol, s.grid);
  buf += "\nt_index,midpoint,n_trades,trade_prices\n";
  for (int t = 0; t < s.len(); ++t) {
    append_int(buf, t);
    buf += ',';
    append_double(buf, s.midpoint[t]);
    buf += ',';
    append_int(buf, s.n_trades(t));
    buf += ',';
    auto prices = s.trades_in(t);
    for (std::size_t k = 0; k < prices.size(); ++k) {
      if (k) buf += ';';
      append_double(buf, prices[k]);
    }
    buf += '\n';
  }
  out << buf;
}

SecondSeries read_series(std::istream& in) {
  std::string line;
  if (!read_line(in, line)) throw Error(Errc::format_error, "empty series file");
  auto kv = parse_header_line(line, "impactlab-series", 1);
  SecondSeries s;
  s.symbol = kv["symbol"];
  s.grid = grid_from_header(kv);
  const int len = s.grid.len();
  if (!read_line(in, line) || line != "t_index,midpoint,n_trades,trade_prices")
    throw Error(Errc::format_error, "bad series column header");
  s.midpoint.assign(len, kMissing);
  s.cell_offsets.assign(len + 1, 0);
  std::vector<std::string_view> f, prices;
  std::int64_t row = 2;
  for (int t = 0; t < len; ++t) {
    ++row;
    if (!read_line(in, line)) throw Error(Errc::format_error, "series truncated", row);
    split_fields(line, ',', f);
    if (f.size() != 4 || parse_int(f[0]) != t)
      throw Error(Errc::format_error, "bad series row", row);
    if (!f[1].empty()) {
      auto m = parse_double(f[1]);
      if (!m) throw Error(Errc::format_error, "bad midpoint", row);
      s.midpoint[t] = *m;
    }
    auto n = parse_int(f[2]);
    if (!n || *n < 0) throw Error(Errc::format_error, "bad trade count", row);
    if (*n > 0) {
      split_fields(f[3], ';', prices);
      if (static_cast<std::int64_t>(prices.size()) != *n)
        throw Error(Errc::format_error, "trade count disagrees with price list", row);
      for (auto p : prices) {
        auto v = parse_double(p);
        if (!v) throw Error(Errc::format_error, "bad trade price", row);
        s.trade_prices.push_back(*v);
      }
    }
    s.cell_offsets[t + 1] = static_cast<std::uint32_t>(s.trade_prices.size());
  }
  return s;
}

void write_signs(std::ostream& out, const SignSeries& s) {
  std::string buf = header_line("impactlab-signs", s.symbol, s.grid);
  buf += " first_trade_sign=0\nt_index,eps,n_trades\n";
  for (int t = 0; t < s.len(); ++t) {
    append_int(buf, t);
    buf += ',';
    append_int(buf, s.eps[t]);
    buf += ',';
    append_int(buf, s.n_trades[t]);
    buf += '\n';
  }
  out << buf;
}

SignSeries read_signs(std::istream& in) {
  std::string line;
  if (!read_line(in, line)) throw Error(Errc::format_error, "empty signs file");
  auto kv = parse_header_line(line, "impactlab-signs", 1);
  SignSeries s;
  s.symbol = kv["symbol"];
  s.grid = grid_from_header(kv);
  const int len = s.grid.len();
  if (!read_line(in, line) || line != "t_index,eps,n_trades")
    throw Error(Errc::format_error, "bad signs column header");
  s.eps.assign(len, 0);
  s.n_trades.assign(len, 0);
  std::vector<std::string_view> f;
  std::int64_t row = 2;
  for (int t = 0; t < len; ++t) {
    ++row;
    if (!read_line(in, line)) throw Error(Errc::format_error, "signs truncated", row);
    split_fields(line, ',', f);
    if (f.size() != 3 || parse_int(f[0]) != t) throw Error(Errc::format_error, "bad signs row", row);
    auto e = parse_int(f[1]);
    auto n = parse_int(f[2]);
    if (!e || *e < -1 || *e > 1 || !n || *n < 0)
      throw Error(Errc::format_error, "bad sign or count", row);
    s.eps[t] = static_cast<Sign>(*e);
    s.n_trades[t] = static_cast<std::uint32_t>(*n);
  }
  return s;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(Errc::io_error, "short write to " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace impactlab
