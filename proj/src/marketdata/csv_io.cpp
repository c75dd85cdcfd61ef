#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "dspo/csv.hpp"
#include "dspo/error.hpp"
#include "dspo/marketdata.hpp"

namespace fs = std::filesystem;

namespace dspo::data {
namespace {

void check_stock_id(const std::string& id) {
  const bool ok = !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return ::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
  }) && id != "." && id != "..";
  if (!ok) fail(ErrorKind::Data, "stock id '" + id + "' is not usable as a file name");
}

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + p.string() + ": " + ec.message());
}

bool is_price_field(const std::string& name) { return name != "volume"; }

struct RawBars {
  std::vector<std::int64_t> timestamps;
  std::vector<std::vector<double>> rows;  // NaN marks an empty cell
};

RawBars read_hf_file(const fs::path& path, std::vector<std::string>& fields) {
  csv::Reader reader(path);
  const csv::Row header = reader.header();
  const std::size_t ts_col = csv::require_column(header, "timestamp", reader.path());
  for (const auto& name : default_hf_fields()) csv::require_column(header, name, reader.path());
  std::vector<std::string> file_fields;
  std::vector<std::size_t> cols;
  // mandatory fields first, in canonical order, then any extension columns
  for (const auto& name : default_hf_fields()) {
    file_fields.push_back(name);
    cols.push_back(csv::require_column(header, name, reader.path()));
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == ts_col) continue;
    if (std::find(file_fields.begin(), file_fields.end(), header[c]) != file_fields.end()) continue;
    file_fields.push_back(header[c]);
    cols.push_back(c);
  }
  if (fields.empty()) {
    fields = file_fields;
  } else if (fields != file_fields) {
    fail(ErrorKind::Data, reader.path() + ": hf columns differ from other files of the same date");
  }
  RawBars bars;
  csv::Row row;
  std::vector<std::pair<std::int64_t, std::vector<double>>> records;
  while (reader.next(row)) {
    if (row.size() != header.size()) {
      reader.error("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(row.size()));
    }
    std::int64_t ts = 0;
    try {
      ts = parse_timestamp(row[ts_col]);
    } catch (const Error& e) {
      reader.error(e.what());
    }
    std::vector<double> values;
    for (std::size_t c : cols) {
      values.push_back(row[c].empty() ? std::numeric_limits<double>::quiet_NaN() : csv::parse_double(row[c], reader));
    }
    records.emplace_back(ts, std::move(values));
  }
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].first == records[i - 1].first) {
      fail(ErrorKind::Data, reader.path() + ": duplicate timestamp " + format_timestamp(records[i].first));
    }
  }
  for (auto& [ts, values] : records) {
    bars.timestamps.push_back(ts);
    bars.rows.push_back(std::move(values));
  }
  return bars;
}

// Aligns bars to `grid`: price fields forward-fill, volume zero-fills, and
// anything before the first observation is zero.
std::vector<double> align_bars(const RawBars& bars, const std::vector<std::int64_t>& grid,
                               const std::vector<std::string>& fields) {
  const std::size_t a = fields.size();
  std::vector<double> out(grid.size() * a, 0.0);
  std::vector<double> last(a, 0.0);
  std::size_t src = 0;
  for (std::size_t t = 0; t < grid.size(); ++t) {
    const bool present = src < bars.timestamps.size() && bars.timestamps[src] == grid[t];
    for (std::size_t f = 0; f < a; ++f) {
      double v = present ? bars.rows[src][f] : std::numeric_limits<double>::quiet_NaN();
      if (std::isnan(v)) v = is_price_field(fields[f]) ? last[f] : 0.0;
      out[t * a + f] = v;
      if (is_price_field(fields[f])) last[f] = v;
    }
    if (present) ++src;
  }
  return out;
}

std::vector<std::pair<std::string, double>> read_keyed_values(const fs::path& path, std::string_view column) {
  csv::Reader reader(path);
  const csv::Row header = reader.header();
  const std::size_t id_col = csv::require_column(header, "stock_id", reader.path());
  const std::size_t v_col = csv::require_column(header, column, reader.path());
  std::vector<std::pair<std::string, double>> out;
  csv::Row row;
  while (reader.next(row)) {
    if (row.size() != header.size()) reader.error("wrong number of fields");
    out.emplace_back(row[id_col], csv::parse_double(row[v_col], reader));
  }
  return out;
}

}  // namespace

void write_csv(const fs::path& dir, std::span<const CrossSection> days,
               const std::vector<std::vector<double>>* latent_scores, const CsvWriteOptions& options) {
  for (const char* sub : {"hf", "lf", "returns"}) make_dirs(dir / sub);
  if (latent_scores) make_dirs(dir / "latent");
  for (std::size_t d = 0; d < days.size(); ++d) {
    const CrossSection& cs = days[d];
    cs.validate();
    const std::string date = cs.date.to_string();
    const fs::path hf_dir = dir / "hf" / date;
    make_dirs(hf_dir);
    csv::Writer lf(dir / "lf" / (date + ".csv"));
    csv::Writer ret(dir / "returns" / (date + ".csv"));
    if (!options.header_comment.empty()) {
      lf.comment(options.header_comment);
      ret.comment(options.header_comment);
    }
    csv::Row lf_header{"stock_id"};
    lf_header.insert(lf_header.end(), cs.lf_fields.begin(), cs.lf_fields.end());
    lf.row(lf_header);
    ret.row({"stock_id", "forward_return"});
    for (std::size_t i = 0; i < cs.panels.size(); ++i) {
      const auto& p = cs.panels[i];
      check_stock_id(p.stock_id);
      csv::Row lf_row{p.stock_id};
      for (double v : p.lf) lf_row.push_back(csv::format_double(v));
      lf.row(lf_row);
      ret.row({p.stock_id, csv::format_double(cs.returns[i])});

      csv::Writer hf(hf_dir / (p.stock_id + ".csv"));
      if (!options.header_comment.empty()) hf.comment(options.header_comment);
      csv::Row header{"timestamp"};
      header.insert(header.end(), cs.hf_fields.begin(), cs.hf_fields.end());
      hf.row(header);
      const auto ts = p.timestamps();
      csv::Row bar;
      for (std::size_t t = 0; t < p.n_bars(); ++t) {
        bar.assign(1, format_timestamp(ts[t]));
        for (std::size_t f = 0; f < p.n_fields(); ++f) bar.push_back(csv::format_double(p.hf_at(t, f)));
        hf.row(bar);
      }
      hf.close();
    }
    lf.close();
    ret.close();
    if (latent_scores) {
      csv::Writer lat(dir / "latent" / (date + ".csv"));
      if (!options.header_comment.empty()) lat.comment(options.header_comment);
      lat.row({"stock_id", "latent_score"});
      for (std::size_t i = 0; i < cs.panels.size(); ++i) {
        lat.row({cs.panels[i].stock_id, csv::format_double((*latent_scores)[d].at(i))});
      }
      lat.close();
    }
  }
}

std::vector<CrossSection> load_csv(const fs::path& dir) {
  const fs::path returns_dir = dir / "returns";
  if (!fs::is_directory(returns_dir)) fail(ErrorKind::Io, "no returns/ directory under " + dir.string());
  std::vector<Date> dates;
  for (const auto& entry : fs::directory_iterator(returns_dir)) {
    if (entry.path().extension() != ".csv") continue;
    dates.push_back(Date::parse(entry.path().stem().string()));
  }
  std::sort(dates.begin(), dates.end());

  std::vector<CrossSection> out;
  for (const Date& date : dates) {
    const std::string ds = date.to_string();
    CrossSection cs;
    cs.date = date;
    const auto returns = read_keyed_values(returns_dir / (ds + ".csv"), "forward_return");

    // low-frequency fields
    std::unordered_map<std::string, std::vector<double>> lf_rows;
    {
      csv::Reader reader(dir / "lf" / (ds + ".csv"));
      const csv::Row header = reader.header();
      const std::size_t id_col = csv::require_column(header, "stock_id", reader.path());
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (c != id_col) cs.lf_fields.push_back(header[c]);
      }
      csv::Row row;
      while (reader.next(row)) {
        if (row.size() != header.size()) reader.error("wrong number of fields");
        std::vector<double> values;
        for (std::size_t c = 0; c < row.size(); ++c) {
          if (c != id_col) values.push_back(csv::parse_double(row[c], reader));
        }
        if (!lf_rows.emplace(row[id_col], std::move(values)).second) {
          reader.error("duplicate stock id " + row[id_col]);
        }
      }
    }

    std::vector<RawBars> raw;
    std::set<std::int64_t> grid_set;
    for (const auto& [id, _] : returns) {
      check_stock_id(id);
      const fs::path hf_path = dir / "hf" / ds / (id + ".csv");
      if (!fs::exists(hf_path)) fail(ErrorKind::Data, "missing high-frequency file " + hf_path.string());
      raw.push_back(read_hf_file(hf_path, cs.hf_fields));
      grid_set.insert(raw.back().timestamps.begin(), raw.back().timestamps.end());
    }
    const std::vector<std::int64_t> grid(grid_set.begin(), grid_set.end());
    for (std::size_t i = 0; i < returns.size(); ++i) {
      const auto& [id, ret] = returns[i];
      auto lf = lf_rows.find(id);
      if (lf == lf_rows.end()) fail(ErrorKind::Data, "lf/" + ds + ".csv has no row for stock " + id);
      cs.panels.push_back(make_panel(id, date, grid, align_bars(raw[i], grid, cs.hf_fields), cs.hf_fields.size(),
                                     lf->second));
      cs.returns.push_back(ret);
    }
    cs.validate();
    out.push_back(std::move(cs));
  }
  return out;
}

std::map<Date, std::map<std::string, double>> load_latent_csv(const fs::path& dir) {
  std::map<Date, std::map<std::string, double>> out;
  const fs::path latent_dir = dir / "latent";
  if (!fs::is_directory(latent_dir)) fail(ErrorKind::Io, "no latent/ directory under " + dir.string());
  for (const auto& entry : fs::directory_iterator(latent_dir)) {
    if (entry.path().extension() != ".csv") continue;
    auto& day = out[Date::parse(entry.path().stem().string())];
    for (auto& [id, v] : read_keyed_values(entry.path(), "latent_score")) day[id] = v;
  }
  return out;
}

void save_normalizer(const fs::path& path, const NormalizationState& state) {
  csv::Writer out(path);
  out.row({"kind", "key", "field", "a", "b"});
  out.row({"fitted", state.fitted_from.to_string(), state.fitted_to.to_string(), "", ""});
  for (const auto& f : state.dropped_hf) out.row({"dropped_hf", "", f, "", ""});
  for (const auto& f : state.dropped_lf) out.row({"dropped_lf", "", f, "", ""});
  for (std::size_t k = 0; k < state.lf_fields.size(); ++k) {
    out.row({"lf", "", state.lf_fields[k], csv::format_double(state.lf_min[k]), csv::format_double(state.lf_max[k])});
  }
  for (std::size_t k = 0; k < state.hf_fields.size(); ++k) {
    out.row({"hf_pooled", "", state.hf_fields[k], csv::format_double(state.hf_pooled[k].mean),
             csv::format_double(state.hf_pooled[k].std)});
  }
  for (const auto& [id, stats] : state.hf_stats) {
    for (std::size_t k = 0; k < stats.size(); ++k) {
      out.row({"hf", id, state.hf_fields.at(k), csv::format_double(stats[k].mean), csv::format_double(stats[k].std)});
    }
  }
  out.close();
}

NormalizationState load_normalizer(const fs::path& path) {
  csv::Reader reader(path);
  const csv::Row header = reader.header();
  if (header != csv::Row{"kind", "key", "field", "a", "b"}) reader.error("not a normalizer file");
  NormalizationState s;
  bool fitted = false;
  csv::Row row;
  while (reader.next(row)) {
    if (row.size() != 5) reader.error("expected 5 fields");
    const std::string& kind = row[0];
    if (kind == "fitted") {
      try {
        s.fitted_from = Date::parse(row[1]);
        s.fitted_to = Date::parse(row[2]);
      } catch (const Error& e) {
        reader.error(e.what());
      }
      fitted = true;
    } else if (kind == "dropped_hf") {
      s.dropped_hf.push_back(row[2]);
    } else if (kind == "dropped_lf") {
      s.dropped_lf.push_back(row[2]);
    } else if (kind == "lf") {
      s.lf_fields.push_back(row[2]);
      s.lf_min.push_back(csv::parse_double(row[3], reader));
      s.lf_max.push_back(csv::parse_double(row[4], reader));
      if (!(s.lf_max.back() > s.lf_min.back())) reader.error("lf range must be non-empty");
    } else if (kind == "hf_pooled") {
      s.hf_fields.push_back(row[2]);
      s.hf_pooled.push_back({csv::parse_double(row[3], reader), csv::parse_double(row[4], reader)});
    } else if (kind == "hf") {
      auto& stats = s.hf_stats[row[1]];
      if (stats.size() >= s.hf_fields.size() || s.hf_fields[stats.size()] != row[2]) {
        reader.error("hf statistics out of field order for stock " + row[1]);
      }
      stats.push_back({csv::parse_double(row[3], reader), csv::parse_double(row[4], reader)});
    } else {
      reader.error("unknown row kind '" + kind + "'");
    }
  }
  if (!fitted) fail(ErrorKind::Data, path.string() + ": missing fitted row");
  for (const auto& [id, stats] : s.hf_stats) {
    if (stats.size() != s.hf_fields.size()) fail(ErrorKind::Data, path.string() + ": incomplete statistics for " + id);
    for (const auto& st : stats) {
      if (!(st.std > 0.0)) fail(ErrorKind::Data, path.string() + ": non-positive std for " + id);
    }
  }
  return s;
}

}  // namespace dspo::data
