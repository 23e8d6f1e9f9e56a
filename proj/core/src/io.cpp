#include "bilayer/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#ifndef BILAYER_VERSION
#define BILAYER_VERSION "0.0.0"
#endif
#ifndef BILAYER_REVISION
#define BILAYER_REVISION "unknown"
#endif

namespace bsq {

namespace fs = std::filesystem;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return {buf, res.ptr};
}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size())
    throw std::invalid_argument("CsvTable: row has " + std::to_string(row.size()) + " fields, header has " +
                                std::to_string(header.size()));
  rows.push_back(std::move(row));
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw SchemaError("missing column '" + std::string(name) + "'");
}

std::vector<double> CsvTable::numbers(std::string_view name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    const std::string& s = row[c];
    if (s == "nan" || s.empty()) {
      out.push_back(std::nan(""));
      continue;
    }
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw SchemaError("column '" + std::string(name) + "': not a number: '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> CsvTable::strings(std::string_view name) const {
  const std::size_t c = column(name);
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row[c]);
  return out;
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += fields[i];
    }
    out += '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
  return out;
}

void write_csv(const fs::path& path, const CsvTable& table) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << to_csv(table);
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  auto split = [](std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return fields;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw SchemaError(path.string() + ": empty file");
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split(line);
    if (fields.size() != t.header.size())
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields");
    t.rows.push_back(std::move(fields));
  }
  return t;
}

void require_columns(const CsvTable& table, const std::vector<std::string>& columns, std::string_view what) {
  for (const auto& c : columns) {
    try {
      table.column(c);
    } catch (const SchemaError&) {
      throw SchemaError(std::string(what) + ": missing column '" + c + "'");
    }
  }
}

namespace {

CsvTable series_table_impl(const std::vector<double>& t, const std::vector<double>& mean,
                           const std::vector<double>& var_m, const std::vector<double>& var_p,
                           const std::vector<double>& sza, const std::vector<double>& szb,
                           const std::vector<double>& e, const std::vector<double>* err) {
  CsvTable table;
  table.header = kSeriesHeader;
  table.rows.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    table.rows.push_back({format_double(t[i]), format_double(mean[i]), format_double(var_m[i]),
                          format_double(var_p[i]), format_double(sza[i]), format_double(szb[i]),
                          format_double(e[i]), format_double(err ? (*err)[i] : 0.0)});
  }
  return table;
}

}  // namespace

CsvTable series_table(const EnsembleSeries& s) {
  return series_table_impl(s.t, s.mean_O_minus, s.var_O_minus, s.var_O_plus, s.sz_a, s.sz_b, s.energy_mean,
                           &s.var_stderr);
}

CsvTable series_table(const ExactSeries& s) {
  return series_table_impl(s.t, s.mean_O_minus, s.var_O_minus, s.var_O_plus, s.sz_a, s.sz_b, s.energy, nullptr);
}

SeriesColumns read_series(const fs::path& path) {
  const CsvTable t = read_csv(path);
  require_columns(t, kSeriesHeader, path.string());
  SeriesColumns s;
  s.t = t.numbers("t");
  s.mean_O_minus = t.numbers("mean_O_minus");
  s.var_O_minus = t.numbers("var_O_minus");
  s.var_O_plus = t.numbers("var_O_plus");
  s.sz_a = t.numbers("sz_a");
  s.sz_b = t.numbers("sz_b");
  s.energy = t.numbers("energy");
  s.var_stderr = t.numbers("var_stderr");
  return s;
}

json to_json(const LatticeSpec& spec) {
  return json{{"geometry", std::string(to_string(spec.geometry))},
              {"L", spec.L},
              {"a_z", spec.a_z},
              {"alpha", spec.alpha},
              {"lambda", spec.lambda},
              {"boundary", std::string(to_string(spec.boundary))}};
}

LatticeSpec spec_from_json(const json& j) {
  LatticeSpec s;
  if (!j.is_object()) throw SchemaError("lattice spec must be a JSON object");
  s.geometry = parse_geometry(j.value("geometry", std::string(to_string(s.geometry))));
  s.L = j.value("L", s.L);
  s.a_z = j.value("a_z", s.a_z);
  s.alpha = j.value("alpha", s.alpha);
  s.lambda = j.value("lambda", s.lambda);
  s.boundary = parse_boundary(j.value("boundary", std::string(to_string(s.boundary))));
  s.validate();
  return s;
}

json to_json(const RunConfig& run) {
  return json{{"n_traj", run.n_traj},         {"t_max", run.t_max},     {"output_stride", run.output_stride},
              {"master_seed", run.master_seed}, {"rel_tol", run.rel_tol}, {"abs_tol", run.abs_tol}};
}

RunConfig run_from_json(const json& j, RunConfig r) {
  if (!j.is_object()) throw SchemaError("run config must be a JSON object");
  r.n_traj = j.value("n_traj", r.n_traj);
  r.t_max = j.value("t_max", r.t_max);
  r.output_stride = j.value("output_stride", r.output_stride);
  r.master_seed = j.value("master_seed", r.master_seed);
  r.rel_tol = j.value("rel_tol", r.rel_tol);
  r.abs_tol = j.value("abs_tol", r.abs_tol);
  r.validate();
  return r;
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string content_hash(const json& point) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(point.dump());
  return os.str();
}

std::string tool_version() { return BILAYER_VERSION; }
std::string tool_revision() { return BILAYER_REVISION; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json RunManifest::to_json() const {
  json j{{"tool", "bilayer_squeeze"},
         {"version", tool_version()},
         {"revision", tool_revision()},
         {"command", command},
         {"spec", spec},
         {"run", run},
         {"master_seed", master_seed},
         {"started", started},
         {"finished", finished},
         {"wall_seconds", wall_seconds},
         {"outputs", outputs}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

void write_manifest(const fs::path& path, const RunManifest& manifest) { write_json(path, manifest.to_json()); }

json read_json(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace bsq
