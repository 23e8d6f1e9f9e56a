#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "bilayer/dtwa.hpp"
#include "bilayer/lattice.hpp"
#include "bilayer/oracle.hpp"

namespace bsq {

using json = nlohmann::json;

/// Shortest round-trip text is not required; every float is written with 17
/// significant digits so files are bit-exact and diffable.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  /// Index of `name` in the header; SchemaError naming the column otherwise.
  std::size_t column(std::string_view name) const;
  std::vector<double> numbers(std::string_view name) const;
  std::vector<std::string> strings(std::string_view name) const;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string to_csv(const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);
/// Throws SchemaError listing the first missing column.
void require_columns(const CsvTable& table, const std::vector<std::string>& columns, std::string_view what);

inline const std::vector<std::string> kSeriesHeader{"t",     "mean_O_minus", "var_O_minus", "var_O_plus",
                                                    "sz_a",  "sz_b",         "energy",      "var_stderr"};
inline const std::vector<std::string> kDispersionHeader{"kx",          "ky",          "abs_k",      "eps_k",
                                                        "re_omega_k",  "im_omega_k",  "growth_rate"};
inline const std::vector<std::string> kCriticalHeader{"L", "a_z_star", "a_z_star_over_L"};
inline const std::vector<std::string> kMinimaHeader{"L", "N", "a_z", "lambda", "t_min", "var_min", "var_min_stderr"};
inline const std::vector<std::string> kBoundaryHeader{"geometry",      "alpha",        "lambda", "L",
                                                      "a_z_star_bogo", "a_z_star_dtwa"};

CsvTable series_table(const EnsembleSeries& series);
/// Exact series in the same schema; var_stderr is zero.
CsvTable series_table(const ExactSeries& series);

/// Columns of a series.csv read back from disk.
struct SeriesColumns {
  std::vector<double> t;
  std::vector<double> mean_O_minus;
  std::vector<double> var_O_minus;
  std::vector<double> var_O_plus;
  std::vector<double> sz_a;
  std::vector<double> sz_b;
  std::vector<double> energy;
  std::vector<double> var_stderr;
};

SeriesColumns read_series(const std::filesystem::path& path);

json to_json(const LatticeSpec& spec);
LatticeSpec spec_from_json(const json& j);
json to_json(const RunConfig& run);
/// Missing keys keep their defaults.
RunConfig run_from_json(const json& j, RunConfig defaults = {});

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data);
/// 16 hex digits of fnv1a over the canonical dump of `point`.
std::string content_hash(const json& point);

std::string tool_version();
std::string tool_revision();
/// UTC, ISO 8601 with seconds.
std::string utc_timestamp();

struct RunManifest {
  json spec;  // LatticeSpec object, or an array of them for sweeps
  json run;
  std::string command;
  std::string started;
  std::string finished;
  double wall_seconds = 0.0;
  std::uint64_t master_seed = 0;
  std::vector<std::string> outputs;  // relative to the manifest directory
  json extra = json::object();

  json to_json() const;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

}  // namespace bsq
