#pragma once

#include "mfe/domain.hpp"
#include "mfe/measure.hpp"
#include "mfe/solver.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mfe {

using Json = nlohmann::ordered_json;

/// Config error carrying the path of the offending field, e.g. "domain.h".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : std::invalid_argument(path + ": " + message), path_(path) {}
  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  std::string path_;
};

Json to_json(const DomainSpec& spec);
DomainSpec domain_from_json(const Json& j, const std::string& path = "domain");
Json to_json(const IntensityMeasure& measure);
IntensityMeasure measure_from_json(const Json& j, const std::string& path = "measure");

/// Shortest text that reads back to the same double ("%.17g" trimmed).
std::string format_double(double x);

/// Small CSV table with a header row; cells are written with format_double.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<double> row);
  [[nodiscard]] const std::vector<std::string>& header() const { return header_; }
  [[nodiscard]] const std::vector<std::vector<double>>& rows() const { return rows_; }
  [[nodiscard]] std::vector<double> column(const std::string& name) const;
  void write(const std::filesystem::path& file) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

/// Field as CSV rows (x, y, value) over interior nodes.
void write_field_csv(const DiscreteDomain& domain, const Field& u, const std::filesystem::path& file);
/// Row-major nx-by-ny float64 array (NaN off the interior) plus a JSON header
/// next to it with the same stem.
void write_field_binary(const DiscreteDomain& domain, const Field& u, const std::filesystem::path& bin,
                        const std::filesystem::path& header);
Field read_field_binary(const DiscreteDomain& domain, const std::filesystem::path& bin,
                        const std::filesystem::path& header);

/// Line plot of y-columns against one x-column.
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};
void write_svg_plot(const std::filesystem::path& file, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<PlotSeries>& series);

void write_json(const std::filesystem::path& file, const Json& j);
Json read_json(const std::filesystem::path& file);

/// Lowercase hex SHA-256 of the file contents.
std::string sha256_file(const std::filesystem::path& file);

Json to_json(const SolveResult& entry, const std::string& field_file);

}  // namespace mfe
