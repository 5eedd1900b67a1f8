#include "mfe/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

namespace mfe {

namespace fs = std::filesystem;

namespace {

void check_keys(const Json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key)) throw ConfigError(path + "." + key, "unknown field");
}

double number(const Json& j, const std::string& path, const std::string& key) {
  if (!j.contains(key)) throw ConfigError(path + "." + key, "missing");
  if (!j[key].is_number()) throw ConfigError(path + "." + key, "expected a number");
  return j[key].get<double>();
}

Vec2 point(const Json& j, const std::string& path, const std::string& key) {
  if (!j.contains(key)) throw ConfigError(path + "." + key, "missing");
  const Json& p = j[key];
  if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
    throw ConfigError(path + "." + key, "expected [x, y]");
  return {p[0].get<double>(), p[1].get<double>()};
}

Json point_json(Vec2 p) { return Json::array({p.x, p.y}); }

std::vector<double> numbers(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(j[i].get<double>());
  }
  return out;
}

std::ofstream open_out(const fs::path& file, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(file, mode);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

Json to_json(const DomainSpec& spec) {
  Json j;
  j["kind"] = to_string(spec.kind);
  switch (spec.kind) {
    case DomainKind::rectangle:
      j["lo"] = point_json(spec.lo);
      j["hi"] = point_json(spec.hi);
      break;
    case DomainKind::disk:
      j["center"] = point_json(spec.outer.center);
      j["radius"] = spec.outer.radius;
      break;
    case DomainKind::annulus:
      j["center"] = point_json(spec.outer.center);
      j["r_inner"] = spec.hole->radius;
      j["r_outer"] = spec.outer.radius;
      break;
    case DomainKind::rectangle_with_hole:
      j["lo"] = point_json(spec.lo);
      j["hi"] = point_json(spec.hi);
      j["hole"] = {{"center", point_json(spec.hole->center)}, {"radius", spec.hole->radius}};
      break;
  }
  j["h"] = spec.h;
  return j;
}

DomainSpec domain_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError(path + ".kind", "expected a string");
  DomainKind kind;
  try {
    kind = domain_kind_from_string(j["kind"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ".kind", e.what());
  }
  double h = number(j, path, "h");
  try {
    switch (kind) {
      case DomainKind::rectangle:
        check_keys(j, path, {"kind", "lo", "hi", "h"});
        return DomainSpec::rectangle(point(j, path, "lo"), point(j, path, "hi"), h);
      case DomainKind::disk:
        check_keys(j, path, {"kind", "center", "radius", "h"});
        return DomainSpec::disk(point(j, path, "center"), number(j, path, "radius"), h);
      case DomainKind::annulus:
        check_keys(j, path, {"kind", "center", "r_inner", "r_outer", "h"});
        return DomainSpec::annulus(point(j, path, "center"), number(j, path, "r_inner"), number(j, path, "r_outer"),
                                   h);
      case DomainKind::rectangle_with_hole: {
        check_keys(j, path, {"kind", "lo", "hi", "hole", "h"});
        if (!j.contains("hole")) throw ConfigError(path + ".hole", "missing");
        check_keys(j["hole"], path + ".hole", {"center", "radius"});
        Circle hole{point(j["hole"], path + ".hole", "center"), number(j["hole"], path + ".hole", "radius")};
        return DomainSpec::rectangle_with_hole(point(j, path, "lo"), point(j, path, "hi"), hole, h);
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  throw ConfigError(path + ".kind", "unsupported");
}

Json to_json(const IntensityMeasure& measure) {
  Json atoms = Json::array();
  for (const Atom& a : measure.atoms()) atoms.push_back({{"alpha", a.alpha}, {"weight", a.weight}});
  Json j;
  j["atoms"] = atoms;
  j["density"] = {{"breakpoints", measure.density().breakpoints}, {"values", measure.density().values}};
  j["quadrature_nodes"] = measure.quadrature_nodes();
  return j;
}

IntensityMeasure measure_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"atoms", "density", "quadrature_nodes"});
  std::vector<Atom> atoms;
  if (j.contains("atoms")) {
    const Json& a = j["atoms"];
    if (!a.is_array()) throw ConfigError(path + ".atoms", "expected an array");
    for (std::size_t i = 0; i < a.size(); ++i) {
      std::string p = path + ".atoms[" + std::to_string(i) + "]";
      check_keys(a[i], p, {"alpha", "weight"});
      atoms.push_back({number(a[i], p, "alpha"), number(a[i], p, "weight")});
    }
  }
  PiecewiseLinearDensity density;
  if (j.contains("density")) {
    check_keys(j["density"], path + ".density", {"breakpoints", "values"});
    if (j["density"].contains("breakpoints"))
      density.breakpoints = numbers(j["density"]["breakpoints"], path + ".density.breakpoints");
    if (j["density"].contains("values")) density.values = numbers(j["density"]["values"], path + ".density.values");
  }
  int nodes = 64;
  if (j.contains("quadrature_nodes")) {
    if (!j["quadrature_nodes"].is_number_integer()) throw ConfigError(path + ".quadrature_nodes", "expected an integer");
    nodes = j["quadrature_nodes"].get<int>();
  }
  try {
    return IntensityMeasure(std::move(atoms), std::move(density), nodes);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

void CsvTable::add(std::vector<double> row) {
  if (row.size() != header_.size()) throw std::invalid_argument("CsvTable: row width differs from header");
  rows_.push_back(std::move(row));
}

std::vector<double> CsvTable::column(const std::string& name) const {
  auto it = std::find(header_.begin(), header_.end(), name);
  if (it == header_.end()) throw std::invalid_argument("CsvTable: no column " + name);
  auto c = static_cast<std::size_t>(it - header_.begin());
  std::vector<double> out;
  for (const auto& r : rows_) out.push_back(r[c]);
  return out;
}

void CsvTable::write(const fs::path& file) const {
  std::ofstream out = open_out(file);
  for (std::size_t c = 0; c < header_.size(); ++c) out << (c ? "," : "") << header_[c];
  out << '\n';
  for (const auto& r : rows_) {
    for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << format_double(r[c]);
    out << '\n';
  }
}

void write_field_csv(const DiscreteDomain& domain, const Field& u, const fs::path& file) {
  domain.check_shape(u);
  CsvTable t({"x", "y", "value"});
  for (Eigen::Index q = 0; q < domain.size(); ++q) {
    Vec2 p = domain.position(q);
    t.add({p.x, p.y, u.values[q]});
  }
  t.write(file);
}

void write_field_binary(const DiscreteDomain& domain, const Field& u, const fs::path& bin, const fs::path& header) {
  domain.check_shape(u);
  const auto nx = static_cast<std::size_t>(domain.nx()), ny = static_cast<std::size_t>(domain.ny());
  std::vector<double> grid(nx * ny, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index q = 0; q < domain.size(); ++q) {
    auto [i, j] = domain.grid_ij(q);
    grid[static_cast<std::size_t>(j) * nx + static_cast<std::size_t>(i)] = u.values[q];
  }
  std::ofstream out = open_out(bin, std::ios::out | std::ios::binary);
  out.write(reinterpret_cast<const char*>(grid.data()), static_cast<std::streamsize>(grid.size() * sizeof(double)));
  Vec2 lo = domain.node(0, 0), hi = domain.node(domain.nx() - 1, domain.ny() - 1);
  Json h;
  h["format"] = "float64 little-endian, row-major, row index j along y";
  h["data"] = bin.filename().string();
  h["nx"] = nx;
  h["ny"] = ny;
  h["h"] = domain.h();
  h["bounding_box"] = {{"lo", point_json(lo)}, {"hi", point_json(hi)}};
  h["outside"] = "NaN";
  h["boundary_value"] = u.boundary_value;
  h["interior_nodes"] = domain.size();
  write_json(header, h);
}

Field read_field_binary(const DiscreteDomain& domain, const fs::path& bin, const fs::path& header) {
  Json h = read_json(header);
  const auto nx = h.at("nx").get<std::size_t>(), ny = h.at("ny").get<std::size_t>();
  if (nx != static_cast<std::size_t>(domain.nx()) || ny != static_cast<std::size_t>(domain.ny()) ||
      h.at("h").get<double>() != domain.h())
    throw std::invalid_argument("read_field_binary: " + header.string() + " does not match the domain grid");
  std::vector<double> grid(nx * ny);
  std::ifstream in(bin, std::ios::binary);
  if (!in.read(reinterpret_cast<char*>(grid.data()), static_cast<std::streamsize>(grid.size() * sizeof(double))))
    throw std::runtime_error("read_field_binary: short read from " + bin.string());
  Field u = domain.zero_field();
  u.boundary_value = h.at("boundary_value").get<double>();
  for (Eigen::Index q = 0; q < domain.size(); ++q) {
    auto [i, j] = domain.grid_ij(q);
    u.values[q] = grid[static_cast<std::size_t>(j) * nx + static_cast<std::size_t>(i)];
  }
  return u;
}

void write_svg_plot(const fs::path& file, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<PlotSeries>& series) {
  constexpr double width = 640, height = 420, left = 70, right = 20, top = 40, bottom = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const PlotSeries& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (width - left - right); };
  auto py = [&](double y) { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream out = open_out(file);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << width - left - right << "\" height=\""
      << height - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    double xv = x0 + (x1 - x0) * t / 4, yv = y0 + (y1 - y0) * t / 4;
    out << "<text x=\"" << px(xv) << "\" y=\"" << height - bottom + 16 << "\" text-anchor=\"middle\">"
        << format_double(std::round(xv * 1e4) / 1e4) << "</text>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
        << format_double(std::round(yv * 1e4) / 1e4) << "</text>\n";
  }
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">" << xml_escape(x_label)
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << height / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << height / 2
      << ")\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % std::size(colors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      if (std::isfinite(series[s].x[i]) && std::isfinite(series[s].y[i]))
        out << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << left + 10 << "\" y=\"" << top + 16 + 14 * static_cast<double>(s) << "\" fill=\"" << color
        << "\">" << xml_escape(series[s].label) << "</text>\n";
  }
  out << "</svg>\n";
}

void write_json(const fs::path& file, const Json& j) {
  std::ofstream out = open_out(file);
  out << j.dump(2) << '\n';
}

Json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(file.string(), e.what());
  }
}

std::string sha256_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char pair[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(pair, sizeof pair, "%02x", md[i]);
    hex += pair;
  }
  return hex;
}

Json to_json(const SolveResult& entry, const std::string& field_file) {
  Json j;
  j["lambda"] = entry.lambda;
  j["converged"] = entry.converged;
  j["residual"] = entry.residual;
  j["iterations"] = entry.iterations;
  j["u_max"] = entry.u_max;
  j["u_max_location"] = point_json(entry.u_max_location);
  j["vortex_mass"] = entry.vortex_mass;
  j["log_denominator"] = entry.log_denominator;
  j["max_density"] = entry.max_density;
  if (!entry.diagnostic.empty()) j["diagnostic"] = entry.diagnostic;
  if (!field_file.empty()) j["field"] = field_file;
  return j;
}

}  // namespace mfe
