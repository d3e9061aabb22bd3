#include "msv/io.hpp"

#include "msv/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

namespace msv {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw DataError("cannot parse '" + std::string(text) + "' as a number");
  }
  return v;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA";
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::string context(const std::string& source, long line, std::size_t column) {
  std::string s = source + ": line " + std::to_string(line);
  if (column > 0) s += ", column " + std::to_string(column);
  return s;
}

}  // namespace

ReturnsPanel parse_panel(std::istream& in, const std::string& source) {
  std::string line;
  long line_no = 0;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    for (std::string_view n : split(line)) names.emplace_back(n);
    break;
  }
  if (names.empty()) throw DataError(source + ": missing header row");
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (names[c].empty()) throw DataError(context(source, line_no, c + 1) + ": empty asset name");
  }
  const std::size_t cols = names.size();

  std::vector<double> values;
  std::vector<unsigned char> mask;
  long rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != cols) {
      throw DataError(context(source, line_no, 0) + ": expected " + std::to_string(cols) +
                      " fields, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (is_missing(cells[c])) {
        values.push_back(0.0);
        mask.push_back(0);
        continue;
      }
      double v = 0.0;
      try {
        v = parse_double(cells[c]);
      } catch (const DataError& e) {
        throw DataError(context(source, line_no, c + 1) + ": " + e.what());
      }
      if (!std::isfinite(v)) {
        throw DataError(context(source, line_no, c + 1) + ": non-finite value");
      }
      values.push_back(v);
      mask.push_back(1);
    }
    ++rows;
  }
  if (rows == 0) throw DataError(source + ": no data rows");

  ReturnsPanel::Values v = Eigen::Map<ReturnsPanel::Values>(values.data(), rows, static_cast<Eigen::Index>(cols));
  ReturnsPanel::Mask m = Eigen::Map<ReturnsPanel::Mask>(mask.data(), rows, static_cast<Eigen::Index>(cols));
  for (std::size_t c = 0; c < cols; ++c) {
    if (m.col(static_cast<Eigen::Index>(c)).cast<int>().sum() == 0) {
      throw DataError(source + ": column " + std::to_string(c + 1) + " (" + names[c] +
                      ") has no observations");
    }
  }
  return ReturnsPanel(std::move(v), std::move(m), std::move(names));
}

ReturnsPanel ingest(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_panel(in, path.string());
}

void write_panel(std::ostream& out, const ReturnsPanel& panel) {
  for (int n = 0; n < panel.assets(); ++n) {
    if (n > 0) out << ',';
    out << (panel.names.empty() ? "a" + std::to_string(n + 1) : panel.names[n]);
  }
  out << '\n';
  for (int t = 0; t < panel.horizon(); ++t) {
    for (int n = 0; n < panel.assets(); ++n) {
      if (n > 0) out << ',';
      if (panel.is_observed(t, n)) out << format_double(panel.values(t, n));
    }
    out << '\n';
  }
}

void export_panel(const std::filesystem::path& path, const ReturnsPanel& panel) {
  auto out = open_output(path);
  write_panel(out, panel);
}

Eigen::MatrixXd parse_matrix(std::istream& in, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::size_t c = 0;
    for (std::string_view cell : split(line)) {
      ++c;
      try {
        row.push_back(parse_double(cell));
      } catch (const DataError& e) {
        throw DataError(context(source, line_no, c) + ": " + e.what());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError(context(source, line_no, 0) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(source + ": empty matrix");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_matrix(in, path.string());
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ',';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  auto out = open_output(path);
  write_matrix(out, m);
}

// ---------------------------------------------------------------- draws

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw DataError("draws file: matrix has the wrong number of rows");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw DataError("draws file: matrix has the wrong number of columns");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json vector_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from(const json& j, Eigen::Index n) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != n) throw DataError("draws file: vector length mismatch");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

constexpr int kDrawsVersion = 1;

}  // namespace

void save_draws(const std::filesystem::path& path, const PosteriorDraws& draws) {
  json j;
  j["version"] = kDrawsVersion;
  j["factors"] = draws.factors;
  j["assets"] = draws.assets;
  j["horizon"] = draws.horizon;
  j["mode"] = draws.mode == ModelMode::basic ? "basic" : "factor";
  j["zero_angles"] = draws.zero_angles;
  j["block_seconds"] = draws.block_seconds;
  json list = json::array();
  for (const Draw& d : draws.draws) {
    json e;
    json params = json::array();
    for (const ArParams& p : d.params) params.push_back({p.phi_tilde, p.level, p.sigma});
    e["params"] = std::move(params);
    e["hyper"] = {d.hyper.mu_h, d.hyper.lambda_h, d.hyper.mu_delta, d.hyper.lambda_delta};
    e["loadings"] = matrix_json(d.loadings);
    e["sigma2"] = d.sigma2;
    e["last_state"] = vector_json(d.last_state);
    e["last_factor"] = vector_json(d.last_factor);
    e["log_likelihood"] = d.log_likelihood;
    if (d.full_x) e["full_x"] = matrix_json(*d.full_x);
    list.push_back(std::move(e));
  }
  j["draws"] = std::move(list);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump() << '\n';
}

PosteriorDraws load_draws(const std::filesystem::path& path) {
  auto in = open_input(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  try {
    if (j.at("version").get<int>() != kDrawsVersion) {
      throw DataError(path.string() + ": unsupported draws version");
    }
    PosteriorDraws out;
    out.factors = j.at("factors").get<int>();
    out.assets = j.at("assets").get<int>();
    out.horizon = j.at("horizon").get<int>();
    out.mode = j.at("mode").get<std::string>() == "basic" ? ModelMode::basic : ModelMode::factor;
    out.zero_angles = j.at("zero_angles").get<bool>();
    out.block_seconds = j.at("block_seconds").get<std::map<std::string, double>>();
    const int n_paths = path_count(out.factors);
    for (const json& e : j.at("draws")) {
      Draw d;
      for (const json& p : e.at("params")) {
        d.params.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
      }
      if (static_cast<int>(d.params.size()) != n_paths) throw DataError("draws file: path count mismatch");
      const json& h = e.at("hyper");
      d.hyper = {h.at(0).get<double>(), h.at(1).get<double>(), h.at(2).get<double>(),
                 h.at(3).get<double>()};
      d.loadings = matrix_from(e.at("loadings"), out.assets, out.factors);
      d.sigma2 = e.at("sigma2").get<double>();
      d.last_state = vector_from(e.at("last_state"), n_paths);
      d.last_factor = vector_from(e.at("last_factor"), out.factors);
      d.log_likelihood = e.at("log_likelihood").get<double>();
      if (e.contains("full_x")) {
        d.full_x = matrix_from(e.at("full_x"), n_paths, out.horizon);
      }
      out.draws.push_back(std::move(d));
    }
    return out;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace msv
