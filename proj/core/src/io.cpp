#include <sbglm/io.hpp>

#include <sbglm/error.hpp>

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace sbglm::io {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\"");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\"");
  return s.substr(a, b - a + 1);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

Matrix read_csv(std::istream& in, std::vector<std::string>* header) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("CSV: missing header row");
  const auto names = split(line);
  if (header) {
    header->clear();
    for (const auto& n : names) header->push_back(trim(n));
  }
  const std::size_t cols = names.size();
  std::vector<double> values;
  Index rows = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != cols) {
      throw InputError("CSV line " + std::to_string(lineno) + ": expected " + std::to_string(cols) + " fields, got " +
                       std::to_string(cells.size()));
    }
    for (const auto& c : cells) {
      const std::string t = trim(c);
      double v = 0.0;
      const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
      if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw InputError("CSV line " + std::to_string(lineno) + ": '" + t + "' is not a number");
      }
      values.push_back(v);
    }
    ++rows;
  }
  Matrix m(rows, static_cast<Index>(cols));
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < static_cast<Index>(cols); ++c) m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

Matrix read_csv(const std::string& path, std::vector<std::string>* header) {
  auto in = open_in(path);
  try {
    return read_csv(in, header);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_csv(std::ostream& out, const Eigen::Ref<const Matrix>& m, const std::vector<std::string>& header) {
  if (!header.empty() && static_cast<Index>(header.size()) != m.cols()) {
    throw DimensionError("write_csv: header has " + std::to_string(header.size()) + " names for " +
                         std::to_string(m.cols()) + " columns");
  }
  for (Index c = 0; c < m.cols(); ++c) {
    if (c) out << ',';
    out << (header.empty() ? "c" + std::to_string(c) : header[c]);
  }
  out << '\n';
  char buf[32];
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      const auto res = std::to_chars(buf, buf + sizeof buf, m(r, c));
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

void write_csv(const std::string& path, const Eigen::Ref<const Matrix>& m, const std::vector<std::string>& header) {
  auto out = open_out(path);
  write_csv(out, m, header);
}

Design read_design(const std::string& path, Index tasks, Index locations) {
  const Matrix x = read_csv(path);
  if (x.cols() == tasks) return Design(x);
  if (x.cols() == tasks * locations) {
    std::vector<Matrix> per(static_cast<std::size_t>(locations));
    for (Index v = 0; v < locations; ++v) per[v] = x.middleCols(v * tasks, tasks);
    return Design(std::move(per));
  }
  throw InputError(path + ": design has " + std::to_string(x.cols()) + " columns; expected " + std::to_string(tasks) +
                   " or " + std::to_string(tasks * locations));
}

std::string theta_to_json(const Hyperparameters& theta) {
  nlohmann::json j;
  j["kappa2"] = theta.kappa2;
  j["phi"] = theta.phi;
  j["sigma2"] = theta.sigma2;
  j["tau"] = theta.tau();
  return j.dump(2);
}

Hyperparameters theta_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Hyperparameters t;
    t.kappa2 = j.at("kappa2").get<std::vector<double>>();
    t.phi = j.at("phi").get<std::vector<double>>();
    t.sigma2 = j.at("sigma2").get<double>();
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("Theta JSON: ") + e.what());
  }
}

std::string read_text(const std::string& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

}  // namespace sbglm::io
