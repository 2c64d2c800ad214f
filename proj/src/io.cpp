#include "dpsvd/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "dpsvd/error.hpp"

namespace dpsvd {

namespace {

using json = nlohmann::json;

[[noreturn]] void parse_error(const std::string& source, int line,
                              const std::string& what) {
  data_error(source + ":" + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Nonnegative decimal integer; anything else is reported with its line.
std::uint64_t parse_count(const std::string& raw, const std::string& source,
                          int line) {
  const std::string s = trim(raw);
  if (s.empty()) parse_error(source, line, "empty cell");
  std::size_t i = s[0] == '+' ? 1 : 0;
  if (s[0] == '-') parse_error(source, line, "negative count '" + s + "'");
  if (i == s.size()) parse_error(source, line, "non-integer cell '" + s + "'");
  std::uint64_t v = 0;
  constexpr auto max = std::numeric_limits<std::uint64_t>::max();
  for (; i < s.size(); ++i) {
    const char ch = s[i];
    if (ch < '0' || ch > '9')
      parse_error(source, line, "non-integer cell '" + s + "'");
    const auto digit = static_cast<std::uint64_t>(ch - '0');
    if (v > (max - digit) / 10) parse_error(source, line, "count overflows");
    v = v * 10 + digit;
  }
  return v;
}

long long parse_index(const std::string& s, const std::string& source,
                      int line, const char* what) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size())
    parse_error(source, line, std::string("bad ") + what + " '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

CountMatrix read_dense(std::istream& in, const std::string& source) {
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) {
      header = split_csv(trim(line));
      break;
    }
  }
  if (header.empty()) data_error(source + ": empty file, expected a header row");
  const auto d = static_cast<Eigen::Index>(header.size());
  std::vector<CountEntry> entries;
  Eigen::Index n = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(trim(line));
    if (static_cast<Eigen::Index>(cells.size()) != d)
      parse_error(source, lineno,
                  "expected " + std::to_string(d) + " cells, found " +
                      std::to_string(cells.size()));
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto v =
          parse_count(cells[static_cast<std::size_t>(j)], source, lineno);
      if (v != 0) entries.push_back({n, j, v});
    }
    ++n;
  }
  if (n == 0) data_error(source + ": no data rows");
  return CountMatrix::from_entries(n, d, entries);
}

CountMatrix read_sparse(std::istream& in, const std::string& source) {
  std::string line;
  int lineno = 0;
  auto next = [&](std::vector<std::string>& fields) {
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '%') continue;
      std::istringstream is(t);
      fields.clear();
      for (std::string f; is >> f;) fields.push_back(f);
      return true;
    }
    return false;
  };
  std::vector<std::string> f;
  if (!next(f)) data_error(source + ": missing size line 'n d nnz'");
  if (f.size() != 3) parse_error(source, lineno, "size line must be 'n d nnz'");
  const long long n = parse_index(f[0], source, lineno, "row count");
  const long long d = parse_index(f[1], source, lineno, "column count");
  const long long nnz = parse_index(f[2], source, lineno, "entry count");
  if (n < 1 || d < 1 || nnz < 0)
    parse_error(source, lineno, "sizes must be positive");
  std::vector<CountEntry> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  for (long long e = 0; e < nnz; ++e) {
    if (!next(f))
      data_error(source + ": expected " + std::to_string(nnz) +
                 " entries, found " + std::to_string(e));
    if (f.size() != 3) parse_error(source, lineno, "entry must be 'row col value'");
    const long long i = parse_index(f[0], source, lineno, "row index");
    const long long j = parse_index(f[1], source, lineno, "column index");
    if (i < 1 || i > n || j < 1 || j > d)
      parse_error(source, lineno, "index out of range");
    entries.push_back({static_cast<Eigen::Index>(i - 1),
                       static_cast<Eigen::Index>(j - 1),
                       parse_count(f[2], source, lineno)});
  }
  if (next(f)) parse_error(source, lineno, "more entries than declared");
  return CountMatrix::from_entries(n, d, entries);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) data_error("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) data_error("cannot open '" + path + "' for writing");
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from(const json& j, const std::string& name,
                            const std::string& source) {
  try {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 ||
        data.size() != static_cast<std::size_t>(rows * cols))
      data_error(source + ": '" + name + "' shape does not match its data");
    Eigen::MatrixXd m(rows, cols);
    std::size_t t = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[t++].get<double>();
    return m;
  } catch (const json::exception& e) {
    data_error(source + ": malformed '" + name + "': " + e.what());
  }
}

void check_finite(const Eigen::MatrixXd& m, const char* name) {
  if (!m.allFinite())
    numerical_error(std::string("model: non-finite entries in ") + name);
}

}  // namespace

CountFormat parse_count_format(const std::string& name) {
  if (name == "dense-csv" || name == "csv") return CountFormat::dense_csv;
  if (name == "sparse-coordinate" || name == "mtx")
    return CountFormat::sparse_coordinate;
  usage_error("unknown format '" + name +
              "' (expected dense-csv or sparse-coordinate)");
}

CountMatrix read_counts(std::istream& in, CountFormat format,
                        const std::string& source) {
  return format == CountFormat::dense_csv ? read_dense(in, source)
                                          : read_sparse(in, source);
}

CountMatrix read_counts(const std::string& path, CountFormat format) {
  auto in = open_in(path);
  return read_counts(in, format, path);
}

void write_counts(std::ostream& out, const CountMatrix& x, CountFormat format) {
  if (format == CountFormat::dense_csv) {
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      out << (j ? "," : "") << "c" << (j + 1);
    out << "\n";
    const Eigen::MatrixXd m = x.to_dense();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        out << (j ? "," : "") << static_cast<std::uint64_t>(m(i, j));
      out << "\n";
    }
    return;
  }
  auto entries = x.entries();
  // Row-major order reads more naturally.
  std::stable_sort(entries.begin(), entries.end(),
                   [](const CountEntry& a, const CountEntry& b) {
                     return a.row != b.row ? a.row < b.row : a.col < b.col;
                   });
  out << "%%MatrixMarket matrix coordinate integer general\n";
  out << x.rows() << " " << x.cols() << " " << entries.size() << "\n";
  for (const auto& e : entries)
    out << (e.row + 1) << " " << (e.col + 1) << " " << e.value << "\n";
}

void write_counts(const std::string& path, const CountMatrix& x,
                  CountFormat format) {
  auto out = open_out(path);
  write_counts(out, x, format);
  if (!out) data_error("write to '" + path + "' failed");
}

std::string to_string(Lineage lineage) {
  switch (lineage) {
    case Lineage::raw: return "raw";
    case Lineage::ib_debiased: return "ib-debiased";
    case Lineage::classical_debiased: return "classical-debiased";
  }
  return "raw";
}

Lineage parse_lineage(const std::string& name) {
  if (name == "raw") return Lineage::raw;
  if (name == "ib-debiased") return Lineage::ib_debiased;
  if (name == "classical-debiased") return Lineage::classical_debiased;
  data_error("unknown model lineage '" + name + "'");
}

void write_model(std::ostream& out, const ModelFile& model) {
  check_finite(model.fit.mu, "mu");
  check_finite(model.fit.V, "V");
  if (model.has_scores) check_finite(model.fit.A, "A");
  json j;
  j["format"] = "dpsvd-model";
  j["version"] = model.version;
  j["n"] = model.has_scores ? model.fit.rows() : 0;
  j["d"] = model.fit.cols();
  j["k"] = model.fit.rank();
  j["mu"] = std::vector<double>(model.fit.mu.data(),
                                model.fit.mu.data() + model.fit.mu.size());
  j["V"] = matrix_json(model.fit.V);
  if (model.has_scores) j["A"] = matrix_json(model.fit.A);
  if (model.sigma2) {
    if (!std::isfinite(*model.sigma2)) numerical_error("model: non-finite sigma2");
    j["sigma2"] = *model.sigma2;
  }
  j["provenance"] = {{"lineage", to_string(model.lineage)},
                     {"seed", model.seed},
                     {"options", model.options}};
  out << j.dump(1) << "\n";
}

void write_model(const std::string& path, const ModelFile& model) {
  auto out = open_out(path);
  write_model(out, model);
  if (!out) data_error("write to '" + path + "' failed");
}

ModelFile read_model(std::istream& in, const std::string& source) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    data_error(source + ": not a model file: " + e.what());
  }
  ModelFile m;
  try {
    if (j.value("format", "") != "dpsvd-model")
      data_error(source + ": not a model file");
    m.version = j.at("version").get<int>();
    if (m.version != ModelFile::current_version)
      data_error(source + ": model format version " +
                 std::to_string(m.version) + " is not supported (expected " +
                 std::to_string(ModelFile::current_version) + ")");
    const auto mu = j.at("mu").get<std::vector<double>>();
    m.fit.mu = Eigen::Map<const Eigen::VectorXd>(
        mu.data(), static_cast<Eigen::Index>(mu.size()));
    m.fit.V = matrix_from(j.at("V"), "V", source);
    m.has_scores = j.contains("A");
    m.fit.A = m.has_scores ? matrix_from(j.at("A"), "A", source)
                           : Eigen::MatrixXd(0, m.fit.V.cols());
    if (j.contains("sigma2")) m.sigma2 = j.at("sigma2").get<double>();
    const auto& p = j.at("provenance");
    m.lineage = parse_lineage(p.at("lineage").get<std::string>());
    m.seed = p.at("seed").get<std::uint64_t>();
    m.options = p.at("options").get<std::map<std::string, std::string>>();
    const auto d = j.at("d").get<Eigen::Index>();
    const auto k = j.at("k").get<Eigen::Index>();
    const auto n = j.at("n").get<Eigen::Index>();
    if (m.fit.mu.size() != d || m.fit.V.rows() != d || m.fit.V.cols() != k ||
        (m.has_scores && (m.fit.A.rows() != n || m.fit.A.cols() != k)))
      data_error(source + ": array shapes disagree with n, d, k");
  } catch (const json::exception& e) {
    data_error(source + ": malformed model file: " + e.what());
  }
  return m;
}

ModelFile read_model(const std::string& path) {
  auto in = open_in(path);
  return read_model(in, path);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_results(std::ostream& out, const ResultTable& rows) {
  out << "scenario,spec_hash,seed,replicate,stage,metric,value\n";
  for (const auto& r : rows) {
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(r.spec_hash));
    out << r.scenario << "," << hash << "," << r.seed << "," << r.replicate
        << "," << r.stage << "," << r.metric << "," << format_double(r.value)
        << "\n";
  }
}

void write_matrix_csv(std::ostream& out, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& values) {
  for (std::size_t j = 0; j < header.size(); ++j)
    out << (j ? "," : "") << header[j];
  out << "\n";
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      out << (j ? "," : "") << format_double(values(i, j));
    out << "\n";
  }
}

}  // namespace dpsvd
