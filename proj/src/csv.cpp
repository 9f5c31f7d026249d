#include "marketgraph/csv.hpp"

#include <array>
#include <charconv>
#include <fstream>

#include "marketgraph/errors.hpp"

namespace marketgraph::csv {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

Row split_line(std::string_view line) {
  Row out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      out.push_back(was_quoted ? field : std::string(trim(field)));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(ch);
    }
  }
  out.push_back(was_quoted ? field : std::string(trim(field)));
  return out;
}

std::vector<Row> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path.string() + "'");
  std::vector<Row> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    first = false;
    if (trim(line).empty()) continue;
    rows.push_back(split_line(line));
  }
  return rows;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::string join(const Row& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(fields[i]);
  }
  return out;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

bool parse_double(std::string_view text, double& out) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

void write_matrix(const std::filesystem::path& path, const std::vector<std::string>& labels,
                  const Tensor& m) {
  if (m.rank() != 2 || m.dim(0) != labels.size() || m.dim(1) != labels.size()) {
    throw DimensionError("write_matrix: matrix " + shape_string(m.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << join(labels) << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (j) out << ',';
      out << format_double(m.at(i, j));
    }
    out << '\n';
  }
}

LabeledRows read_matrix(const std::filesystem::path& path) {
  auto rows = read_rows(path);
  if (rows.empty()) throw IngestError("'" + path.string() + "' is empty");
  LabeledRows result;
  result.labels = rows.front();
  const std::size_t n = result.labels.size();
  if (rows.size() != n + 1) {
    throw IngestError("'" + path.string() + "': expected " + std::to_string(n) +
                      " matrix rows after the header, got " + std::to_string(rows.size() - 1));
  }
  std::vector<double> values;
  values.reserve(n * n);
  for (std::size_t i = 1; i <= n; ++i) {
    if (rows[i].size() != n) {
      throw IngestError("'" + path.string() + "': row " + std::to_string(i) + " has " +
                        std::to_string(rows[i].size()) + " cells, expected " + std::to_string(n));
    }
    for (const auto& cell : rows[i]) {
      double v = 0.0;
      if (!parse_double(cell, v)) {
        throw IngestError("'" + path.string() + "': unparseable cell '" + cell + "'");
      }
      values.push_back(v);
    }
  }
  result.values = Tensor({n, n}, std::move(values));
  return result;
}

}  // namespace marketgraph::csv
