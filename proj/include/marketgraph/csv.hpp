#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "marketgraph/tensor.hpp"

namespace marketgraph::csv {

using Row = std::vector<std::string>;

/// Splits one line on commas. Double-quoted fields may contain commas and
/// "" escapes. Surrounding whitespace is trimmed from unquoted fields.
Row split_line(std::string_view line);

/// All non-blank lines of a file, split. Throws IngestError if unreadable.
std::vector<Row> read_rows(const std::filesystem::path& path);

std::string escape(std::string_view field);
std::string join(const Row& fields);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

/// Parses a full decimal field; returns false on trailing garbage.
bool parse_double(std::string_view text, double& out);

/// Square matrix with a header row of labels.
void write_matrix(const std::filesystem::path& path, const std::vector<std::string>& labels,
                  const Tensor& m);

struct LabeledRows {
  std::vector<std::string> labels;
  Tensor values;
};
LabeledRows read_matrix(const std::filesystem::path& path);

}  // namespace marketgraph::csv
