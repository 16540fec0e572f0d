#pragma once

// Problem files, report helpers, CSV and atomic file output.

#include "certigrad/common.hpp"
#include "certigrad/qcqp.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace certigrad::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "1.0";

/// Throws ParseError unless j["schema_version"] is a string whose major version matches kSchemaVersion.
void check_schema_version(const Json& j, const std::string& what);

// {"schema_version", "n", "homog_index", "cost": [[row, col, value], ...],
//  "constraints": [{"triplets": [...], "redundant": bool}, ...],
//  "params": [{"name", "sensitivity": [[row, col, value], ...]}, ...]}   (params optional, cost only)
struct ProblemFile {
  HomQCQP problem;
  std::vector<std::string> param_names;
};

/// Field errors name the offending entry, e.g. "constraints[1].triplets[2]".
ProblemFile parse_problem(const Json& j);
/// Syntax errors carry line and column.
ProblemFile parse_problem_text(const std::string& text);
ProblemFile load_problem(const std::string& path);
/// Triplets come out normalized (upper triangle, row-major), so parse(to_json(p)) == p.
Json problem_to_json(const ProblemFile& p);

Json parse_json_text(const std::string& text, const std::string& source);

Json triplets_to_json(const std::vector<Triplet>& t);
Json vector_to_json(const Vector& v);
/// Row-major nested arrays.
Json matrix_to_json(const Matrix& m);
Vector json_to_vector(const Json& j, const std::string& field);

/// Compiler, library versions and build type. Contains nothing run-dependent.
Json environment_fingerprint();

std::string read_file(const std::string& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

/// Shortest round-tripping decimal form ("%.17g"), "nan"/"inf" spelled out.
std::string format_double(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& cells);
  std::string str() const { return out_; }

 private:
  size_t columns_;
  std::string out_;
};

}  // namespace certigrad::io
