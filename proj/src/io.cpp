#include "certigrad/io.hpp"

#include <Eigen/Core>

#include <sys/utsname.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace certigrad::io {

namespace {

[[noreturn]] void parse_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ParseError, where + ": " + what);
}

const Json& field(const Json& j, const char* name, const std::string& where) {
  if (!j.is_object()) parse_fail(where, "expected an object");
  const auto it = j.find(name);
  if (it == j.end()) parse_fail(where, std::string("missing field '") + name + "'");
  return *it;
}

Index as_index(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) parse_fail(where, "expected an integer");
  return j.get<Index>();
}

double as_number(const Json& j, const std::string& where) {
  if (!j.is_number()) parse_fail(where, "expected a number");
  return j.get<double>();
}

std::vector<Triplet> parse_triplets(const Json& j, Index n, const std::string& where) {
  if (!j.is_array()) parse_fail(where, "expected an array of [row, col, value]");
  std::vector<Triplet> out;
  for (size_t k = 0; k < j.size(); ++k) {
    const std::string at = where + "[" + std::to_string(k) + "]";
    const Json& t = j[k];
    if (!t.is_array() || t.size() != 3) parse_fail(at, "expected [row, col, value]");
    const Index r = as_index(t[0], at + ".row");
    const Index c = as_index(t[1], at + ".col");
    const double v = as_number(t[2], at + ".value");
    if (r < 0 || r >= n) parse_fail(at, "row " + std::to_string(r) + " outside [0, " + std::to_string(n) + ")");
    if (c < 0 || c >= n) parse_fail(at, "col " + std::to_string(c) + " outside [0, " + std::to_string(n) + ")");
    if (!std::isfinite(v)) parse_fail(at, "value is not finite");
    out.push_back({r, c, v});
  }
  return out;
}

}  // namespace

void check_schema_version(const Json& j, const std::string& what) {
  const Json& v = field(j, "schema_version", what);
  if (!v.is_string()) parse_fail(what + ".schema_version", "expected a string");
  const std::string s = v.get<std::string>();
  const std::string want = kSchemaVersion;
  if (s.substr(0, s.find('.')) != want.substr(0, want.find('.'))) {
    parse_fail(what + ".schema_version", "unsupported major version '" + s + "' (this build reads " + want + ")");
  }
}

Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Convert the byte offset into line:column for the diagnostic.
    size_t line = 1, col = 1;
    for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::ParseError,
                source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON (" + e.what() + ")");
  }
}

ProblemFile parse_problem(const Json& j) {
  const std::string root = "problem";
  check_schema_version(j, root);
  const Index n = as_index(field(j, "n", root), "n");
  if (n < 1) parse_fail("n", "must be >= 1");
  const Index h = as_index(field(j, "homog_index", root), "homog_index");
  if (h < 0 || h >= n) parse_fail("homog_index", std::to_string(h) + " outside [0, " + std::to_string(n) + ")");

  ProblemFile out;
  std::vector<std::vector<Triplet>> sens;
  if (const auto it = j.find("params"); it != j.end()) {
    if (!it->is_array()) parse_fail("params", "expected an array");
    for (size_t k = 0; k < it->size(); ++k) {
      const std::string at = "params[" + std::to_string(k) + "]";
      const Json& nm = field((*it)[k], "name", at);
      if (!nm.is_string()) parse_fail(at + ".name", "expected a string");
      out.param_names.push_back(nm.get<std::string>());
      sens.push_back(parse_triplets(field((*it)[k], "sensitivity", at), n, at + ".sensitivity"));
    }
  }
  ParamSymMatrix cost(n, parse_triplets(field(j, "cost", root), n, "cost"), std::move(sens));

  std::vector<ParamSymMatrix> cons;
  std::vector<bool> flags;
  const Json& cj = field(j, "constraints", root);
  if (!cj.is_array()) parse_fail("constraints", "expected an array");
  for (size_t k = 0; k < cj.size(); ++k) {
    const std::string at = "constraints[" + std::to_string(k) + "]";
    cons.emplace_back(n, parse_triplets(field(cj[k], "triplets", at), n, at + ".triplets"));
    bool red = false;
    if (const auto r = cj[k].find("redundant"); r != cj[k].end()) {
      if (!r->is_boolean()) parse_fail(at + ".redundant", "expected a boolean");
      red = r->get<bool>();
    }
    flags.push_back(red);
  }
  try {
    out.problem = build_hom_qcqp(std::move(cost), std::move(cons), h, std::move(flags));
  } catch (const Error& e) {
    parse_fail(root, e.what());
  }
  return out;
}

ProblemFile parse_problem_text(const std::string& text) { return parse_problem(parse_json_text(text, "problem")); }

ProblemFile load_problem(const std::string& path) {
  try {
    return parse_problem(parse_json_text(read_file(path), path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError && std::string(e.what()).find(path) == std::string::npos) {
      throw Error(ErrorCode::ParseError, path + ": " + std::string(e.what()).substr(sizeof("ParseError: ") - 1));
    }
    throw;
  }
}

Json triplets_to_json(const std::vector<Triplet>& t) {
  Json a = Json::array();
  for (const Triplet& e : t) a.push_back(Json::array({e.row, e.col, e.value}));
  return a;
}

Json problem_to_json(const ProblemFile& p) {
  const HomQCQP& q = p.problem;
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["n"] = q.dim();
  j["homog_index"] = q.homog_index();
  j["cost"] = triplets_to_json(q.cost().entries());
  Json cons = Json::array();
  for (Index i = 0; i < q.constraint_count(); ++i) {
    Json c;
    c["triplets"] = triplets_to_json(q.constraints()[static_cast<size_t>(i)].entries());
    c["redundant"] = static_cast<bool>(q.redundant_flags()[static_cast<size_t>(i)]);
    cons.push_back(c);
  }
  j["constraints"] = cons;
  const auto& sens = q.cost().sensitivity();
  if (!sens.empty()) {
    Json ps = Json::array();
    for (size_t k = 0; k < sens.size(); ++k) {
      Json e;
      e["name"] = k < p.param_names.size() ? p.param_names[k] : "theta" + std::to_string(k);
      e["sensitivity"] = triplets_to_json(sens[k]);
      ps.push_back(e);
    }
    j["params"] = ps;
  }
  return j;
}

Json vector_to_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json matrix_to_json(const Matrix& m) {
  Json a = Json::array();
  for (Index r = 0; r < m.rows(); ++r) a.push_back(vector_to_json(m.row(r).transpose()));
  return a;
}

Vector json_to_vector(const Json& j, const std::string& field_name) {
  if (!j.is_array()) parse_fail(field_name, "expected an array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (size_t k = 0; k < j.size(); ++k) v(static_cast<Index>(k)) = as_number(j[k], field_name + "[" + std::to_string(k) + "]");
  return v;
}

Json environment_fingerprint() {
  Json j;
  j["certigrad"] = "0.1.0";
#if defined(__clang__)
  j["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  j["compiler"] = std::string("gcc ") + __VERSION__;
#else
  j["compiler"] = "unknown";
#endif
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  j["json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
              std::to_string(NLOHMANN_JSON_VERSION_PATCH);
#ifdef NDEBUG
  j["assertions"] = false;
#else
  j["assertions"] = true;
#endif
  utsname u{};
  if (uname(&u) == 0) {
    j["system"] = std::string(u.sysname) + " " + u.release;
    j["machine"] = u.machine;
  }
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::ConfigError, "short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) { add_row(header); }

void CsvWriter::add_row(const std::vector<std::string>& cells) {
  require_dims(cells.size() == columns_, "CsvWriter: row width differs from the header");
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out_ += ',';
    const std::string& c = cells[i];
    if (c.find_first_of(",\"\n") == std::string::npos) {
      out_ += c;
    } else {
      out_ += '"';
      for (char ch : c) {
        if (ch == '"') out_ += '"';
        out_ += ch;
      }
      out_ += '"';
    }
  }
  out_ += '\n';
}

}  // namespace certigrad::io
