#pragma once

#include "phicascade/blowup.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace phicascade::cli {

/// Bad command-line input; the message names the offending flag.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Format { csv, jsonl };

struct RunConfig {
  double quad_rel_tol = 1e-12;
  double rel_gap = 1e-8;
  int max_gen = 18;
  std::uint64_t seed = 0;
  std::string cache_path;
  Format format = Format::csv;
  int threads = 1;
  std::string out;  // empty: standard output

  void validate() const;
  EvalOptions eval_options() const { return {rel_gap, max_gen, threads}; }
  nlohmann::json to_json() const;
};

/// FNV-1a over the cache format tag, version and tolerance: identifies which phi-cache
/// contents a run is compatible with.
std::string phi_cache_hash(double quad_rel_tol);

using Cell = std::variant<double, std::int64_t, std::string, bool>;

/// A rectangular result written as CSV (with a `#` header line) or JSON lines.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

/// 17 significant digits; inf and nan spelled out.
std::string format_double(double v);

void write_table(std::ostream& out, const std::string& command, const RunConfig& cfg, const Table& table);

/// Parses a dyadic literal for `flag`; decimals are rejected with a message naming the flag.
DyadicRational parse_dyadic_flag(const std::string& flag, const std::string& text);
std::vector<DyadicRational> parse_dyadic_list(const std::string& flag, const std::string& text);

/// One named pass/fail check inside a verify suite.
struct Check {
  std::string name;
  bool pass = false;
  double value = 0;
  double limit = 0;
  std::string detail;
};

std::vector<Check> verify_phi(const RunConfig& cfg, const PhiConfig& phi);
std::vector<Check> verify_mu(const RunConfig& cfg, const PhiConfig& phi);
std::vector<Check> verify_tangent(const RunConfig& cfg, const PhiConfig& phi);

/// Entry point; returns the process exit status.
int run(int argc, char** argv);

}  // namespace phicascade::cli
