#pragma once

// Batch experiments behind the command-line driver: config parsing, the
// per-command runners and artifact emission with embedded config hash.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ovfree/json_io.hpp"

namespace ovfree {

inline constexpr const char* kCommands[] = {"g-eval",   "r-eval", "certify", "convolve",       "truncate-sweep", "moments",
                                            "fbcs",     "neumann", "killer", "block-identity", "convergence"};

struct ExperimentConfig {
  std::string command;
  std::uint64_t seed = 1;
  Json params = Json::object();
  std::string output = "-";
  Json source;  ///< the config as given, for hashing
};

/// Throws SchemaError on unknown keys, unknown commands or bad types.
ExperimentConfig parse_config(const Json& j);

using Cell = std::variant<double, long long, std::string>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;
};

struct ExperimentResult {
  Json summary = Json::object();
  std::optional<Table> table;
};

/// Throws SchemaError for bad params and ovfree::Error for numerical failures.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// RFC-4180 rows, doubles with 17 significant digits.
void write_csv(std::ostream& os, const Table& table);

/// CSV when the output ends in .csv (or is "-" and there is a table), JSON
/// otherwise; both carry the tool version and config hash.
void write_artifact(std::ostream& os, const ExperimentConfig& config, const ExperimentResult& result, bool csv);
bool wants_csv(const ExperimentConfig& config, const ExperimentResult& result);

enum class VerifyStatus { Match, Mismatch, MissingHeader };

/// Compares the hash embedded in the artifact at path with the config's.
VerifyStatus verify_artifact(const ExperimentConfig& config, const std::string& path);

std::string tool_version();

}  // namespace ovfree
