#pragma once

// Run configuration files (YAML) and the artifacts of one run.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "superlln/experiments.hpp"

namespace superlln {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kSummarySchema = "superlln.summary/1";
inline constexpr const char* kResultsSchema = "superlln.results/1";
inline constexpr const char* kProvenanceSchema = "superlln.provenance/1";

struct RunConfig {
  ExperimentConfig experiment;
  std::string out_dir = "out";
};

bool operator==(const RunConfig& a, const RunConfig& b);

/// Parse or validation failure; `line` is 1-based, 0 when not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0);
  int line() const { return line_; }

 private:
  int line_;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

/// Every field, defaults included. parse_config_text(emit_config(c)) == c.
std::string emit_config(const RunConfig& cfg);

std::uint64_t fnv1a(const std::string& bytes);

struct RunOutcome {
  ExperimentResult result;
  int exit_code = 0;  // 0 iff every flag passed
  std::string message;
};

/// Runs the experiment and writes results.csv, summary.json, provenance.json
/// and config.yaml into cfg.out_dir.
RunOutcome run(const RunConfig& cfg);

void write_results_csv(std::ostream& out, const ExperimentResult& res);
std::string summary_json(const RunConfig& cfg, const ExperimentResult& res);

/// Registry table: id, example, constraints, lambda_c, alpha growth.
void list_examples(std::ostream& out);

/// Finite-difference check of every registry field; false if any fails.
bool check_fields(std::ostream& out, int dim = 1);

}  // namespace superlln
