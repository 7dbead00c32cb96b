#pragma once

// The train / sample / inpaint / eval commands behind the CLI. Each one
// writes into a fresh output directory guarded by a lock file and leaves a
// manifest.json that records everything needed to re-run it.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bridgevq {

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<int> count;
  std::optional<int> stride;
  std::optional<std::string> mask;             // inpaint: pinned positions
  std::optional<std::filesystem::path> dataset;  // eval: reference data
  std::optional<std::filesystem::path> samples;  // eval: sequences to score instead of sampling
  std::string metrics = "validity,kl,nll";
};

// All commands throw on failure (InvalidParameter, FormatError, NonFiniteLoss,
// filesystem errors); the CLI maps exceptions to a nonzero exit status.
void cmd_train(const CommandOptions& opts);
void cmd_sample(const CommandOptions& opts);
void cmd_inpaint(const CommandOptions& opts);
void cmd_eval(const CommandOptions& opts);

/// Git blob id: SHA-1 over "blob <size>\0" followed by the bytes.
std::string git_blob_hash(const std::string& bytes);
std::string sha1_hex(const std::string& bytes);

/// Reads columns q0..q{N-1} from any CSV carrying them (datasets, sequences).
std::vector<std::vector<int>> read_sequences_csv(const std::filesystem::path& path);

/// Verbosity from BRIDGEVQ_LOG: 0 quiet, 1 info (default), 2 debug.
int log_level();

}  // namespace bridgevq
