#pragma once

#include <rece/checkpoint_io.hpp>
#include <rece/types.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rece::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericalFailure = 3,
  kVerificationFailure = 4,
};

enum class Preset { Unsafe, Artistic, Object, Custom };

/// Label that stands for the empty-text embedding when no destination is given.
inline constexpr const char* kDefaultDestination = "empty_text";

struct RunConfig {
  std::filesystem::path input;        // checkpoint (the original one for derive/bounds)
  std::filesystem::path edited;       // derive: the edited checkpoint
  std::filesystem::path embeddings;   // embedding table
  std::filesystem::path output;
  std::filesystem::path snapshot_dir;
  std::filesystem::path report;

  std::vector<std::string> erase;
  std::vector<std::string> preserve;
  /// Empty: every task maps to kDefaultDestination. One label: shared by all
  /// tasks. Otherwise one label per erase label.
  std::vector<std::string> destinations;
  /// Drift probes; the preserve set is used when empty.
  std::vector<std::string> probes;

  Preset preset = Preset::Unsafe;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<double> lambda;
  std::optional<int> epochs;

  SelectionPattern pattern;
  /// Keep only the leading tokens of multi-token embeddings (0 = all).
  long max_tokens = 0;
  bool bounds = false;       // edit: add bound-chain diagnostics to each record
  bool omit_timing = false;  // write wall_time_s as null for reproducible reports

  /// Preset values with explicit overrides applied.
  EditConfig edit_config() const;
};

struct VerifyConfig {
  int instances = 100;
  std::uint64_t seed = 20240501;
  bool inject_fault = false;
};

struct SynthConfig {
  std::filesystem::path output;
  std::filesystem::path embeddings_output;
  std::uint64_t seed = 1;
  long embed_dim = 768;
  double width_scale = 1.0;
};

/// Algorithm end to end: writes the edited checkpoint, per-epoch snapshots
/// (epoch_<k>.safetensors with just the edited tensors) and a JSON-lines report.
int cmd_edit(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Derived embeddings of the erase concepts for an (original, edited) pair.
int cmd_derive(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Randomized closed-form certification; exit 4 on any failure.
int cmd_verify(const VerifyConfig& config, std::ostream& out, std::ostream& err);

/// Bound-chain records for every consecutive snapshot pair; exit 4 on a violation.
int cmd_bounds(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Parameter counts and the selected fraction.
int cmd_info(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Writes `input` with the tensors of one snapshot (`edited`) copied in.
int cmd_merge(const RunConfig& config, std::ostream& out, std::ostream& err);

/// SD-shaped random checkpoint and matching embedding table.
int cmd_synth(const SynthConfig& config, std::ostream& out, std::ostream& err);

/// Parses argv (CLI11, with --config file support) and dispatches.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Path of the snapshot written for `epoch`.
std::filesystem::path snapshot_path(const std::filesystem::path& dir, int epoch);

}  // namespace rece::cli
