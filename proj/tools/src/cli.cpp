#include "rece_cli/commands.hpp"

#include <CLI11.hpp>

#include <map>
#include <ostream>

namespace rece::cli {
namespace {

void add_checkpoint_options(CLI::App& cmd, RunConfig& c) {
  cmd.add_option("--include", c.pattern.include,
                 "name substrings a tensor must contain to be selected")
      ->default_str("attn2");
  cmd.add_option("--key-suffix", c.pattern.key_suffix)->capture_default_str();
  cmd.add_option("--value-suffix", c.pattern.value_suffix)->capture_default_str();
  cmd.add_flag("--transpose", c.pattern.transpose, "weights are stored [in, out]");
}

void add_concept_options(CLI::App& cmd, RunConfig& c) {
  cmd.add_option("--embeddings", c.embeddings, "embedding table (.safetensors)");
  cmd.add_option("--erase", c.erase, "concept labels to erase");
  cmd.add_option("--preserve", c.preserve, "concept labels to preserve");
  cmd.add_option("--dest", c.destinations, "destination labels (one shared or one per concept)");
  cmd.add_option("--probe", c.probes, "drift probe labels (default: the preserve set)");
  cmd.add_option("--max-tokens", c.max_tokens, "keep at most this many leading tokens")
      ->check(CLI::NonNegativeNumber);
}

void add_hyper_options(CLI::App& cmd, RunConfig& c) {
  static const std::map<std::string, Preset> presets{{"unsafe", Preset::Unsafe},
                                                      {"artistic", Preset::Artistic},
                                                      {"object", Preset::Object}};
  cmd.add_option("--preset", c.preset, "unsafe | artistic | object")
      ->transform(CLI::CheckedTransformer(presets, CLI::ignore_case))
      ->default_str("unsafe");
  cmd.add_option("--lambda1", c.lambda1, "preserve weight in the edit");
  cmd.add_option("--lambda2", c.lambda2, "ridge weight in the edit");
  cmd.add_option("--lambda", c.lambda, "ridge weight in the derivation");
  cmd.add_option("--epochs", c.epochs, "derive-and-erase rounds after the first edit");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Concept erasure by closed-form cross-attention edits", "rece"};
  app.set_config("--config", "", "TOML/INI file with option defaults");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  RunConfig edit, derive, bounds, info, merge;
  VerifyConfig verify;
  SynthConfig synth;

  auto* edit_cmd = app.add_subcommand("edit", "erase concepts and write the edited checkpoint");
  edit_cmd->add_option("--input", edit.input, "checkpoint")->required();
  edit_cmd->add_option("--output", edit.output, "edited checkpoint")->required();
  edit_cmd->add_option("--snapshot-dir", edit.snapshot_dir, "per-epoch snapshots");
  edit_cmd->add_option("--report", edit.report, "JSON-lines report");
  edit_cmd->add_flag("--bounds", edit.bounds, "add bound-chain diagnostics to the report");
  edit_cmd->add_flag("--omit-timing", edit.omit_timing, "write null wall times");
  add_checkpoint_options(*edit_cmd, edit);
  add_concept_options(*edit_cmd, edit);
  add_hyper_options(*edit_cmd, edit);

  auto* derive_cmd = app.add_subcommand("derive", "derived embeddings for an edited checkpoint");
  derive_cmd->add_option("--input", derive.input, "original checkpoint")->required();
  derive_cmd->add_option("--edited", derive.edited, "edited checkpoint")->required();
  derive_cmd->add_option("--output", derive.output, "table of derived embeddings");
  derive_cmd->add_option("--report", derive.report, "JSON-lines report");
  add_checkpoint_options(*derive_cmd, derive);
  add_concept_options(*derive_cmd, derive);
  add_hyper_options(*derive_cmd, derive);

  auto* verify_cmd = app.add_subcommand("verify", "randomized closed-form certification");
  verify_cmd->add_option("--instances", verify.instances)->capture_default_str();
  verify_cmd->add_option("--seed", verify.seed)->capture_default_str();
  verify_cmd->add_flag("--inject-fault", verify.inject_fault, "perturb closed forms (self-test)");

  auto* bounds_cmd = app.add_subcommand("bounds", "check the error-bound chain on snapshots");
  bounds_cmd->add_option("--input", bounds.input, "original checkpoint")->required();
  bounds_cmd->add_option("--snapshot-dir", bounds.snapshot_dir)->required();
  bounds_cmd->add_option("--report", bounds.report, "JSON-lines report");
  add_checkpoint_options(*bounds_cmd, bounds);
  add_concept_options(*bounds_cmd, bounds);
  add_hyper_options(*bounds_cmd, bounds);

  auto* info_cmd = app.add_subcommand("info", "parameter counts of a checkpoint");
  info_cmd->add_option("--input", info.input)->required();
  add_checkpoint_options(*info_cmd, info);

  auto* merge_cmd = app.add_subcommand("merge", "copy a snapshot's tensors into a checkpoint");
  merge_cmd->add_option("--input", merge.input, "base checkpoint")->required();
  merge_cmd->add_option("--snapshot", merge.edited, "snapshot file")->required();
  merge_cmd->add_option("--output", merge.output)->required();

  auto* synth_cmd = app.add_subcommand("synth", "write a random SD-shaped checkpoint");
  synth_cmd->add_option("--output", synth.output)->required();
  synth_cmd->add_option("--embeddings-output", synth.embeddings_output);
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--dim", synth.embed_dim)->capture_default_str();
  synth_cmd->add_option("--width-scale", synth.width_scale)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  if (edit_cmd->parsed()) return cmd_edit(edit, out, err);
  if (derive_cmd->parsed()) return cmd_derive(derive, out, err);
  if (verify_cmd->parsed()) return cmd_verify(verify, out, err);
  if (bounds_cmd->parsed()) return cmd_bounds(bounds, out, err);
  if (info_cmd->parsed()) return cmd_info(info, out, err);
  if (merge_cmd->parsed()) return cmd_merge(merge, out, err);
  return cmd_synth(synth, out, err);
}

}  // namespace rece::cli
