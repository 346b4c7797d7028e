#include "rece_cli/commands.hpp"

#include <rece/bounds.hpp>
#include <rece/derivation.hpp>
#include <rece/dtype.hpp>
#include <rece/edit_core.hpp>
#include <rece/error.hpp>
#include <rece/oracle.hpp>
#include <rece/rece_driver.hpp>
#include <rece/report.hpp>
#include <rece/synthetic.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

namespace rece::cli {
namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int exit_code_for(const Error& e) {
  return e.kind() == ErrorKind::Singular ? kNumericalFailure : kDataError;
}

// Runs a command body, mapping failures onto exit codes.
template <typename Fn>
int guarded(std::ostream& err, Fn&& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
}

void require_path(const std::filesystem::path& p, const char* flag) {
  if (p.empty()) throw UsageError(std::string(flag) + " is required");
}

std::ofstream open_report(const std::filesystem::path& path) {
  std::ofstream report(path, std::ios::trunc);
  if (!report) throw IoError("cannot open report '" + path.string() + "' for writing");
  return report;
}

std::vector<Embedding> lookup(const TensorFile& table, const std::vector<std::string>& labels,
                              long max_tokens) {
  std::vector<Embedding> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(embedding_from_file(table, l, max_tokens));
  return out;
}

EraseSpec build_spec(const RunConfig& config, const TensorFile& table) {
  if (config.erase.empty()) throw UsageError("at least one --erase label is required");
  std::vector<std::string> dests = config.destinations;
  if (dests.empty()) dests.push_back(kDefaultDestination);
  if (dests.size() != 1 && dests.size() != config.erase.size()) {
    throw UsageError("give one --dest label, or one per --erase label (" +
                     std::to_string(config.erase.size()) + ")");
  }
  EraseSpec spec;
  for (std::size_t i = 0; i < config.erase.size(); ++i) {
    const auto& dest = dests.size() == 1 ? dests.front() : dests[i];
    spec.tasks.push_back({embedding_from_file(table, config.erase[i], config.max_tokens),
                          embedding_from_file(table, dest, config.max_tokens), config.erase[i]});
  }
  spec.preserve = lookup(table, config.preserve, config.max_tokens);
  return spec;
}

std::vector<Embedding> probes_for(const RunConfig& config, const TensorFile& table,
                                  const EraseSpec& spec) {
  if (config.probes.empty()) return spec.preserve;
  return lookup(table, config.probes, config.max_tokens);
}

}  // namespace

std::filesystem::path snapshot_path(const std::filesystem::path& dir, int epoch) {
  return dir / ("epoch_" + std::to_string(epoch) + ".safetensors");
}

EditConfig RunConfig::edit_config() const {
  EditConfig c;
  switch (preset) {
    case Preset::Unsafe:
    case Preset::Custom: c = EditConfig::unsafe_preset(); break;
    case Preset::Artistic: c = EditConfig::artistic_preset(); break;
    case Preset::Object: c = EditConfig::object_preset(); break;
  }
  if (lambda1) c.lambda1 = *lambda1;
  if (lambda2) c.lambda2 = *lambda2;
  if (lambda) c.lambda_reg = *lambda;
  if (epochs) c.epochs = *epochs;
  c.validate();
  return c;
}

int cmd_edit(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_path(config.input, "--input");
    require_path(config.embeddings, "--embeddings");
    require_path(config.output, "--output");
    const EditConfig edit = config.edit_config();

    const TensorFile checkpoint = read_tensor_file(config.input);
    const AttentionLayerSet original = select_cross_attention(checkpoint, config.pattern);
    const TensorFile table = read_tensor_file(config.embeddings);
    const EraseSpec spec = build_spec(config, table);

    if (!config.snapshot_dir.empty()) std::filesystem::create_directories(config.snapshot_dir);
    std::ofstream report;
    if (!config.report.empty()) report = open_report(config.report);

    DriverOptions options;
    options.probes = probes_for(config, table, spec);
    options.compute_bounds = config.bounds;
    options.keep_snapshots = false;
    options.on_epoch = [&](const EpochReport& r, const AttentionLayerSet& layers) {
      if (report.is_open()) report << to_json_line(r, config.omit_timing) << "\n" << std::flush;
      if (!config.snapshot_dir.empty()) {
        write_tensor_file(layers_to_tensor_file(layers), snapshot_path(config.snapshot_dir, r.epoch));
      }
      out << "epoch " << r.epoch;
      for (const auto& t : r.per_task) {
        out << "  " << t.label << ": |c'|=" << t.c_prime_norm
            << " erasure_residual=" << t.erasure_residual;
      }
      if (!config.omit_timing) out << "  (" << r.wall_time_s << " s)";
      out << "\n";
      for (const auto& w : r.warnings) err << "warning: epoch " << r.epoch << ": " << w << "\n";
    };

    const auto start = std::chrono::steady_clock::now();
    const ReceResult result = rece_erase(original, spec, edit, options);
    const double edit_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    write_tensor_file(merge_back(result.final_layers, checkpoint), config.output);
    out << "edited " << original.size() << " projections over " << edit.epochs + 1
        << " epochs";
    if (!config.omit_timing) out << " in " << edit_s << " s";
    out << "; wrote " << config.output.string() << "\n";
    return kOk;
  });
}

int cmd_derive(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_path(config.input, "--input");
    require_path(config.edited, "--edited");
    require_path(config.embeddings, "--embeddings");
    if (config.erase.empty()) throw UsageError("at least one --erase label is required");
    const EditConfig edit = config.edit_config();

    const AttentionLayerSet original =
        select_cross_attention(read_tensor_file(config.input), config.pattern);
    const AttentionLayerSet edited =
        select_cross_attention(read_tensor_file(config.edited), config.pattern);
    const TensorFile table = read_tensor_file(config.embeddings);

    const EmbeddingDeriver deriver(edited, original, edit.lambda_reg, edit.solve_tol);
    std::ofstream report;
    if (!config.report.empty()) report = open_report(config.report);
    std::vector<Embedding> derived;
    for (const auto& label : config.erase) {
      const Embedding c = embedding_from_file(table, label, config.max_tokens);
      const DerivationResult result = deriver.derive(c);
      if (report.is_open()) report << to_json_line(result) << "\n" << std::flush;
      out << label << ": |c'|=" << result.c_prime.data().norm() << " residual=" << result.residual()
          << " objective=" << result.objective_value << "\n";
      for (const auto& w : result.warnings) err << "warning: " << label << ": " << w << "\n";
      derived.push_back(result.c_prime);
    }
    if (!config.output.empty()) {
      const std::string dtype = table.info(config.erase.front()).dtype;
      write_tensor_file(embeddings_to_tensor_file(derived, parse_float_type(dtype) ? dtype : "F32"),
                        config.output);
      out << "wrote " << config.output.string() << "\n";
    }
    return kOk;
  });
}

int cmd_verify(const VerifyConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (config.instances < 1) throw UsageError("--instances must be positive");
    const SuiteSummary summary = run_certification_suite(
        {.instances = config.instances, .seed = config.seed, .inject_fault = config.inject_fault});
    for (const auto& p : summary.properties) {
      out << (p.ok() ? "PASS " : "FAIL ") << p.passed << "/" << p.total << "  " << p.name << "\n";
      if (!p.ok()) out << "     first failure: " << p.first_failure << "\n";
    }
    out << summary.total_cases() << " checks over " << config.instances << " instances: "
        << (summary.all_passed() ? "all passed" : "FAILURES") << "\n";
    return summary.all_passed() ? kOk : kVerificationFailure;
  });
}

int cmd_bounds(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_path(config.input, "--input");
    require_path(config.embeddings, "--embeddings");
    require_path(config.snapshot_dir, "--snapshot-dir");
    if (!std::filesystem::is_directory(config.snapshot_dir)) {
      throw IoError("snapshot directory '" + config.snapshot_dir.string() + "' does not exist");
    }
    const EditConfig edit = config.edit_config();
    const AttentionLayerSet original =
        select_cross_attention(read_tensor_file(config.input), config.pattern);
    const TensorFile table = read_tensor_file(config.embeddings);
    const EraseSpec spec = build_spec(config, table);
    const std::vector<Embedding> probes = probes_for(config, table, spec);
    if (probes.empty()) throw UsageError("bounds needs a --probe or --preserve label");

    std::vector<AttentionLayerSet> snapshots;
    for (int epoch = 0; std::filesystem::exists(snapshot_path(config.snapshot_dir, epoch)); ++epoch) {
      snapshots.push_back(
          select_cross_attention(read_tensor_file(snapshot_path(config.snapshot_dir, epoch)),
                                 config.pattern));
      require_aligned(snapshots.back(), original);
    }
    if (snapshots.empty()) {
      throw IoError("no epoch_0.safetensors in '" + config.snapshot_dir.string() + "'");
    }

    std::ofstream report;
    if (!config.report.empty()) report = open_report(config.report);
    bool all_ok = true;
    for (std::size_t epoch = 0; epoch < snapshots.size(); ++epoch) {
      // The step into this epoch starts from the previous weights (the original
      // ones for epoch 0) and erases either the concepts or their derivations.
      const AttentionLayerSet& before = epoch == 0 ? original : snapshots[epoch - 1];
      std::vector<DerivedPair> pairs;
      if (epoch == 0) {
        for (const auto& t : spec.tasks) pairs.push_back({t.source, t.destination});
      } else {
        const EmbeddingDeriver deriver(before, original, edit.lambda_reg, edit.solve_tol);
        for (const auto& t : spec.tasks) pairs.push_back({deriver.derive(t.source).c_prime, t.destination});
      }
      for (const auto& probe : probes) {
        const BoundReport b =
            bound_chain(before, pairs, spec.preserve, edit.lambda1, edit.lambda2, probe);
        all_ok = all_ok && b.chain_ok;
        nlohmann::json line = nlohmann::json::parse(to_json_line(b));
        line["epoch"] = epoch;
        line["probe"] = probe.label();
        if (report.is_open()) report << line.dump() << "\n" << std::flush;
        out << "epoch " << epoch << " probe " << probe.label() << ": F=" << b.F
            << " F1=" << b.F1 << " F2=" << b.F2 << " F3=" << b.F3 << " F3_upper=" << b.F3_upper
            << (b.chain_ok ? " ok" : " VIOLATED") << "\n";
        if (!b.chain_ok) err << "bound chain violated: " << describe_violations(b) << "\n";
      }
    }
    return all_ok ? kOk : kVerificationFailure;
  });
}

int cmd_info(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_path(config.input, "--input");
    const TensorFile file = read_tensor_file(config.input);
    const ModelStats stats = model_stats(file, config.pattern);
    out << "tensors: " << file.tensors().size() << "\n"
        << "total_params: " << stats.total_params << "\n"
        << "selected_tensors: " << stats.selected_tensors << "\n"
        << "selected_params: " << stats.selected_params << "\n"
        << "fraction: " << stats.fraction << "\n"
        << "percent: " << 100.0 * stats.fraction << "\n";
    return kOk;
  });
}

int cmd_merge(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_path(config.input, "--input");
    require_path(config.edited, "--snapshot");
    require_path(config.output, "--output");
    const TensorFile base = read_tensor_file(config.input);
    const TensorFile patch = read_tensor_file(config.edited);
    write_tensor_file(merge_tensors(patch, base), config.output);
    out << "merged " << patch.tensors().size() << " tensors into " << config.output.string() << "\n";
    return kOk;
  });
}

int cmd_synth(const SynthConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_path(config.output, "--output");
    if (config.embed_dim < 1) throw UsageError("--dim must be positive");
    if (!(config.width_scale > 0.0)) throw UsageError("--width-scale must be positive");
    const TensorFile ckpt = make_synthetic_checkpoint(config.seed, config.embed_dim, config.width_scale);
    write_tensor_file(ckpt, config.output);
    out << "wrote " << config.output.string() << " (" << ckpt.tensors().size() << " tensors)\n";
    if (!config.embeddings_output.empty()) {
      write_tensor_file(make_synthetic_embeddings(config.seed, config.embed_dim),
                        config.embeddings_output);
      out << "wrote " << config.embeddings_output.string() << "\n";
    }
    return kOk;
  });
}

}  // namespace rece::cli
