// Acceptance checks: one PASS/FAIL line per criterion. Exit status is 0 when
// the failing criteria are exactly those named with --expect-fail.

#include "naive.hpp"

#include <rece/bounds.hpp>
#include <rece/checkpoint_io.hpp>
#include <rece/derivation.hpp>
#include <rece/edit_core.hpp>
#include <rece/oracle.hpp>
#include <rece/rece_driver.hpp>
#include <rece/synthetic.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>

using namespace rece;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  int violations = 0;
  std::string first;

  void fail(const std::string& why) {
    pass = false;
    if (violations++ == 0) first = why;
  }
};

std::set<std::string> failed;

void report(const char* name, const std::function<void(Outcome&)>& check) {
  Outcome o;
  const auto start = Clock::now();
  try {
    check(o);
  } catch (const std::exception& e) {
    o.fail(std::string("exception: ") + e.what());
  }
  const double s = std::chrono::duration<double>(Clock::now() - start).count();
  if (!o.pass) failed.insert(name);
  std::printf("%s  %-28s %s (%.2f s)", o.pass ? "PASS" : "FAIL", name, o.detail.str().c_str(), s);
  if (!o.pass) std::printf("  violations=%d first: %s", o.violations, o.first.c_str());
  std::printf("\n");
  std::fflush(stdout);
}

// Random draws reach condition numbers near 1e8 at lambda = 0, where a
// first-order method needs a tighter gradient test to pin the minimizer down
// to 1e-6, and tens of millions of steps to get there.
constexpr OracleOptions kCertify{.grad_tol = 1e-13, .max_iters = 50'000'000};

double pick(RandomSource& rng, std::initializer_list<double> values) {
  return rng.pick(std::vector<double>(values));
}

std::vector<ConceptTask> random_tasks(RandomSource& rng, int d, int n) {
  std::vector<ConceptTask> tasks;
  for (int i = 0; i < n; ++i)
    tasks.push_back({rng.embedding(d, 1), rng.embedding(d, 1), "t" + std::to_string(i)});
  return tasks;
}

std::vector<Embedding> random_embeddings(RandomSource& rng, int d, int n) {
  std::vector<Embedding> out;
  for (int i = 0; i < n; ++i) out.push_back(rng.embedding(d, 1, "p" + std::to_string(i)));
  return out;
}

// A plausible edited model: the original set after one closed-form edit.
AttentionLayerSet edited_copy(RandomSource& rng, const AttentionLayerSet& set) {
  const auto d = static_cast<int>(set.embed_dim());
  return edit_layer_set(set, random_tasks(rng, d, rng.uniform_int(1, 3)),
                        random_embeddings(rng, d, rng.uniform_int(0, 3)), 0.1, 0.1);
}

void uce_certification(Outcome& o) {
  RandomSource rng(101);
  double worst = 0.0;
  for (int n = 0; n < 500; ++n) {
    const int d = rng.uniform_int(1, 16);
    const auto w = rng.projection("w", ProjKind::Key, rng.uniform_int(1, 32), d);
    const auto erase = random_tasks(rng, d, rng.uniform_int(1, 3));
    const auto keep = random_embeddings(rng, d, rng.uniform_int(0, 3));
    const double l1 = pick(rng, {0.01, 0.1, 1.0}), l2 = pick(rng, {0.01, 0.1, 1.0});
    const Matrix closed = uce_edit(w, erase, keep, l1, l2).weights();
    const auto oracle = oracle_uce_edit(w, erase, keep, l1, l2, kCertify);
    const double gap = naive::rel_gap(closed, oracle.solution);
    worst = std::max(worst, gap);
    const double f_closed = naive::uce_objective(closed, w.weights(), erase, keep, l1, l2);
    const double f_oracle = naive::uce_objective(oracle.solution, w.weights(), erase, keep, l1, l2);
    if (!oracle.converged) o.fail("oracle did not converge on instance " + std::to_string(n));
    if (gap > 1e-6) o.fail("instance " + std::to_string(n) + " gap " + std::to_string(gap));
    if (f_closed > f_oracle + 1e-9 * std::max(1.0, f_oracle))
      o.fail("instance " + std::to_string(n) + " closed-form objective above oracle");
  }
  o.detail << "500 instances, worst rel gap " << worst;
}

void derive_certification(Outcome& o) {
  RandomSource rng(202);
  double worst_gap = 0.0, worst_fd = 0.0, worst_grad = 0.0;
  int most_iters = 0;
  for (int n = 0; n < 500; ++n) {
    const double lambda = pick(rng, {0.0, 1e-3, 0.1, 1.0});
    const int d = rng.uniform_int(1, 16);
    const auto layers = static_cast<std::size_t>(rng.uniform_int(1, 4));
    // Unregularized instances need sum W^T W to be invertible.
    const int min_out = lambda == 0.0 ? d : 1;
    const auto old_set = rng.layer_set(layers, d, min_out, std::max(min_out, 32));
    const auto new_set = edited_copy(rng, old_set);
    const auto c = rng.embedding(d, 1);
    const auto r = derive_embedding(c, new_set, old_set, lambda);
    const auto oracle = oracle_derive(c, new_set, old_set, lambda, kCertify);
    const double gap = naive::rel_gap(r.c_prime.data(), oracle.solution);
    const Matrix g = derivation_gradient(r.c_prime.data(), c, new_set, old_set, lambda);
    const double grad_ratio = naive::max_abs(g) / (1 + c.data().norm());

    // Central differences at a random point, against the library gradient.
    const Matrix x = rng.gaussian(d, 1);
    const Matrix gx = derivation_gradient(x, c, new_set, old_set, lambda);
    Matrix fd(d, 1);
    const double h = 1e-5;
    for (int k = 0; k < d; ++k) {
      Matrix xp = x, xm = x;
      xp(k, 0) += h;
      xm(k, 0) -= h;
      fd(k, 0) = (derivation_objective(xp, c, new_set, old_set, lambda) -
                  derivation_objective(xm, c, new_set, old_set, lambda)) / (2 * h);
    }
    const double fd_gap = naive::rel_gap(gx, fd);
    worst_gap = std::max(worst_gap, gap);
    worst_fd = std::max(worst_fd, fd_gap);
    worst_grad = std::max(worst_grad, grad_ratio);
    most_iters = std::max(most_iters, oracle.iterations);
    const std::string at = "instance " + std::to_string(n);
    if (!oracle.converged) o.fail(at + ": oracle did not converge");
    if (gap > 1e-6) o.fail(at + ": gap " + std::to_string(gap));
    if (grad_ratio > 1e-8) o.fail(at + ": gradient at solution " + std::to_string(grad_ratio));
    if (fd_gap > 1e-4) o.fail(at + ": finite differences " + std::to_string(fd_gap));
  }
  o.detail << "500 instances, worst gap " << worst_gap << ", grad " << worst_grad << ", fd "
           << worst_fd << ", oracle steps <= " << most_iters;
}

void identity_suite(Outcome& o) {
  RandomSource rng(303);
  double worst = 0.0;
  auto check = [&](const AttentionLayerSet& a, const AttentionLayerSet& b, const char* what) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double dev = naive::max_abs(naive::add(a[i].weights(), b[i].weights(), -1.0));
      worst = std::max(worst, dev);
      if (dev > 1e-12) o.fail(std::string(what) + " deviates by " + std::to_string(dev));
    }
  };
  for (int n = 0; n < 100; ++n) {
    const int d = rng.uniform_int(1, 16);
    const auto set = rng.layer_set(static_cast<std::size_t>(rng.uniform_int(1, 4)), d, 1, 32);
    const auto keep = random_embeddings(rng, d, rng.uniform_int(0, 3));
    const double l1 = pick(rng, {0.01, 0.1, 1.0}), l2 = pick(rng, {0.01, 0.1, 1.0});
    check(edit_layer_set(set, {}, keep, l1, l2), set, "empty erase");

    auto same = random_tasks(rng, d, rng.uniform_int(1, 3));
    for (auto& t : same) t.destination = t.source;
    check(edit_layer_set(set, same, keep, l1, l2), set, "c* = c");

    auto zero = random_tasks(rng, d, rng.uniform_int(1, 3));
    for (auto& t : zero) t.source = Embedding::zeros(d);
    check(edit_layer_set(set, zero, keep, l1, l2), set, "zero source");

    EditConfig cfg;
    cfg.epochs = 3;
    check(rece_erase(set, {zero, keep}, cfg).final_layers, set, "zero-source full run");
  }
  o.detail << "100 instances x 4 cases, worst deviation " << worst;
}

void theorem_one(Outcome& o) {
  RandomSource rng(404);
  const auto w1 = rng.layer_set(4, 12, 4, 24);
  std::vector<ConceptTask> erase{{Embedding::zeros(12), rng.embedding(12, 1), "c'"}};
  const auto keep = random_embeddings(rng, 12, 2);
  const auto w2 = edit_layer_set(w1, erase, keep, 0.1, 0.1);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const double f = drift(w2, w1, rng.embedding(12, rng.uniform_int(1, 3)));
    worst = std::max(worst, f);
    if (f != 0.0) o.fail("probe " + std::to_string(n) + " drift " + std::to_string(f));
  }
  o.detail << "100 probes, max drift " << worst;
}

void bound_chain_check(Outcome& o) {
  RandomSource rng(505);
  const std::pair<double, double> grid[] = {{0.1, 0.1}, {1.0, 0.0}, {0.1, 1.0},
                                            {1.0, 1.0}, {0.0, 0.1}, {1.0, 0.1}};
  int counts[6] = {};
  int corrected_ok = 0, single_ok = 0, singles = 0;
  for (int n = 0; n < 1000; ++n) {
    const int which = n % 6;
    const auto [l1, l2] = grid[which];
    const int n_erase = rng.uniform_int(1, 3), n_keep = rng.uniform_int(0, 3);
    const int max_d = l2 == 0.0 ? n_erase + n_keep : 12;
    const int d = rng.uniform_int(1, max_d);
    const auto set = rng.layer_set(static_cast<std::size_t>(rng.uniform_int(1, 3)), d, 1, 16);
    std::vector<DerivedPair> pairs;
    for (int i = 0; i < n_erase; ++i) pairs.push_back({rng.embedding(d, 1), rng.embedding(d, 1)});
    const auto keep = random_embeddings(rng, d, n_keep);
    const auto b = bound_chain(set, pairs, keep, l1, l2, rng.embedding(d, 1));
    ++counts[which];
    corrected_ok += b.check_corrected_chain();
    if (n_erase == 1) {
      ++singles;
      single_ok += b.chain_ok;
    }
    if (!b.chain_ok || !b.check_chain())
      o.fail("instance " + std::to_string(n) + " (" + std::to_string(n_erase) +
             " erase): " + describe_violations(b));
  }
  o.detail << "1000 instances ((0.1,0.1): " << counts[0] << ", (1,0): " << counts[1]
           << ", other: " << 1000 - counts[0] - counts[1] << "); single-concept "
           << single_ok << "/" << singles << ", triangle-corrected " << corrected_ok << "/1000";
}

void ridge_monotonicity(Outcome& o) {
  RandomSource rng(606);
  for (int n = 0; n < 200; ++n) {
    const int d = rng.uniform_int(1, 16);
    const auto old_set = rng.layer_set(static_cast<std::size_t>(rng.uniform_int(1, 4)), d, d, 32);
    const auto new_set = edited_copy(rng, old_set);
    const auto c = rng.embedding(d, 1);
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0}) {
      const double norm = derive_embedding(c, new_set, old_set, lambda).c_prime.data().norm();
      // Allow only floating-point noise: a few ulps of the previous norm.
      if (norm > prev * (1 + 1e-12))
        o.fail("instance " + std::to_string(n) + " at lambda " + std::to_string(lambda));
      prev = norm;
    }
  }
  o.detail << "200 instances x 6 lambdas";
}

void fold_law(Outcome& o) {
  RandomSource rng(707);
  for (int n = 0; n < 50; ++n) {
    const int d = rng.uniform_int(2, 16);
    const auto set = rng.layer_set(static_cast<std::size_t>(rng.uniform_int(1, 4)), d, 1, 32);
    const EraseSpec spec{random_tasks(rng, d, rng.uniform_int(1, 3)),
                         random_embeddings(rng, d, rng.uniform_int(0, 3))};
    EditConfig cfg;
    cfg.epochs = 3;
    const auto full = rece_erase(set, spec, cfg);
    EditConfig zero = cfg;
    zero.epochs = 0;
    auto manual = rece_erase(set, spec, zero).final_layers;
    if (!(manual == full.snapshots[0])) o.fail("instance " + std::to_string(n) + " epoch 0");
    for (int epoch = 1; epoch <= 3; ++epoch) {
      manual = epoch_step(manual, set, spec, cfg, epoch).layers;
      if (!(manual == full.snapshots[epoch]))
        o.fail("instance " + std::to_string(n) + " epoch " + std::to_string(epoch));
    }
  }
  o.detail << "50 instances, T = 3, bitwise";
}

void timing(Outcome& o) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "rece_acceptance_timing";
  fs::create_directories(dir);
  write_tensor_file(make_synthetic_checkpoint(1), dir / "sd.safetensors");
  write_tensor_file(make_synthetic_embeddings(1), dir / "emb.safetensors");

  // Everything the edit command does: read, select, run all epochs, merge, write.
  const auto start = Clock::now();
  const auto ckpt = read_tensor_file(dir / "sd.safetensors");
  const auto layers = select_cross_attention(ckpt, {});
  const auto table = read_tensor_file(dir / "emb.safetensors");
  const EraseSpec spec{{{embedding_from_file(table, "concept"),
                         embedding_from_file(table, "empty_text"), "concept"}},
                       {embedding_from_file(table, "preserve")}};
  DriverOptions opts;
  opts.keep_snapshots = false;
  const auto result = rece_erase(layers, spec, EditConfig::unsafe_preset(), opts);
  write_tensor_file(merge_back(result.final_layers, ckpt), dir / "edited.safetensors");
  const double s = std::chrono::duration<double>(Clock::now() - start).count();
  fs::remove_all(dir);

  std::size_t widths_ok = 0;
  for (const auto& l : layers) widths_ok += l.out_dim() == 320 || l.out_dim() == 640 || l.out_dim() == 1280;
  if (layers.size() != 32 || layers.embed_dim() != 768 || widths_ok != 32)
    o.fail("fixture is not SD-shaped");
  if (result.reports.size() != 6) o.fail("expected 6 epoch records");
  if (s > 10.0) o.fail("took " + std::to_string(s) + " s");
  o.detail << "32 matrices, d = 768, epochs 0..5 in " << s << " s (limit 10 s)";
}

// Mixed-dtype fixture with selected K/V tensors, pass-through tensors and metadata.
TensorFile random_fixture(RandomSource& rng, int index) {
  static const std::vector<std::string> float_types{"F16", "BF16", "F32", "F64"};
  TensorFile f;
  const int d = rng.uniform_int(2, 12);
  const int blocks = rng.uniform_int(1, 4);
  for (int b = 0; b < blocks; ++b) {
    const std::string prefix = "blocks." + std::to_string(b);
    const std::string dtype = rng.pick(float_types);
    for (const char* proj : {".attn2.to_k.weight", ".attn2.to_v.weight"}) {
      const int out = rng.uniform_int(1, 16);
      const Matrix w = rng.gaussian(out, d);
      std::vector<double> v(w.size());
      for (int i = 0; i < out; ++i)
        for (int j = 0; j < d; ++j) v[static_cast<std::size_t>(i * d + j)] = w(i, j);
      f.add_tensor(prefix + proj, dtype, {out, d}, v);
    }
    const Matrix q = rng.gaussian(1, 5);
    f.add_tensor(prefix + ".attn1.to_q.weight", rng.pick(float_types), {5}, {q.data(), 5});
    std::vector<std::uint8_t> ids(8 * 3);
    for (auto& byte : ids) byte = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    f.add_raw_tensor(prefix + ".position_ids", "I64", {3}, ids);
  }
  f.set_metadata({{"fixture", std::to_string(index)}, {"format", "pt"}});
  return f;
}

void file_round_trip(Outcome& o) {
  namespace fs = std::filesystem;
  RandomSource rng(808);
  const fs::path path = fs::temp_directory_path() / "rece_acceptance_fixture.safetensors";
  std::size_t changed_bytes = 0;
  for (int n = 0; n < 20; ++n) {
    const auto fixture = random_fixture(rng, n);
    write_tensor_file(fixture, path);
    const auto read = read_tensor_file(path);
    const std::string at = "fixture " + std::to_string(n);
    if (!read.same_contents(fixture)) o.fail(at + ": read differs from written");
    write_tensor_file(read, path);
    if (!read_tensor_file(path).same_contents(fixture)) o.fail(at + ": rewrite differs");

    const auto layers = select_cross_attention(read, {});
    if (serialize_tensor_file(merge_back(layers, read)) != serialize_tensor_file(read))
      o.fail(at + ": unedited merge is not the identity");

    const int d = static_cast<int>(layers.embed_dim());
    const auto edited = edit_layer_set(layers, random_tasks(rng, d, 1), {}, 0.1, 0.1);
    const auto merged = merge_back(edited, read);
    std::vector<bool> selected(read.payload().size(), false);
    for (const auto& l : layers) {
      const auto& info = read.info(l.name());
      for (auto i = info.begin; i < info.end; ++i) selected[i] = true;
    }
    if (merged.payload().size() != read.payload().size()) o.fail(at + ": payload size changed");
    for (std::size_t i = 0; i < selected.size(); ++i) {
      if (merged.payload()[i] == read.payload()[i]) continue;
      ++changed_bytes;
      if (!selected[i]) o.fail(at + ": byte " + std::to_string(i) + " outside selected ranges");
    }
    if (merged.tensors() != read.tensors() || merged.metadata() != read.metadata())
      o.fail(at + ": header changed");
  }
  fs::remove(path);
  if (changed_bytes == 0) o.fail("edits changed no bytes");
  o.detail << "20 fixtures, " << changed_bytes << " edited bytes all inside selected ranges";
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> expected;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--expect-fail" && i + 1 < argc) {
      expected.insert(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--expect-fail NAME]...\n", argv[0]);
      return 2;
    }
  }

  report("closed-form edit", uce_certification);
  report("closed-form derivation", derive_certification);
  report("identity suite", identity_suite);
  report("zero derived embedding", theorem_one);
  report("bound chain", bound_chain_check);
  report("ridge monotonicity", ridge_monotonicity);
  report("fold law", fold_law);
  report("timing", timing);
  report("file round trip", file_round_trip);
  std::printf("%zu of 9 criteria passed\n", 9 - failed.size());
  for (const auto& name : expected) {
    if (!failed.count(name)) std::printf("expected failure '%s' now passes\n", name.c_str());
  }
  for (const auto& name : failed) {
    std::printf("%s failure: %s\n", expected.count(name) ? "known" : "UNEXPECTED", name.c_str());
  }
  return failed == expected ? 0 : 1;
}
