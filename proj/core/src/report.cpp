#include "rece/report.hpp"

#include <nlohmann/json.hpp>

namespace rece {
namespace {

using json = nlohmann::json;

json bound_json(const BoundReport& r) {
  return {{"F", r.F},
          {"F1", r.F1},
          {"F2", r.F2},
          {"F3", r.F3},
          {"F3_upper", r.F3_upper},
          {"F3_triangle", r.F3_triangle},
          {"U_inv_frob_sq", r.U_inv_frob_sq},
          {"W_new1_frob_sq", r.W_new1_frob_sq},
          {"d_norm_sq", r.d_norm_sq},
          {"chain_ok", r.chain_ok},
          {"corrected_chain_ok", r.check_corrected_chain()}};
}

json pairs_json(const std::vector<std::pair<std::string, double>>& pairs, const char* key) {
  json out = json::array();
  for (const auto& [name, value] : pairs) out.push_back({{key, name}, {"value", value}});
  return out;
}

}  // namespace

std::string to_json_line(const EpochReport& report, bool omit_timing) {
  json tasks = json::array();
  for (const auto& t : report.per_task) {
    tasks.push_back({{"task", t.label},
                     {"c_prime_norm", t.c_prime_norm},
                     {"residual", t.derivation_residual ? json(*t.derivation_residual) : json()},
                     {"erasure_residual", t.erasure_residual}});
  }
  json j = {{"epoch", report.epoch},
            {"tasks", std::move(tasks)},
            {"drift", pairs_json(report.drift_samples, "probe")},
            {"wall_time_s", omit_timing ? json() : json(report.wall_time_s)},
            {"bound_chain", report.bound_chain ? bound_json(*report.bound_chain) : json()},
            {"warnings", report.warnings}};
  return j.dump();
}

std::string to_json_line(const BoundReport& report) { return bound_json(report).dump(); }

std::string to_json_line(const DerivationResult& result) {
  json j = {{"task", result.c_prime.label()},
            {"c_prime_norm", result.c_prime.data().norm()},
            {"token_norms", result.norm},
            {"objective", result.objective_value},
            {"residual", result.residual()},
            {"residual_per_layer", pairs_json(result.residual_per_layer, "layer")},
            {"lambda", result.lambda_used},
            {"unregularized", result.unregularized},
            {"warnings", result.warnings}};
  return j.dump();
}

std::string to_json_line(const FidelityReport& report) {
  json tasks = json::array();
  for (const auto& t : report.tasks) {
    tasks.push_back({{"task", t.label},
                     {"residual_before", t.residual_before},
                     {"residual_after", t.residual_after}});
  }
  json j = {{"tasks", std::move(tasks)},
            {"drift", pairs_json(report.probe_drift, "probe")},
            {"layer_distance", pairs_json(report.layer_distance, "layer")}};
  return j.dump();
}

}  // namespace rece
