// reports.hpp
// Report emission: JSON with full-precision values, CSV tables with
// two-decimal percentages for the human-readable accuracy table, and the
// per-run error-count table ("entangled predict non-entangled" /
// "non-entangled predict entangled" rows per arm).

#pragma once

#include <json.hpp>
#include <sstream>
#include <string>

#include "gmedetect/pipeline.hpp"

namespace gme {

inline std::string format_pct(double fraction) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << 100.0 * fraction;
  return os.str();
}

inline const char* arm_name(bool se_enabled) { return se_enabled ? "CNN-SE" : "CNN"; }

struct AccuracyRow {
  int qubits = 0;
  std::string arm;
  double accuracy = 0.0;
  int64_t fn = 0;
  int64_t fp = 0;
};

inline std::string accuracy_table_csv(const std::vector<AccuracyRow>& rows) {
  std::ostringstream os;
  os << "qubits,arm,accuracy_pct,fn,fp\n";
  for (const auto& r : rows)
    os << r.qubits << "," << r.arm << "," << format_pct(r.accuracy) << ","
       << r.fn << "," << r.fp << "\n";
  return os.str();
}

// Per-run error counts in the two-direction layout.
inline std::string error_table_csv(const std::vector<ArmSummary>& arms) {
  std::ostringstream os;
  os << "arm,direction";
  std::size_t max_runs = 0;
  for (const auto& a : arms) max_runs = std::max(max_runs, a.runs.size());
  for (std::size_t i = 1; i <= max_runs; ++i) os << ",run" << i;
  os << "\n";
  for (const auto& a : arms) {
    os << arm_name(a.se_enabled) << ",entangled predict non-entangled";
    for (const auto& r : a.runs) os << "," << r.eval.fn_count;
    os << "\n";
    os << arm_name(a.se_enabled) << ",non-entangled predict entangled";
    for (const auto& r : a.runs) os << "," << r.eval.fp_count;
    os << "\n";
  }
  return os.str();
}

inline nlohmann::json eval_report_json(const EvalReport& r) {
  return nlohmann::json{
      {"test_size", r.test_size},
      {"correct", r.correct},
      {"accuracy", r.accuracy},
      {"accuracy_pct", format_pct(r.accuracy)},
      {"fn_count", r.fn_count},
      {"fp_count", r.fp_count},
      {"per_class",
       {{"entangled_total", r.entangled_total},
        {"nondetected_total", r.nondetected_total},
        {"entangled_correct", r.entangled_total - r.fn_count},
        {"nondetected_correct", r.nondetected_total - r.fp_count}}},
  };
}

inline nlohmann::json arm_summary_json(const ArmSummary& a) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : a.runs) {
    nlohmann::json jr = eval_report_json(r.eval);
    jr["run_seed"] = r.run_seed;
    jr["final_train_loss"] = r.final_train_loss;
    jr["final_train_accuracy"] = r.final_train_accuracy;
    runs.push_back(std::move(jr));
  }
  return nlohmann::json{{"arm", arm_name(a.se_enabled)},
                        {"se_enabled", a.se_enabled},
                        {"mean_accuracy", a.mean_accuracy},
                        {"std_accuracy", a.std_accuracy},
                        {"runs", std::move(runs)}};
}

inline std::string noise_sweep_csv(const std::vector<NoisePoint>& points,
                                   int repeats) {
  std::ostringstream os;
  os << "p,arm,mean_accuracy,std_accuracy,repeats,degenerate,attempts\n";
  for (const auto& pt : points) {
    if (pt.degenerate) {
      os << pt.p << ",,,," << repeats << ",1," << pt.attempts << "\n";
      continue;
    }
    for (const auto& arm : pt.arms)
      os << pt.p << "," << arm_name(arm.se_enabled) << "," << arm.mean_accuracy
         << "," << arm.std_accuracy << "," << repeats << ",0," << pt.attempts
         << "\n";
  }
  return os.str();
}

}  // namespace gme
