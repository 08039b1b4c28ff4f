#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fttab/config.hpp"
#include "fttab/finetune.hpp"
#include "fttab/grad_suite.hpp"
#include "fttab/pretrain.hpp"

namespace fttab {

// Command implementations shared by the CLI and the Python module. Every
// command writes resolved_config.txt into output_dir; all other outputs are
// fully determined by the config. `progress`, when non-null, receives
// human-readable status lines.

struct PretrainOutcome {
  std::filesystem::path checkpoint;
  PretrainLog log;
};
PretrainOutcome cmd_pretrain(const RunConfig& cfg, std::ostream* progress = nullptr);

struct FinetuneOutcome {
  std::vector<RepetitionReport> reports;  // one per variant run
  std::vector<std::filesystem::path> report_files;
};
/// finetune.variant may also be "all" to run the three variants.
FinetuneOutcome cmd_finetune(const RunConfig& cfg, std::ostream* progress = nullptr);

struct EvaluateOutcome {
  std::string kind;  // in_context or finetuned
  double accuracy = 0.0;
  double majority_baseline = 0.0;  // in_context only
  double auc = 0.0;                // finetuned only
};
EvaluateOutcome cmd_evaluate(const RunConfig& cfg, std::ostream* progress = nullptr);

struct HeatmapOutcome {
  std::filesystem::path category_csv;
  std::filesystem::path identifier_csv;  // empty when the model has no identifiers
  bool warned_no_identifiers = false;
};
HeatmapOutcome cmd_export_heatmaps(const RunConfig& cfg, std::ostream* progress = nullptr);

struct GradCheckOutcome {
  std::vector<ComponentCheck> components;
  double tolerance = 1e-4;
  bool passed = true;
};
GradCheckOutcome cmd_grad_check(const RunConfig& cfg, std::ostream* progress = nullptr);

/// Process exit status for an exception escaping a command: 1 for
/// configuration/usage, 2 for data problems, 3 for numeric failures.
int exit_code_for(const std::exception& e);

/// Table of per-seed and mean AUC / accuracy, one block per report, plus the
/// mean rank across reports when more than one is given.
std::string summary_table(const std::vector<RepetitionReport>& reports);

}  // namespace fttab
