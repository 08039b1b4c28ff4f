#include "fttab/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <ostream>

#include "fttab/checkpoint.hpp"
#include "fttab/data.hpp"
#include "fttab/errors.hpp"
#include "fttab/metrics.hpp"
#include "fttab/random.hpp"

namespace fttab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kModelInitStream = 100;

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir = cfg.get("output_dir");
  if (dir.empty()) throw ConfigError("output_dir: must not be empty");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("output_dir: cannot create " + dir.string() + ": " + ec.message());
  std::ofstream(dir / "resolved_config.txt", std::ios::binary | std::ios::trunc) << cfg.serialize();
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string fmt(double v, const char* spec = "%.4f") {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string exact(double v) { return fmt(v, "%.17g"); }

const std::string& required(const RunConfig& cfg, const std::string& key) {
  const auto& v = cfg.get(key);
  if (v.empty()) throw ConfigError(key + ": required by this command");
  return v;
}

std::string jsonl(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) out += r.dump() + "\n";
  return out;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const ParseError*>(&e)) return 2;
  return 3;
}

PretrainOutcome cmd_pretrain(const RunConfig& cfg, std::ostream* progress) {
  const auto model_cfg = cfg.model();
  const auto prior = cfg.prior();
  const auto pc = cfg.pretrain();
  const auto dir = prepare_output(cfg);

  auto backbone = PfnBackbone::initialize(model_cfg, derive_seed(cfg.seed(), kModelInitStream));
  std::vector<json> records;
  const std::size_t report_every = std::max<std::size_t>(1, pc.episodes / 20);
  auto log = pretrain(backbone, prior, pc, [&](const PretrainRecord& r) {
    records.push_back({{"type", "episode"}, {"episode", r.episode}, {"task_seed", r.task_seed}, {"loss", r.loss}});
    if (progress && (r.episode + 1) % report_every == 0) {
      *progress << "episode " << (r.episode + 1) << "/" << pc.episodes << " loss " << fmt(r.loss) << "\n";
    }
  });
  records.push_back({{"type", "summary"},
                     {"episodes", pc.episodes},
                     {"heldout_loss_start", log.heldout_loss_start},
                     {"heldout_loss_end", log.heldout_loss_end}});
  write_text(dir / "pretrain_log.jsonl", jsonl(records));

  PretrainOutcome out;
  out.checkpoint = dir / "backbone.ckpt";
  save_backbone(out.checkpoint, backbone,
                {{"seed", std::to_string(cfg.seed())},
                 {"episodes", std::to_string(pc.episodes)},
                 {"heldout_loss_start", exact(log.heldout_loss_start)},
                 {"heldout_loss_end", exact(log.heldout_loss_end)}});
  if (progress) {
    *progress << "held-out loss " << fmt(log.heldout_loss_start) << " -> " << fmt(log.heldout_loss_end) << "\n";
  }
  out.log = std::move(log);
  return out;
}

std::string summary_table(const std::vector<RepetitionReport>& reports) {
  std::string out;
  for (const auto& r : reports) {
    out += "dataset " + r.dataset + "  variant " + variant_name(r.variant) + "\n";
    out += "  seed  train  test  best_epoch  test_auc  test_acc\n";
    for (const auto& s : r.seeds) {
      char line[160];
      std::snprintf(line, sizeof line, "  %4llu  %5zu  %4zu  %10zu  %8s  %8s\n", static_cast<unsigned long long>(s.seed),
                    s.train_rows, s.test_rows, s.best_epoch, fmt(s.test_auc).c_str(), fmt(s.test_accuracy).c_str());
      out += line;
    }
    out += "  Mean AUC OVO " + fmt(r.mean_auc) + "   Mean ACC " + fmt(r.mean_accuracy) + "\n\n";
  }
  if (reports.size() > 1) {
    const auto ranks = mean_ranks(reports);
    out += "variant              mean_auc  mean_rank\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      char line[160];
      std::snprintf(line, sizeof line, "%-20s %8s  %9s\n", variant_name(reports[i].variant).c_str(),
                    fmt(reports[i].mean_auc).c_str(), fmt(ranks[i], "%.2f").c_str());
      out += line;
    }
  }
  return out;
}

FinetuneOutcome cmd_finetune(const RunConfig& cfg, std::ostream* progress) {
  const auto& variant_setting = cfg.get("finetune.variant");
  std::vector<Variant> variants;
  if (variant_setting == "all") {
    variants = {Variant::full, Variant::no_identifiers, Variant::no_regularization};
  } else {
    variants = {parse_variant(variant_setting)};
  }
  RunConfig base = cfg;
  base.set("finetune.variant", "full");
  const auto ft_base = base.finetune();
  const auto seeds = cfg.get_u64_list("finetune.seeds");
  const auto descriptor = load_descriptor(required(cfg, "dataset"));
  const auto backbone = load_backbone(required(cfg, "checkpoint"));
  const auto data = load_dataset(descriptor);
  const auto dir = prepare_output(cfg);

  FinetuneOutcome out;
  for (const auto v : variants) {
    auto fc = ft_base;
    fc.variant = v;
    const auto name = variant_name(v);
    std::vector<json> epochs;
    auto report = run_protocol(data, descriptor.name, backbone, fc, seeds, [&](std::uint64_t seed, const EpochRecord& e) {
      epochs.push_back({{"type", "epoch"},
                        {"variant", name},
                        {"seed", seed},
                        {"epoch", e.epoch},
                        {"train_loss", nullable(e.train_loss)},
                        {"train_accuracy", nullable(e.train_accuracy)},
                        {"train_auc", nullable(e.train_auc)},
                        {"test_accuracy", e.test_accuracy ? nullable(*e.test_accuracy) : json(nullptr)},
                        {"test_auc", e.test_auc ? nullable(*e.test_auc) : json(nullptr)}});
      if (progress && e.epoch == fc.epochs) {
        *progress << name << " seed " << seed << " done, train auc " << fmt(e.train_auc) << "\n";
      }
    });
    std::vector<json> rows;
    for (const auto& s : report.seeds) {
      rows.push_back({{"type", "repetition"},
                      {"dataset", report.dataset},
                      {"variant", name},
                      {"seed", s.seed},
                      {"train_rows", s.train_rows},
                      {"test_rows", s.test_rows},
                      {"best_epoch", s.best_epoch},
                      {"test_auc", nullable(s.test_auc)},
                      {"test_accuracy", nullable(s.test_accuracy)}});
      save_finetuned(dir / ("finetuned_" + name + "_seed" + std::to_string(s.seed) + ".ckpt"), s.model, v,
                     {{"dataset", report.dataset}, {"split_seed", std::to_string(s.seed)}, {"variant", name}});
    }
    rows.push_back({{"type", "summary"},
                    {"dataset", report.dataset},
                    {"variant", name},
                    {"repetitions", report.seeds.size()},
                    {"mean_auc", nullable(report.mean_auc)},
                    {"mean_accuracy", nullable(report.mean_accuracy)}});
    const auto report_path = dir / ("report_" + name + ".jsonl");
    write_text(report_path, jsonl(rows));
    write_text(dir / ("train_log_" + name + ".jsonl"), jsonl(epochs));
    write_text(dir / ("summary_" + name + ".txt"), summary_table({report}));
    out.report_files.push_back(report_path);
    out.reports.push_back(std::move(report));
  }
  if (out.reports.size() > 1) write_text(dir / "comparison.txt", summary_table(out.reports));
  if (progress) *progress << summary_table(out.reports);
  return out;
}

EvaluateOutcome cmd_evaluate(const RunConfig& cfg, std::ostream* progress) {
  const auto& ckpt = required(cfg, "checkpoint");
  const auto kind = checkpoint_kind(ckpt);
  EvaluateOutcome out;
  json record;
  if (kind == "backbone") {
    // Scored on clean tasks: no label flips, no missing cells.
    auto prior = cfg.prior();
    prior.noise = 0.0;
    prior.missing_rate = 0.0;
    const auto pc = cfg.pretrain();
    const auto& family = cfg.get("evaluate.family");
    std::optional<TaskFamily> fam;
    if (family == "linear") fam = TaskFamily::linear;
    else if (family == "mlp") fam = TaskFamily::mlp;
    else if (family == "rule") fam = TaskFamily::rule;
    else if (family != "mixed") throw ConfigError("evaluate.family: expected linear, mlp, rule or mixed");
    const auto dir = prepare_output(cfg);
    const auto backbone = load_backbone(ckpt);
    const auto score = evaluate_in_context(backbone, prior, pc, cfg.get_u64("evaluate.tasks"), cfg.get_u64("evaluate.seed"), fam);
    out.kind = "in_context";
    out.accuracy = score.accuracy;
    out.majority_baseline = score.majority;
    record = {{"kind", out.kind},
              {"family", family},
              {"tasks", score.tasks},
              {"noise_free", true},
              {"accuracy", score.accuracy},
              {"majority_baseline", score.majority},
              {"gap", score.accuracy - score.majority}};
    write_text(dir / "evaluation.json", record.dump(2) + "\n");
  } else {
    CheckpointMetadata meta;
    const auto model = load_finetuned(ckpt, nullptr, &meta);
    const auto descriptor = load_descriptor(required(cfg, "dataset"));
    const auto data = load_dataset(descriptor);
    const auto dir = prepare_output(cfg);
    const std::uint64_t split_seed = meta.count("split_seed") ? std::stoull(meta.at("split_seed")) : 0;
    auto [train_raw, test_raw] = split_train_test(data, split_seed);
    const auto train = encode(train_raw, model.fitted, model.classes);
    const auto test = encode(test_raw, model.fitted, model.classes);
    const auto probs = predict_rows(model, train, test.rows);
    out.kind = "finetuned";
    out.accuracy = accuracy(probs, model.classes.size(), test.labels);
    out.auc = roc_auc_ovo(probs, model.classes.size(), test.labels);
    record = {{"kind", out.kind},
              {"dataset", descriptor.name},
              {"split_seed", split_seed},
              {"test_rows", test.rows.count},
              {"test_auc", out.auc},
              {"test_accuracy", out.accuracy}};
    write_text(dir / "evaluation.json", record.dump(2) + "\n");
  }
  if (progress) *progress << record.dump(2) << "\n";
  return out;
}

HeatmapOutcome cmd_export_heatmaps(const RunConfig& cfg, std::ostream* progress) {
  const auto model = load_finetuned(required(cfg, "checkpoint"));
  const auto dir = prepare_output(cfg);
  HeatmapOutcome out;
  out.category_csv = dir / "category_gram.csv";
  write_text(out.category_csv, matrix_to_csv(category_gram_matrix(model.tokenizer.table())));
  if (const auto* ids = model.tokenizer.identifiers()) {
    out.identifier_csv = dir / "identifier_cosine.csv";
    write_text(out.identifier_csv, matrix_to_csv(identifier_gram_matrix(*ids)));
  } else {
    out.warned_no_identifiers = true;
    if (progress) *progress << "warning: checkpoint has no feature identifiers; wrote the category matrix only\n";
  }
  return out;
}

GradCheckOutcome cmd_grad_check(const RunConfig& cfg, std::ostream* progress) {
  const auto suite = cfg.grad_suite();
  GradCheckOutcome out;
  out.tolerance = cfg.get_double("gradcheck.tolerance");
  if (!(out.tolerance > 0.0)) throw ConfigError("gradcheck.tolerance: must be > 0");
  const auto dir = prepare_output(cfg);
  out.components = run_grad_suite(suite);
  std::vector<json> rows;
  for (const auto& c : out.components) {
    const bool vacuous = c.result.entries_checked == 0;
    const bool ok = vacuous || c.result.max_relative_error < out.tolerance;
    out.passed = out.passed && ok;
    rows.push_back({{"component", c.component},
                    {"max_relative_error", c.result.max_relative_error},
                    {"entries_checked", c.result.entries_checked},
                    {"worst_parameter", c.result.worst_parameter},
                    {"passed", ok}});
    if (progress) {
      *progress << c.component << " max_rel_error=" << fmt(c.result.max_relative_error, "%.3e") << " entries="
                << c.result.entries_checked << (ok ? " PASS" : " FAIL") << "\n";
      if (vacuous) *progress << "warning: " << c.component << " has no trainable parameters; vacuous pass\n";
    }
  }
  write_text(dir / "grad_check.jsonl", jsonl(rows));
  return out;
}

}  // namespace fttab
