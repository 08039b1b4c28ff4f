// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Takes roughly ten minutes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fttab/checkpoint.hpp"
#include "fttab/commands.hpp"
#include "fttab/config.hpp"
#include "fttab/data.hpp"
#include "fttab/errors.hpp"
#include "fttab/finetune.hpp"
#include "fttab/metrics.hpp"
#include "fttab/pretrain.hpp"

namespace fs = std::filesystem;
using namespace fttab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s [%d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---------------------------------------------------------------------------
// Oracles

double orthogonal_oracle(const std::vector<std::vector<double>>& rows) {
  std::vector<std::vector<double>> unit = rows;
  for (auto& r : unit) {
    double norm = 0.0;
    for (double v : r) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : r) v /= std::max(norm, 1e-12);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < unit.size(); ++i)
    for (std::size_t j = 0; j < unit.size(); ++j) {
      if (i == j) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < unit[i].size(); ++k) dot += unit[i][k] * unit[j][k];
      total += dot * dot;
    }
  return total;
}

Tensor to_tensor(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor({rows.size(), rows.front().size()}, std::move(flat));
}

double auc_oracle(const std::vector<double>& p, std::size_t C, const std::vector<int>& y) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < C; ++a)
    for (std::size_t b = a + 1; b < C; ++b) {
      std::uint64_t na = 0, nb = 0;
      for (int v : y) {
        na += v == static_cast<int>(a);
        nb += v == static_cast<int>(b);
      }
      if (!na || !nb) continue;
      double dir[2];
      for (int side = 0; side < 2; ++side) {
        const std::size_t pos = side ? b : a, neg = side ? a : b;
        std::uint64_t twice = 0;
        for (std::size_t r = 0; r < y.size(); ++r) {
          if (y[r] != static_cast<int>(pos)) continue;
          for (std::size_t s = 0; s < y.size(); ++s) {
            if (y[s] != static_cast<int>(neg)) continue;
            const double sp = p[r * C + pos], sn = p[s * C + pos];
            twice += sp > sn ? 2 : (sp == sn ? 1 : 0);
          }
        }
        dir[side] = static_cast<double>(twice) / (2.0 * static_cast<double>(na * nb));
      }
      total += (dir[0] + dir[1]) / 2.0;
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Synthetic datasets

// Mixed numerical / categorical task with a learnable signal and some missing cells.
RawDataset mixed_dataset(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  RawDataset d;
  d.columns = {{"x1", FeatureKind::numerical},
               {"x2", FeatureKind::numerical},
               {"colour", FeatureKind::categorical},
               {"shape", FeatureKind::categorical}};
  const char* colours[] = {"red", "green", "blue"};
  const char* shapes[] = {"disc", "square"};
  for (std::size_t r = 0; r < n; ++r) {
    const double x1 = normal(rng), x2 = normal(rng);
    const int c = static_cast<int>(uniform_index(rng, 0, 2)), s = static_cast<int>(uniform_index(rng, 0, 1));
    const double score = x1 - 0.5 * x2 + (c == 0 ? 1.0 : c == 1 ? -1.0 : 0.0) + (s ? 0.5 : -0.5);
    std::vector<Cell> row = {Cell(x1), Cell(x2), Cell(std::string(colours[c])), Cell(std::string(shapes[s]))};
    if (unit(rng) < 0.05) row[2] = Cell(std::monostate{});
    d.cells.push_back(std::move(row));
    d.targets.push_back(score > 0.0 ? "pos" : "neg");
  }
  return d;
}

// Only categorical columns; the label depends on a signed sum of value codes.
RawDataset categorical_dataset(std::uint64_t seed, std::size_t n, std::size_t m) {
  Rng rng(seed);
  RawDataset d;
  for (std::size_t j = 0; j < m; ++j) d.columns.push_back({"c" + std::to_string(j), FeatureKind::categorical});
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<Cell> row;
    int s = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const int v = static_cast<int>(uniform_index(rng, 0, 3));
      s += j % 2 ? v : 3 - v;
      row.push_back(Cell("v" + std::to_string(v)));
    }
    d.cells.push_back(std::move(row));
    d.targets.push_back(s > static_cast<int>(3 * m / 2) ? "hi" : "lo");
  }
  return d;
}

// Two categorical columns drawing from the same strings {a,b,c,d}; "a" in the
// left column pushes toward one class, "a" in the right column toward the
// other. 5% label noise plus one irrelevant numerical column.
RawDataset shared_strings_dataset(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit;
  std::normal_distribution<double> normal;
  RawDataset d;
  d.columns = {{"left", FeatureKind::categorical}, {"right", FeatureKind::categorical}, {"noise", FeatureKind::numerical}};
  const char* vals[] = {"a", "b", "c", "d"};
  for (std::size_t r = 0; r < n; ++r) {
    const auto a = uniform_index(rng, 0, 3), b = uniform_index(rng, 0, 3);
    int y = ((a < 2) != (b >= 2)) ? 1 : 0;
    if (unit(rng) < 0.05) y = static_cast<int>(uniform_index(rng, 0, 1));
    d.cells.push_back({Cell(std::string(vals[a])), Cell(std::string(vals[b])), Cell(normal(rng))});
    d.targets.push_back(y ? "yes" : "no");
  }
  return d;
}

std::string to_csv(const RawDataset& d) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& c : d.columns) out << c.name << ",";
  out << "target\n";
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (const auto& cell : d.cells[r]) {
      if (const auto* x = std::get_if<double>(&cell)) out << *x;
      else if (const auto* s = std::get_if<std::string>(&cell)) out << *s;
      out << ",";
    }
    out << d.targets[r] << "\n";
  }
  return out.str();
}

fs::path write_descriptor(const fs::path& dir, const std::string& name, const RawDataset& d) {
  fs::create_directories(dir);
  std::ofstream(dir / (name + ".csv"), std::ios::binary) << to_csv(d);
  std::string cats;
  for (const auto& c : d.columns)
    if (c.kind == FeatureKind::categorical) cats += (cats.empty() ? "" : ",") + c.name;
  const auto path = dir / (name + ".dataset");
  std::ofstream(path, std::ios::binary) << "name = " << name << "\ncsv = " << name << ".csv\ntarget = target\ncategorical = "
                                        << cats << "\n";
  return path;
}

struct Bound {
  FtModel model;
  EncodedDataset data;
};

Bound bind_dataset(const PfnBackbone& backbone, const RawDataset& raw, Variant v, std::uint64_t seed) {
  const auto fitted = fit_schema(raw);
  const auto classes = class_vocabulary(raw);
  auto enc = encode(raw, fitted, classes);
  return {bind_model(backbone, fitted, classes, v, seed), std::move(enc)};
}

std::vector<double> snapshot(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// ---------------------------------------------------------------------------
// Criteria

Outcome grad_check_criterion() {
  RunConfig cfg;
  cfg.set("output_dir", (fs::temp_directory_path() / "fttab_acceptance" / "grad").string());
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = cmd_grad_check(cfg);
  const double secs = seconds_since(t0);
  std::string detail;
  bool ok = out.passed && secs < 60.0 && out.components.size() == 4;
  for (const auto& c : out.components) {
    detail += c.component + "=" + fmt("%.2e", c.result.max_relative_error) + " ";
    ok = ok && c.result.entries_checked > 0 && c.result.max_relative_error < 1e-4;
  }
  return {ok, detail + "runtime " + fmt("%.1f", secs) + "s"};
}

Outcome orthogonal_criterion() {
  Rng rng(2024);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = uniform_index(rng, 1, 8), d = uniform_index(rng, 1, 32);
    std::vector<std::vector<double>> rows(m, std::vector<double>(d));
    for (auto& r : rows)
      for (double& v : r) v = normal(rng);
    worst = std::max(worst, std::abs(orthogonal_loss(to_tensor(rows)).item() - orthogonal_oracle(rows)));
  }
  // Orthonormal rows: scaled standard basis vectors.
  std::vector<std::vector<double>> basis(6, std::vector<double>(16, 0.0));
  for (std::size_t i = 0; i < basis.size(); ++i) basis[i][i * 2] = 1.0;
  const double ortho = orthogonal_loss(to_tensor(basis)).item();
  const double dup = orthogonal_loss(to_tensor({{0.3, -1.2, 2.0}, {0.3, -1.2, 2.0}})).item();
  const bool ok = worst <= 1e-10 && std::abs(ortho) <= 1e-12 && dup == 2.0;
  return {ok, "max |diff| " + fmt("%.2e", worst) + ", orthonormal " + fmt("%.1e", ortho) + ", duplicated " +
                  fmt("%.17g", dup)};
}

Outcome auc_criterion() {
  Rng rng(77);
  std::size_t mismatches = 0, tied = 0, done = 0;
  std::uniform_real_distribution<double> unit;
  while (done < 200) {
    const std::size_t q = uniform_index(rng, 2, 50), C = uniform_index(rng, 2, 4);
    const bool coarse = done % 2 == 0;  // half the instances draw from a coarse grid to force ties
    std::vector<double> p(q * C);
    for (double& v : p) v = coarse ? std::floor(unit(rng) * 4.0) / 4.0 : unit(rng);
    std::vector<int> y(q);
    for (int& v : y) v = static_cast<int>(uniform_index(rng, 0, C - 1));
    if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y[0]; })) continue;
    const double got = roc_auc_ovo(p, C, y);
    mismatches += got != auc_oracle(p, C, y);
    tied += coarse;
    ++done;
  }
  return {mismatches == 0, std::to_string(done) + " instances (" + std::to_string(tied) + " with tied scores), " +
                               std::to_string(mismatches) + " mismatches"};
}

Outcome freeze_criterion(const PfnBackbone& backbone) {
  const auto raw = mixed_dataset(41, 200);
  bool ok = true;
  std::string detail;
  for (const auto trainable : {TrainableSet::ft_layer_only, TrainableSet::full_model}) {
    auto b = bind_dataset(backbone, raw, Variant::full, 5);
    const auto w_before = snapshot(b.model.tokenizer.numerical_weights());
    std::vector<double> nan_row_before(b.model.tokenizer.dim());
    std::copy_n(b.model.tokenizer.table().weights().data().begin(), nan_row_before.size(), nan_row_before.begin());
    FinetuneConfig cfg;
    cfg.trainable = trainable;
    cfg.seed = 5;
    const auto result = finetune(b.model, b.data, cfg);
    const auto& tok = result.model.tokenizer;
    const bool w_same = snapshot(tok.numerical_weights()) == w_before;
    std::vector<double> nan_row_after(tok.dim());
    std::copy_n(tok.table().weights().data().begin(), nan_row_after.size(), nan_row_after.begin());
    const bool nan_same = nan_row_after == nan_row_before;
    // Something trainable must have moved, or the check is vacuous.
    const bool moved = snapshot(tok.table().weights()) != snapshot(b.model.tokenizer.table().weights());
    ok = ok && w_same && nan_same && moved && result.log.epochs.size() == 30;
    detail += trainable_set_name(trainable) + ": W_num " + (w_same ? "identical" : "CHANGED") + ", NaN row " +
              (nan_same ? "identical" : "CHANGED") + (moved ? "" : ", table did not train") + "; ";
  }
  return {ok, detail + "30 epochs each"};
}

Outcome in_context_criterion(const PfnBackbone& backbone, const PretrainLog& log, double pretrain_secs,
                             std::size_t episodes, const RunConfig& cfg) {
  auto prior = cfg.prior();
  prior.noise = 0.0;
  prior.missing_rate = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  const auto score = evaluate_in_context(backbone, prior, cfg.pretrain(), 100, cfg.get_u64("evaluate.seed"), TaskFamily::linear);
  const double total = pretrain_secs + seconds_since(t0);
  const double gap = score.accuracy - score.majority;
  const bool ok = gap >= 0.15 && total < 15 * 60 && episodes >= 2000;
  return {ok, std::to_string(episodes) + " episodes, accuracy " + fmt("%.4f", score.accuracy) + " vs majority " +
                  fmt("%.4f", score.majority) + ", gap " + fmt("%.4f", gap) + ", held-out loss " +
                  fmt("%.3f", log.heldout_loss_start) + " -> " + fmt("%.3f", log.heldout_loss_end) + ", runtime " +
                  fmt("%.0f", total) + "s"};
}

Outcome regularization_criterion(const PfnBackbone& backbone) {
  const auto raw = categorical_dataset(11, 200, 6);
  double offdiag[2] = {0, 0};
  double start = 0.0;
  const Variant variants[2] = {Variant::full, Variant::no_regularization};
  for (int i = 0; i < 2; ++i) {
    auto b = bind_dataset(backbone, raw, variants[i], 3);
    start = mean_abs_offdiag(identifier_gram_matrix(*b.model.tokenizer.identifiers()));
    FinetuneConfig cfg;
    cfg.variant = variants[i];
    cfg.lambda_orth = 1.0;
    cfg.seed = 3;
    const auto result = finetune(b.model, b.data, cfg);
    offdiag[i] = mean_abs_offdiag(identifier_gram_matrix(*result.model.tokenizer.identifiers()));
  }
  const bool ok = offdiag[0] * 2.0 <= offdiag[1];
  return {ok, "mean |offdiag| lambda=1: " + fmt("%.4f", offdiag[0]) + ", lambda=0: " + fmt("%.4f", offdiag[1]) +
                  " (initial " + fmt("%.4f", start) + ")"};
}

Outcome identifier_criterion(const PfnBackbone& backbone) {
  const auto raw = shared_strings_dataset(21, 300);
  std::string detail;
  double means[2] = {0, 0};
  const Variant variants[2] = {Variant::full, Variant::no_identifiers};
  for (int i = 0; i < 2; ++i) {
    FinetuneConfig cfg;
    cfg.variant = variants[i];
    const auto rep = run_protocol(raw, "shared_strings", backbone, cfg);
    detail += variant_name(variants[i]) + " [";
    for (const auto& s : rep.seeds) detail += (s.seed ? " " : "") + fmt("%.4f", s.test_auc);
    detail += "] mean " + fmt("%.4f", rep.mean_auc) + "; ";
    means[i] = rep.mean_auc;
  }
  return {means[0] > means[1], detail + "difference " + fmt("%+.4f", means[0] - means[1])};
}

Outcome protocol_criterion(const PfnBackbone& backbone) {
  const auto raw = mixed_dataset(99, 121);
  FinetuneConfig cfg;
  cfg.epochs = 6;
  const auto base = run_protocol(raw, "mixed", backbone, cfg);
  bool ok = base.seeds.size() == 5;
  for (std::size_t i = 0; i < base.seeds.size(); ++i) {
    const auto& s = base.seeds[i];
    ok = ok && s.seed == i && s.train_rows == 61 && s.test_rows == 60;
  }

  // Mutate every test row of every split (values, missing pattern, labels
  // within the known classes) and rerun; everything fitted or selected on
  // the training half must be bit-identical.
  bool unchanged = true;
  for (const auto& s : base.seeds) {
    auto mutated = raw;
    for (const auto r : split_indices(raw.rows(), s.seed).test) {
      mutated.cells[r] = {Cell(1e3 + static_cast<double>(r)), Cell(std::monostate{}), Cell(std::string("violet")),
                          Cell(std::string("hexagon"))};
      mutated.targets[r] = mutated.targets[r] == "pos" ? "neg" : "pos";
    }
    const auto rerun = run_protocol(mutated, "mixed", backbone, cfg, {s.seed});
    const auto& a = s;
    const auto& b = rerun.seeds.at(0);
    bool same = a.best_epoch == b.best_epoch && a.log.epochs.size() == b.log.epochs.size();
    for (std::size_t e = 0; same && e < a.log.epochs.size(); ++e) {
      const auto &x = a.log.epochs[e], &y = b.log.epochs[e];
      same = x.train_loss == y.train_loss && x.train_accuracy == y.train_accuracy &&
             (x.train_auc == y.train_auc || (std::isnan(x.train_auc) && std::isnan(y.train_auc)));
    }
    same = same && a.model.fitted.stats.means == b.model.fitted.stats.means &&
           a.model.fitted.stats.stds == b.model.fitted.stats.stds &&
           a.model.fitted.schema.vocabularies() == b.model.fitted.schema.vocabularies() &&
           snapshot(a.model.tokenizer.table().weights()) == snapshot(b.model.tokenizer.table().weights());
    unchanged = unchanged && same;
  }
  ok = ok && unchanged;
  return {ok, std::to_string(base.seeds.size()) + " repetitions, splits 61/60 of 121 rows; after mutating test rows: " +
                  (unchanged ? "schema, train log, selected epoch and weights unchanged" : "TRAINING SIDE CHANGED")};
}

Outcome invariance_criterion(const PfnBackbone& backbone) {
  auto b = bind_dataset(backbone, mixed_dataset(7, 40), Variant::full, 9);
  std::vector<std::size_t> support(30), query(10);
  std::iota(support.begin(), support.end(), 0);
  std::iota(query.begin(), query.end(), 30);
  const auto make = [&](const std::vector<std::size_t>& s) {
    return make_episode(b.data.rows, b.data.labels, s, query, b.data.num_classes);
  };
  NoGradGuard guard;
  const auto ref = snapshot(predict_logits(make(support), b.model.backbone, b.model.tokenizer));
  double worst_perm = 0.0;
  Rng rng(5);
  for (int t = 0; t < 5; ++t) {
    auto perm = support;
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto got = snapshot(predict_logits(make(perm), b.model.backbone, b.model.tokenizer));
    for (std::size_t i = 0; i < ref.size(); ++i) worst_perm = std::max(worst_perm, std::abs(got[i] - ref[i]));
  }

  // Feature permutation: reverse both column groups and move weights along.
  const auto& tok = b.model.tokenizer;
  const std::size_t n = tok.numerical_weights().rows(), m = tok.table().offsets().size(), d = tok.dim();
  const auto& rows = b.data.rows;
  Tensor w_num({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) w_num.data()[i * d + k] = tok.numerical_weights().at(n - 1 - i, k);
  std::vector<std::size_t> counts;
  for (std::size_t j = 0; j < m; ++j) counts.push_back(tok.table().sizes()[m - 1 - j]);
  Rng unused(0);
  auto table = CategoricalTokenTable::initialize(counts, d, unused, false);
  Tensor ids({m, d});
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t old = m - 1 - j;
    for (std::size_t c = 0; c < counts[j]; ++c)
      for (std::size_t k = 0; k < d; ++k)
        table.weights().data()[(table.offsets()[j] + c) * d + k] = tok.table().weights().at(tok.table().offsets()[old] + c, k);
    for (std::size_t k = 0; k < d; ++k) ids.data()[j * d + k] = tok.identifiers()->weights.at(old, k);
  }
  EncodedRows permuted = rows;
  for (std::size_t r = 0; r < rows.count; ++r) {
    for (std::size_t i = 0; i < n; ++i) permuted.num[r * n + i] = rows.num[r * n + n - 1 - i];
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t old = m - 1 - j, idx = rows.cat[r * m + old];
      permuted.cat[r * m + j] = idx == 0 ? 0 : idx - tok.table().offsets()[old] + table.offsets()[j];
    }
  }
  const bool equivariant =
      snapshot(FeatureTokenizer(w_num, table, FeatureIdentifiers{ids}).embed(permuted)) == snapshot(tok.embed(rows));

  // All-missing row: numerical zeros, every categorical cell on the NaN row.
  EncodedRows missing;
  missing.count = 1;
  missing.numerical = n;
  missing.categorical = m;
  missing.num.assign(n, 0.0);
  missing.cat.assign(m, CategoricalTokenTable::kNanRow);
  const auto e = snapshot(tok.embed(missing));
  bool nan_exact = true;
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<double> col;
    for (std::size_t j = 0; j < m; ++j) col.push_back(tok.identifiers()->weights.at(j, k));
    std::sort(col.begin(), col.end());
    double sum = 0.0;
    for (double v : col) sum += v;
    nan_exact = nan_exact && e[k] == sum;
  }
  const bool ok = worst_perm <= 1e-10 && equivariant && nan_exact;
  return {ok, "support permutation max |dlogit| " + fmt("%.2e", worst_perm) + ", feature permutation " +
                  (equivariant ? "bit-exact" : "MISMATCH") + ", NaN-row embedding " +
                  (nan_exact ? "equals identifier sum" : "MISMATCH")};
}

Outcome determinism_criterion(const fs::path& root) {
  const auto descriptor = write_descriptor(root / "data", "mixed", mixed_dataset(3, 80));
  std::vector<fs::path> dirs;
  for (const char* run : {"run_a", "run_b"}) {
    RunConfig cfg;
    cfg.set("seed", "17");
    cfg.set("output_dir", (root / run).string());
    cfg.set("model.d", "16");
    cfg.set("model.layers", "2");
    cfg.set("model.heads", "2");
    cfg.set("model.ff_dim", "32");
    cfg.set("pretrain.episodes", "150");
    cfg.set("pretrain.heldout_tasks", "8");
    cmd_pretrain(cfg);
    cfg.set("checkpoint", (root / run / "backbone.ckpt").string());
    cfg.set("dataset", descriptor.string());
    cfg.set("finetune.epochs", "4");
    cfg.set("finetune.variant", "all");
    cmd_finetune(cfg);
    dirs.push_back(root / run);
  }
  std::size_t files = 0, differing = 0;
  std::string first_diff;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    const auto name = entry.path().filename();
    if (name == "resolved_config.txt") continue;  // records output_dir, which differs by design
    ++files;
    if (!fs::exists(dirs[1] / name) || slurp(entry.path()) != slurp(dirs[1] / name)) {
      ++differing;
      if (first_diff.empty()) first_diff = name.string();
    }
  }
  const bool has_ckpts = fs::exists(dirs[0] / "backbone.ckpt") && fs::exists(dirs[0] / "finetuned_full_seed4.ckpt");
  const bool ok = differing == 0 && files > 0 && has_ckpts;
  return {ok, std::to_string(files) + " output files compared (checkpoints, logs, reports), " + std::to_string(differing) +
                  " differ" + (first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

}  // namespace

int main() {
  const auto root = fs::temp_directory_path() / "fttab_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  report(1, "gradient check", grad_check_criterion);
  report(2, "orthogonal loss oracle", orthogonal_criterion);
  report(3, "ROC AUC OVO oracle", auc_criterion);

  // Pretrained backbone shared by the remaining model-level criteria.
  RunConfig cfg;
  cfg.set("pretrain.episodes", "15000");
  PfnBackbone backbone;
  PretrainLog log;
  double pretrain_secs = 0.0;
  {
    const auto t0 = std::chrono::steady_clock::now();
    backbone = PfnBackbone::initialize(cfg.model(), derive_seed(cfg.seed(), 100));
    log = pretrain(backbone, cfg.prior(), cfg.pretrain());
    pretrain_secs = seconds_since(t0);
  }
  report(4, "freeze contracts", [&] { return freeze_criterion(backbone); });
  report(5, "in-context learning", [&] {
    return in_context_criterion(backbone, log, pretrain_secs, cfg.pretrain().episodes, cfg);
  });
  report(6, "orthogonal regularization effect", [&] { return regularization_criterion(backbone); });
  report(7, "identifier effect on shared strings", [&] { return identifier_criterion(backbone); });
  report(8, "protocol fidelity", [&] { return protocol_criterion(backbone); });
  report(9, "invariances", [&] { return invariance_criterion(backbone); });
  report(10, "determinism", [&] { return determinism_criterion(root / "determinism"); });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
