#include <CLI11.hpp>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "fttab/commands.hpp"
#include "fttab/config.hpp"
#include "fttab/errors.hpp"

namespace {

struct Subcommand {
  CLI::App* app = nullptr;
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void add_config_options(Subcommand& sub) {
  sub.app->add_option("--config", sub.config_file, "key = value file; flags override it");
  for (const auto& key : fttab::RunConfig::keys()) {
    std::string help = key.help.empty() ? "" : key.help + " ";
    help += "(default: " + (key.default_value.empty() ? std::string("none") : key.default_value) + ")";
    sub.options[key.name] = sub.app->add_option("--" + key.name, sub.values[key.name], help);
  }
}

fttab::RunConfig resolve(const Subcommand& sub) {
  fttab::RunConfig cfg;
  if (!sub.config_file.empty()) cfg.merge_file(sub.config_file);
  for (const auto& [name, opt] : sub.options) {
    if (opt->count() > 0) cfg.set(name, sub.values.at(name));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-tokenized tabular prior-fitted network"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> names = {
      {"pretrain", "pretrain a backbone on synthetic tasks"},
      {"finetune", "fine-tune the feature tokenizer on a dataset over repeated splits"},
      {"evaluate", "score a backbone on synthetic tasks or a fine-tuned model on its test split"},
      {"export-heatmaps", "write category and identifier similarity matrices of a fine-tuned model"},
      {"grad-check", "compare analytic and numerical gradients"},
  };
  std::map<std::string, Subcommand> subs;
  for (const auto& [name, description] : names) {
    auto& sub = subs[name];
    sub.app = app.add_subcommand(name, description);
    add_config_options(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (auto& [name, sub] : subs) {
      if (!sub.app->parsed()) continue;
      const auto cfg = resolve(sub);
      if (name == "pretrain") {
        const auto out = fttab::cmd_pretrain(cfg, &std::cerr);
        std::cout << out.checkpoint.string() << "\n";
      } else if (name == "finetune") {
        const auto out = fttab::cmd_finetune(cfg, &std::cerr);
        std::cout << fttab::summary_table(out.reports);
      } else if (name == "evaluate") {
        fttab::cmd_evaluate(cfg, &std::cout);
      } else if (name == "export-heatmaps") {
        const auto out = fttab::cmd_export_heatmaps(cfg, &std::cerr);
        std::cout << out.category_csv.string() << "\n";
        if (!out.identifier_csv.empty()) std::cout << out.identifier_csv.string() << "\n";
      } else if (name == "grad-check") {
        const auto out = fttab::cmd_grad_check(cfg, &std::cout);
        return out.passed ? 0 : 3;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fttab::exit_code_for(e);
  }
  return 0;
}
