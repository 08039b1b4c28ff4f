#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fttab/finetune.hpp"
#include "fttab/grad_suite.hpp"
#include "fttab/model.hpp"
#include "fttab/pretrain.hpp"
#include "fttab/prior.hpp"

namespace fttab {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Flat key = value settings. Every key has a default; files and flags may
/// only set known keys. Later merges override earlier ones.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& keys();

  void merge_text(const std::string& text, const std::string& source = "<text>");
  void merge_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

  /// All keys, sorted, one "key = value" line each.
  std::string serialize() const;

  std::uint64_t seed() const { return get_u64("seed"); }
  ModelConfig model() const;
  PriorConfig prior() const;
  PretrainConfig pretrain() const;
  FinetuneConfig finetune() const;
  GradSuiteConfig grad_suite() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fttab
