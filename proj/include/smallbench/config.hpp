#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "smallbench/bench.hpp"
#include "smallbench/encoder.hpp"
#include "smallbench/glue.hpp"
#include "smallbench/pretrain_data.hpp"
#include "smallbench/trainer.hpp"

namespace smallbench {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SettingType { kString, kPath, kInt, kFloat, kBool, kFloatList, kIntList, kStringList };

struct SettingSpec {
  std::string key;
  SettingType type;
  std::string default_value;
  std::string help;
};

/// Every accepted key with its type, default and description. Per-task
/// column overrides use the pattern "glue.<task>.<field>" with fields
/// dir, train, dev, header, text-a, text-b, label, columns, labels.
const std::vector<SettingSpec>& settings();

/// Overrides applied by --toy: a desk-scale model and run length.
const std::vector<std::pair<std::string, std::string>>& toy_preset();

struct Variant {
  Objective objective;
  AttentionKind attention;
};

/// bert, deberta, electra, electra-deberta; anything else throws.
Variant variant_mapping(std::string_view name);
/// Table label for a variant ("ELECTRA-DeBERTa", ...).
std::string variant_label(std::string_view name);

/// Validated settings. Keys are canonical (dashes, lower case).
class RunConfig {
 public:
  bool has(const std::string& key) const;  // present and non-empty
  const std::string& raw(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::filesystem::path get_path(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_float(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_float_list(const std::string& key) const;
  std::vector<std::size_t> get_size_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;
  /// Throws ConfigError "missing required setting '<key>'".
  std::filesystem::path require_path(const std::string& key) const;

  Variant variant() const;
  InputMode input_mode() const;  // "auto": contiguous for deberta, else pairs
  ModelConfig model_config(std::size_t vocab_size) const;
  PretrainOptions pretrain_options(std::size_t vocab_size) const;
  HyperGrid finetune_grid() const;
  FinetuneHyper finetune_base() const;
  BenchOptions bench_options() const;
  /// GLUE directory: glue-dir, else $SMALLBENCH_DATA_DIR.
  std::filesystem::path glue_dir() const;
  /// Default task specs with any glue.<task>.* overrides applied.
  TaskSpec task(std::string_view name) const;

  std::map<std::string, std::string> values;
};

/// Parses "key = value" lines ('#' starts a comment, blank lines ignored,
/// '_' and '-' interchangeable in keys). Layers, lowest first: defaults,
/// toy preset (when `toy`), the file, then `overrides` (command-line flags).
/// Unknown keys and type mismatches raise ConfigError with
/// "<source>:<line>:" or "command line:" context.
RunConfig parse_config(std::string_view text, const std::map<std::string, std::string>& overrides = {},
                       bool toy = false, const std::string& source = "<config>");

/// parse_config over a file; no file means an empty one.
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::map<std::string, std::string>& overrides = {}, bool toy = false);

}  // namespace smallbench
