#include "smallbench/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace smallbench {
namespace {

using T = SettingType;

std::vector<SettingSpec> make_settings() {
  return {
      {"model", T::kString, "electra-deberta", "variant: bert | deberta | electra | electra-deberta"},
      {"label", T::kString, "", "leaderboard label (default: the variant's table name)"},
      {"corpus", T::kPath, "", "pretraining corpus: one sentence per line, blank line between documents"},
      {"vocab", T::kPath, "", "vocab.txt (default: <out-dir>/vocab.txt)"},
      {"glue-dir", T::kPath, "", "GLUE root with one directory per task (fallback: $SMALLBENCH_DATA_DIR)"},
      {"checkpoint", T::kPath, "", "checkpoint to read (finetune, eval, bench) or write (pretrain)"},
      {"resume", T::kPath, "", "pretraining checkpoint to continue from"},
      {"out-dir", T::kPath, "runs", "directory for outputs"},
      {"seed", T::kInt, "0", "root random seed"},
      {"vocab-size", T::kInt, "30522", "target vocabulary size for build-vocab"},
      {"min-frequency", T::kInt, "1", "minimum piece frequency for build-vocab"},
      {"input-mode", T::kString, "auto", "auto | pair | contiguous (auto: contiguous for deberta)"},
      {"max-len", T::kInt, "128", "maximum sequence length"},
      {"num-layers", T::kInt, "12", "encoder layers"},
      {"hidden", T::kInt, "256", "hidden width"},
      {"heads", T::kInt, "4", "attention heads"},
      {"ffn-inner", T::kInt, "1024", "feed-forward inner width"},
      {"embedding-dim", T::kInt, "128", "embedding width (projected to hidden)"},
      {"max-relative-distance", T::kInt, "128", "relative distance clamp k"},
      {"dropout", T::kFloat, "0.1", "dropout rate"},
      {"generator-fraction", T::kFloat, "0.25", "generator width relative to the discriminator"},
      {"lambda-rtd", T::kFloat, "50", "weight of the replaced-token-detection loss"},
      {"steps", T::kInt, "1000000", "pretraining steps (schedule length)"},
      {"stop-at", T::kInt, "0", "stop pretraining after this step (0: run all steps)"},
      {"batch-size", T::kInt, "128", "pretraining batch size"},
      {"peak-lr", T::kFloat, "5e-4", "pretraining peak learning rate"},
      {"warmup-steps", T::kInt, "10000", "pretraining warmup steps"},
      {"weight-decay", T::kFloat, "0.01", "pretraining AdamW weight decay"},
      {"clip-norm", T::kFloat, "1.0", "global gradient-norm clip"},
      {"mask-prob", T::kFloat, "0.15", "masking selection rate"},
      {"shuffle-buffer", T::kInt, "10000", "shuffle buffer size"},
      {"log-every", T::kInt, "100", "log interval in steps"},
      {"checkpoint-every", T::kInt, "10000", "checkpoint interval in steps (0: only at the end)"},
      {"task", T::kString, "", "task for finetune / eval"},
      {"tasks", T::kStringList, "", "tasks for bench (default: all eight)"},
      {"runs-per-task", T::kInt, "5", "fine-tuning runs per task (best is reported)"},
      {"jobs", T::kInt, "1", "parallel fine-tuning runs"},
      {"grid-index", T::kInt, "0", "grid point used by finetune"},
      {"ft-lrs", T::kFloatList, "", "fine-tuning learning rates (default depends on the objective)"},
      {"ft-layer-decays", T::kFloatList, "", "layer-wise decay factors (default depends on the objective)"},
      {"ft-batch-sizes", T::kIntList, "16,32", "fine-tuning batch sizes"},
      {"ft-epochs", T::kIntList, "3,10", "fine-tuning epoch counts"},
      {"ft-max-len", T::kInt, "128", "fine-tuning sequence length"},
      {"ft-warmup-fraction", T::kFloat, "0.1", "fraction of fine-tuning steps spent warming up"},
      {"ft-weight-decay", T::kFloat, "0.01", "fine-tuning AdamW weight decay"},
  };
}

const std::map<std::string, SettingType>& glue_fields() {
  static const std::map<std::string, SettingType> f = {
      {"dir", T::kString},  {"train", T::kString}, {"dev", T::kString},   {"header", T::kBool},  {"text-a", T::kInt},
      {"text-b", T::kInt},  {"label", T::kInt},    {"columns", T::kInt}, {"labels", T::kStringList}};
  return f;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string canonical_key(std::string_view key) {
  std::string k = trim(key);
  for (auto& c : k) {
    if (c == '_') c = '-';
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return k;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(trim(v.substr(start, comma - start)));
    if (comma == std::string::npos) return out;
    start = comma + 1;
  }
}

bool parse_int(const std::string& s, long long& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_float(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

bool parse_bool(const std::string& s, bool& out) {
  std::string l = s;
  for (auto& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "true" || l == "1" || l == "yes" || l == "on") return out = true, true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return out = false, true;
  return false;
}

std::string_view type_name(SettingType t) {
  switch (t) {
    case T::kString: return "a string";
    case T::kPath: return "a path";
    case T::kInt: return "an integer";
    case T::kFloat: return "a number";
    case T::kBool: return "a boolean";
    case T::kFloatList: return "a comma-separated list of numbers";
    case T::kIntList: return "a comma-separated list of integers";
    case T::kStringList: return "a comma-separated list";
  }
  return "?";
}

/// Empty string when valid, else the reason.
std::string check_value(SettingType type, const std::string& v) {
  long long i;
  double f;
  bool b;
  switch (type) {
    case T::kString:
    case T::kPath:
    case T::kStringList: return "";
    case T::kInt: return parse_int(v, i) ? "" : "expected " + std::string(type_name(type));
    case T::kFloat: return parse_float(v, f) ? "" : "expected " + std::string(type_name(type));
    case T::kBool: return parse_bool(v, b) ? "" : "expected " + std::string(type_name(type));
    case T::kFloatList:
      for (const auto& e : split_list(v))
        if (!parse_float(e, f)) return "expected " + std::string(type_name(type));
      return "";
    case T::kIntList:
      for (const auto& e : split_list(v))
        if (!parse_int(e, i) || i < 0) return "expected " + std::string(type_name(type));
      return "";
  }
  return "";
}

std::optional<SettingType> type_of(const std::string& key) {
  for (const auto& s : settings())
    if (s.key == key) return s.type;
  if (key.starts_with("glue.")) {
    const auto dot = key.find('.', 5);
    if (dot == std::string::npos) return std::nullopt;
    try {
      glue_task(key.substr(5, dot - 5));
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
    auto it = glue_fields().find(key.substr(dot + 1));
    if (it != glue_fields().end()) return it->second;
  }
  return std::nullopt;
}

void set_value(RunConfig& cfg, const std::string& written_key, const std::string& value, const std::string& where) {
  const std::string key = canonical_key(written_key);
  const auto type = type_of(key);
  if (!type) throw ConfigError(where + ": unknown key '" + trim(written_key) + "'");
  if (auto why = check_value(*type, value); !why.empty())
    throw ConfigError(where + ": key '" + key + "': " + why + ", got '" + value + "'");
  if (key == "model") {
    try {
      variant_mapping(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  if (key == "input-mode" && value != "auto" && value != "pair" && value != "contiguous")
    throw ConfigError(where + ": key 'input-mode' must be auto, pair or contiguous, got '" + value + "'");
  cfg.values[key] = value;
}

}  // namespace

const std::vector<SettingSpec>& settings() {
  static const std::vector<SettingSpec> s = make_settings();
  return s;
}

const std::vector<std::pair<std::string, std::string>>& toy_preset() {
  static const std::vector<std::pair<std::string, std::string>> p = {
      {"num-layers", "2"},       {"hidden", "64"},        {"heads", "2"},          {"ffn-inner", "256"},
      {"embedding-dim", "64"},   {"max-len", "64"},       {"max-relative-distance", "32"},
      {"vocab-size", "2000"},    {"batch-size", "16"},    {"steps", "2000"},       {"warmup-steps", "100"},
      {"peak-lr", "2e-3"},       {"dropout", "0"},         {"log-every", "100"},    {"checkpoint-every", "500"},
      {"runs-per-task", "1"},    {"ft-lrs", "1e-3"},      {"ft-layer-decays", "0.9"},
      {"ft-batch-sizes", "16"},  {"ft-epochs", "10"},     {"ft-max-len", "64"},
  };
  return p;
}

Variant variant_mapping(std::string_view name) {
  if (name == "bert") return {Objective::kMlm, AttentionKind::kAbsolute};
  if (name == "deberta") return {Objective::kMlm, AttentionKind::kDisentangled};
  if (name == "electra") return {Objective::kElectra, AttentionKind::kAbsolute};
  if (name == "electra-deberta") return {Objective::kElectra, AttentionKind::kDisentangled};
  throw std::invalid_argument("unknown model variant '" + std::string(name) +
                              "' (bert, deberta, electra, electra-deberta)");
}

std::string variant_label(std::string_view name) {
  if (name == "bert") return "BERT";
  if (name == "deberta") return "DeBERTa";
  if (name == "electra") return "ELECTRA";
  if (name == "electra-deberta") return "ELECTRA-DeBERTa";
  variant_mapping(name);
  return std::string(name);
}

bool RunConfig::has(const std::string& key) const {
  auto it = values.find(key);
  return it != values.end() && !it->second.empty();
}

const std::string& RunConfig::raw(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw ConfigError("setting '" + key + "' is not defined");
  return it->second;
}

std::string RunConfig::get_string(const std::string& key) const { return raw(key); }
std::filesystem::path RunConfig::get_path(const std::string& key) const { return raw(key); }

long long RunConfig::get_int(const std::string& key) const {
  long long v;
  if (!parse_int(raw(key), v)) throw ConfigError("setting '" + key + "' is not an integer");
  return v;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  const long long v = get_int(key);
  if (v < 0) throw ConfigError("setting '" + key + "' must not be negative");
  return static_cast<std::size_t>(v);
}

double RunConfig::get_float(const std::string& key) const {
  double v;
  if (!parse_float(raw(key), v)) throw ConfigError("setting '" + key + "' is not a number");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  bool v;
  if (!parse_bool(raw(key), v)) throw ConfigError("setting '" + key + "' is not a boolean");
  return v;
}

std::vector<double> RunConfig::get_float_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& e : split_list(raw(key))) {
    double v;
    if (!parse_float(e, v)) throw ConfigError("setting '" + key + "' has a non-numeric entry");
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> RunConfig::get_size_list(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& e : split_list(raw(key))) {
    long long v;
    if (!parse_int(e, v) || v < 0) throw ConfigError("setting '" + key + "' has a non-integer entry");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<std::string> RunConfig::get_string_list(const std::string& key) const { return split_list(raw(key)); }

std::filesystem::path RunConfig::require_path(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing required setting '" + key + "' (--" + key + ")");
  return get_path(key);
}

Variant RunConfig::variant() const { return variant_mapping(raw("model")); }

InputMode RunConfig::input_mode() const {
  const auto& m = raw("input-mode");
  if (m == "auto") return raw("model") == "deberta" ? InputMode::kContiguous : InputMode::kPair;
  return parse_input_mode(m);
}

ModelConfig RunConfig::model_config(std::size_t vocab_size) const {
  ModelConfig c;
  const Variant v = variant();
  c.objective = v.objective;
  c.attention = v.attention;
  c.num_layers = get_size("num-layers");
  c.hidden = get_size("hidden");
  c.heads = get_size("heads");
  c.ffn_inner = get_size("ffn-inner");
  c.embedding_dim = get_size("embedding-dim");
  c.vocab_size = vocab_size;
  c.max_len = get_size("max-len");
  c.max_relative_distance = get_size("max-relative-distance");
  c.dropout = get_float("dropout");
  c.generator_fraction = get_float("generator-fraction");
  c.lambda_rtd = get_float("lambda-rtd");
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid model settings: ") + e.what());
  }
  return c;
}

PretrainOptions RunConfig::pretrain_options(std::size_t vocab_size) const {
  PretrainOptions o;
  o.model = model_config(vocab_size);
  o.schedule.peak_lr = get_float("peak-lr");
  o.schedule.warmup_steps = get_size("warmup-steps");
  o.schedule.total_steps = get_size("steps");
  o.seed = static_cast<std::uint64_t>(get_int("seed"));
  o.batch_size = get_size("batch-size");
  o.input_mode = input_mode();
  o.masking.mask_prob = get_float("mask-prob");
  o.optimizer.weight_decay = get_float("weight-decay");
  o.clip_norm = get_float("clip-norm");
  o.shuffle_buffer = get_size("shuffle-buffer");
  if (const auto stop = get_size("stop-at"); stop > 0) o.stop_at_step = stop;
  o.log_every = get_size("log-every");
  o.checkpoint_every = get_size("checkpoint-every");
  return o;
}

HyperGrid RunConfig::finetune_grid() const {
  HyperGrid g = HyperGrid::defaults_for(variant().objective);
  if (has("ft-lrs")) g.lrs = get_float_list("ft-lrs");
  if (has("ft-layer-decays")) g.layer_decays = get_float_list("ft-layer-decays");
  if (has("ft-batch-sizes")) g.batch_sizes = get_size_list("ft-batch-sizes");
  if (has("ft-epochs")) g.epochs = get_size_list("ft-epochs");
  return g;
}

FinetuneHyper RunConfig::finetune_base() const {
  FinetuneHyper h;
  h.max_len = get_size("ft-max-len");
  h.warmup_fraction = get_float("ft-warmup-fraction");
  h.weight_decay = get_float("ft-weight-decay");
  h.seed = static_cast<std::uint64_t>(get_int("seed"));
  return h;
}

BenchOptions RunConfig::bench_options() const {
  BenchOptions b;
  b.tasks = get_string_list("tasks");
  b.runs_per_task = get_size("runs-per-task");
  b.jobs = get_size("jobs");
  b.seed = static_cast<std::uint64_t>(get_int("seed"));
  b.grid = finetune_grid();
  b.base = finetune_base();
  return b;
}

std::filesystem::path RunConfig::glue_dir() const {
  if (has("glue-dir")) return get_path("glue-dir");
  if (const char* env = std::getenv("SMALLBENCH_DATA_DIR"); env && *env) return env;
  throw ConfigError("missing required setting 'glue-dir' (--glue-dir or SMALLBENCH_DATA_DIR)");
}

TaskSpec RunConfig::task(std::string_view name) const {
  TaskSpec t = glue_task(name);
  std::string lower = t.name;
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (const auto& [key, value] : values) {
    if (!key.starts_with("glue.")) continue;
    const auto dot = key.find('.', 5);
    if (glue_task(key.substr(5, dot - 5)).name != t.name) continue;
    const std::string field = key.substr(dot + 1);
    auto& c = t.columns;
    long long i = 0;
    parse_int(value, i);
    if (field == "dir") c.dir = value;
    else if (field == "train") c.train_file = value;
    else if (field == "dev") c.dev_file = value;
    else if (field == "header") parse_bool(value, c.header);
    else if (field == "text-a") c.text_a = static_cast<int>(i);
    else if (field == "text-b") c.text_b = static_cast<int>(i);
    else if (field == "label") c.label = static_cast<int>(i);
    else if (field == "columns") c.columns = static_cast<std::size_t>(i);
    else if (field == "labels") c.label_names = split_list(value);
  }
  return t;
}

RunConfig parse_config(std::string_view text, const std::map<std::string, std::string>& overrides, bool toy,
                       const std::string& source) {
  RunConfig cfg;
  for (const auto& s : settings()) cfg.values[s.key] = s.default_value;
  if (toy)
    for (const auto& [k, v] : toy_preset()) set_value(cfg, k, v, "toy preset");

  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + trim(line) + "'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": missing key before '='");
    set_value(cfg, key, trim(std::string_view(line).substr(eq + 1)), where);
  }
  for (const auto& [k, v] : overrides) set_value(cfg, k, v, "command line (--" + canonical_key(k) + ")");
  return cfg;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::map<std::string, std::string>& overrides, bool toy) {
  if (!path) return parse_config("", overrides, toy);
  std::ifstream in(*path);
  if (!in) throw ConfigError("cannot read config file " + path->string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, toy, path->string());
}

}  // namespace smallbench
