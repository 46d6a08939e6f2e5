#include "smallbench/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include "smallbench/bench.hpp"
#include "smallbench/checkpoint.hpp"
#include "smallbench/config.hpp"
#include "smallbench/finetune.hpp"
#include "smallbench/glue.hpp"
#include "smallbench/tokenizer.hpp"
#include "smallbench/trainer.hpp"

namespace smallbench {
namespace {

namespace fs = std::filesystem;

/// Settings flags attached to one subcommand.
struct Flags {
  std::optional<std::string> config;
  bool toy = false;
  std::vector<std::string> sets;
  std::map<std::string, std::string> slots;
  std::map<std::string, CLI::Option*> options;

  std::map<std::string, std::string> overrides() const {
    std::map<std::string, std::string> o;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("command line (--set): expected KEY=VALUE, got '" + s + "'");
      o[s.substr(0, eq)] = s.substr(eq + 1);
    }
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) o[key] = slots.at(key);
    return o;
  }

  RunConfig load() const {
    return load_config(config ? std::optional<fs::path>(*config) : std::nullopt, overrides(), toy);
  }
};

std::string help_for(const std::string& key) {
  for (const auto& s : settings())
    if (s.key == key) return s.help + (s.default_value.empty() ? "" : " [" + s.default_value + "]");
  return "";
}

void add_flags(CLI::App* sub, Flags& f, std::initializer_list<const char*> keys) {
  sub->add_option("--config", f.config, "settings file of 'key = value' lines");
  sub->add_flag("--toy", f.toy, "apply the desk-scale toy preset before the config file");
  sub->add_option("--set", f.sets, "override any setting: KEY=VALUE (repeatable)");
  for (const char* key : keys) {
    auto& slot = f.slots[key];
    f.options[key] = sub->add_option(std::string("--") + key, slot, help_for(key));
  }
}

std::string variant_of(const ModelConfig& c) {
  if (c.objective == Objective::kMlm) return c.attention == AttentionKind::kAbsolute ? "bert" : "deberta";
  return c.attention == AttentionKind::kAbsolute ? "electra" : "electra-deberta";
}

Checkpoint read_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

void check_variant(const RunConfig& cfg, const Flags& flags, const Checkpoint& ck) {
  if (flags.overrides().count("model") && cfg.raw("model") != variant_of(ck.config))
    throw ConfigError("checkpoint holds a " + variant_of(ck.config) + " model but --model is " + cfg.raw("model"));
}

fs::path vocab_path(const RunConfig& cfg) {
  return cfg.has("vocab") ? cfg.get_path("vocab") : cfg.get_path("out-dir") / "vocab.txt";
}

/// Copies writes to two streams.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == EOF) return !EOF;
    const bool ok = a_->sputc(static_cast<char>(c)) != EOF && b_->sputc(static_cast<char>(c)) != EOF;
    return ok ? c : EOF;
  }
  int sync() override { return a_->pubsync() == 0 && b_->pubsync() == 0 ? 0 : -1; }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::ios_base::failure("cannot write " + path.string());
  f << text;
  if (!f) throw std::ios_base::failure("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int cmd_build_vocab(const Flags& flags, std::ostream& out) {
  const RunConfig cfg = flags.load();
  const fs::path corpus = cfg.require_path("corpus");
  if (!fs::exists(corpus)) throw DataError("corpus not found: " + corpus.string());
  const Vocab vocab = build_vocab(corpus, cfg.get_size("vocab-size"), cfg.get_size("min-frequency"));
  const fs::path dest = vocab_path(cfg);
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  vocab.save(dest);
  out << "wrote " << vocab.size() << " tokens to " << dest.string() << '\n';
  return 0;
}

int cmd_pretrain(const Flags& flags, std::ostream& out) {
  const RunConfig cfg = flags.load();
  const fs::path corpus = cfg.require_path("corpus");
  if (!fs::exists(corpus)) throw DataError("corpus not found: " + corpus.string());
  const fs::path vpath = vocab_path(cfg);
  if (!fs::exists(vpath)) throw DataError("vocabulary not found: " + vpath.string() + " (run build-vocab first)");
  const Vocab vocab = Vocab::load(vpath);
  PretrainOptions opts = cfg.pretrain_options(vocab.size());
  const fs::path out_dir = cfg.get_path("out-dir");
  const std::string variant = cfg.raw("model");
  opts.checkpoint_path = cfg.has("checkpoint") ? cfg.get_path("checkpoint") : out_dir / (variant + ".ckpt");

  std::optional<Checkpoint> resume;
  if (cfg.has("resume")) resume = read_checkpoint(cfg.get_path("resume"));

  const fs::path log_path = out_dir / (variant + ".pretrain.tsv");
  fs::create_directories(out_dir);
  std::ofstream log_file(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log_file) throw std::ios_base::failure("cannot write " + log_path.string());
  TeeBuf tee(log_file.rdbuf(), out.rdbuf());
  std::ostream log(&tee);

  const auto result = pretrain(opts, corpus, vocab, resume ? &*resume : nullptr, &log);
  out << "pretrained " << variant << " to step " << result.checkpoint.step << "; checkpoint "
      << opts.checkpoint_path.string() << "; log " << log_path.string() << '\n';
  return 0;
}

int cmd_finetune(const Flags& flags, std::ostream& out) {
  const RunConfig cfg = flags.load();
  const fs::path ck_path = cfg.require_path("checkpoint");
  const Checkpoint ck = read_checkpoint(ck_path);
  check_variant(cfg, flags, ck);
  if (!cfg.has("task")) throw ConfigError("missing required setting 'task' (--task)");
  const TaskSpec task = cfg.task(cfg.raw("task"));
  const fs::path glue = cfg.glue_dir();
  const auto train = load_task(task, glue, Split::kTrain);
  const auto dev = load_task(task, glue, Split::kDev);

  const auto grid = cfg.finetune_grid().expand(cfg.finetune_base());
  const std::size_t index = cfg.get_size("grid-index");
  if (index >= grid.size())
    throw ConfigError("grid-index " + std::to_string(index) + " outside the grid of " + std::to_string(grid.size()));
  const auto result = finetune(ck, task, train, dev, grid[index]);
  const fs::path dest = cfg.get_path("out-dir") / (ck_path.stem().string() + "." + task.name + ".ckpt");
  save_checkpoint(result.model, dest);
  out << task.name << '\t' << to_string(task.metric) << '\t' << format_score(100.0 * result.score) << '\t'
      << dest.string() << '\n';
  return 0;
}

int cmd_eval(const Flags& flags, std::ostream& out) {
  const RunConfig cfg = flags.load();
  const Checkpoint ck = read_checkpoint(cfg.require_path("checkpoint"));
  std::string name = cfg.raw("task");
  if (name.empty()) name = ck.meta("task").value_or("");
  if (name.empty()) throw ConfigError("missing required setting 'task' (--task)");
  const TaskSpec task = cfg.task(name);
  const auto dev = load_task(task, cfg.glue_dir(), Split::kDev);
  const double score = evaluate(ck, task, dev);
  out << task.name << '\t' << to_string(task.metric) << '\t' << format_score(100.0 * score) << '\n';
  return 0;
}

int cmd_bench(const Flags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = flags.load();
  const fs::path ck_path = cfg.require_path("checkpoint");
  const Checkpoint ck = read_checkpoint(ck_path);
  check_variant(cfg, flags, ck);
  const fs::path glue = cfg.glue_dir();
  const BenchOptions options = cfg.bench_options();
  const std::string variant = variant_of(ck.config);

  std::vector<std::string> names = options.tasks;
  if (names.empty())
    for (const auto& t : glue_tasks()) names.push_back(t.name);
  struct Loaded {
    TaskSpec spec;
    std::optional<TaskData> train, dev;
    std::string error;
  };
  std::map<std::string, Loaded> data;
  for (const auto& n : names) {
    Loaded l{cfg.task(n), {}, {}, {}};
    try {
      l.train = load_task(l.spec, glue, Split::kTrain);
      l.dev = load_task(l.spec, glue, Split::kDev);
    } catch (const DataError& e) {
      l.error = e.what();
    }
    data.emplace(l.spec.name, std::move(l));
  }
  const TaskRunner runner = [&](const TaskSpec& spec, const FinetuneHyper& h) {
    const Loaded& l = data.at(spec.name);
    if (!l.error.empty()) throw DataError(l.error);
    return finetune(ck, l.spec, *l.train, *l.dev, h).score;
  };

  MetricReport header;
  header.model = cfg.has("label") ? cfg.raw("label") : variant_label(variant);
  header.variant = variant;
  header.parameters = count_parameters_total(ck.config);
  const std::string mode = ck.meta("input_mode").value_or("pair");
  header.metadata = {{"checkpoint", ck_path.string()},
                     {"pretrain_steps", std::to_string(ck.step)},
                     {"input_mode", mode}};
  if (variant == "bert" && mode == "contiguous")
    header.metadata.emplace_back("stands_for", "RoBERTa (bert variant with contiguous input)");

  const MetricReport report = run_benchmark(options, runner, header);
  const fs::path dest = cfg.get_path("out-dir") / "report.json";
  write_text(dest, report.dump());
  if (!report.complete) {
    err << "smallbench: error[bench]: benchmark incomplete (" << report.error << "); partial report saved to "
        << dest.string() << '\n';
    return 1;
  }
  for (const auto& t : report.tasks) out << t.task << '\t' << format_score(*t.best) << '\n';
  out << "AVG\t" << format_score(*report.average) << '\n' << "report " << dest.string() << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& format, const std::string& output,
               std::ostream& out, std::ostream& err) {
  const LeaderboardFormat fmt = parse_leaderboard_format(format);
  std::vector<MetricReport> reports;
  for (const auto& p : inputs) {
    if (!fs::exists(p)) throw std::ios_base::failure("report not found: " + p);
    try {
      reports.push_back(MetricReport::parse(read_text(p)));
    } catch (const std::invalid_argument& e) {
      throw DataError(p + ": " + e.what());
    }
    if (!reports.back().complete) err << "smallbench: warning: " << p << " is an incomplete report\n";
  }
  const std::string text = render_leaderboard(reports, fmt);
  if (output.empty()) {
    out << text;
  } else {
    write_text(output, text);
  }
  return 0;
}

std::string category(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const CheckpointError*>(&e)) return "checkpoint";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  if (dynamic_cast<const TrainingError*>(&e)) return "training";
  if (dynamic_cast<const fs::filesystem_error*>(&e) || dynamic_cast<const std::ios_base::failure*>(&e)) return "io";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid";
  return "runtime";
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Small language-model pretraining and GLUE benchmarking", "smallbench"};
  app.require_subcommand(1, 1);

  Flags vocab_flags, pretrain_flags, finetune_flags, eval_flags, bench_flags;
  auto* build_vocab_cmd = app.add_subcommand("build-vocab", "build a WordPiece vocabulary from a corpus");
  add_flags(build_vocab_cmd, vocab_flags, {"corpus", "vocab", "out-dir", "vocab-size", "min-frequency"});
  auto* pretrain_cmd = app.add_subcommand("pretrain", "pretrain one model variant");
  add_flags(pretrain_cmd, pretrain_flags,
            {"model", "corpus", "vocab", "checkpoint", "resume", "out-dir", "seed", "steps", "stop-at", "batch-size",
             "peak-lr", "warmup-steps", "input-mode", "log-every", "checkpoint-every"});
  auto* finetune_cmd = app.add_subcommand("finetune", "fine-tune a pretrained checkpoint on one task");
  add_flags(finetune_cmd, finetune_flags,
            {"model", "checkpoint", "task", "glue-dir", "out-dir", "seed", "grid-index", "ft-lrs", "ft-layer-decays",
             "ft-batch-sizes", "ft-epochs"});
  auto* eval_cmd = app.add_subcommand("eval", "score a fine-tuned checkpoint on a dev set");
  add_flags(eval_cmd, eval_flags, {"checkpoint", "task", "glue-dir"});
  auto* bench_cmd = app.add_subcommand("bench", "best-of-N fine-tuning on all eight tasks");
  add_flags(bench_cmd, bench_flags,
            {"model", "label", "checkpoint", "glue-dir", "out-dir", "seed", "runs-per-task", "jobs", "tasks", "ft-lrs",
             "ft-layer-decays", "ft-batch-sizes", "ft-epochs"});
  auto* report_cmd = app.add_subcommand("report", "render saved reports as a leaderboard");
  std::vector<std::string> report_inputs;
  std::string report_format = "markdown", report_output;
  report_cmd->add_option("reports", report_inputs, "report.json files")->required();
  report_cmd->add_option("--format", report_format, "markdown | json [markdown]");
  report_cmd->add_option("--output", report_output, "write here instead of stdout");

  if (!args.empty() && !args[0].starts_with("-")) {
    bool known = false;
    for (const auto* sub : app.get_subcommands({})) known = known || sub->get_name() == args[0];
    if (!known) {
      err << "smallbench: error[usage]: unknown subcommand '" << one_line(args[0]) << "'\n" << app.help();
      return 2;
    }
  }

  std::vector<const char*> argv{"smallbench"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "smallbench: error[usage]: " << one_line(e.what()) << '\n' << app.help();
    return 2;
  }

  try {
    if (*build_vocab_cmd) return cmd_build_vocab(vocab_flags, out);
    if (*pretrain_cmd) return cmd_pretrain(pretrain_flags, out);
    if (*finetune_cmd) return cmd_finetune(finetune_flags, out);
    if (*eval_cmd) return cmd_eval(eval_flags, out);
    if (*bench_cmd) return cmd_bench(bench_flags, out, err);
    if (*report_cmd) return cmd_report(report_inputs, report_format, report_output, out, err);
  } catch (const std::exception& e) {
    err << "smallbench: error[" << category(e) << "]: " << one_line(e.what()) << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace smallbench
