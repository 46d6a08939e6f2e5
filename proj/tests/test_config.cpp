#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "smallbench/config.hpp"

using namespace smallbench;

namespace {

std::string config_error(std::string_view text, const std::map<std::string, std::string>& overrides = {}) {
  try {
    parse_config(text, overrides, false, "run.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const char* part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("empty file applies the defaults") {
    const auto cfg = parse_config("");
    for (const auto& s : settings()) {
      INFO(s.key);
      CHECK(cfg.raw(s.key) == s.default_value);
    }
    const auto o = cfg.pretrain_options(30522);
    CHECK(o.schedule.peak_lr == 5e-4);
    CHECK(o.schedule.warmup_steps == 10000);
    CHECK(o.schedule.total_steps == 1000000);
    CHECK(o.batch_size == 128);
    CHECK(o.model.num_layers == 12);
    CHECK(o.model.hidden == 256);
    CHECK(o.model.heads == 4);
    CHECK(o.model.ffn_inner == 1024);
    CHECK(o.model.max_len == 128);
    CHECK_FALSE(o.stop_at_step.has_value());
    CHECK(o.model.objective == Objective::kElectra);
    CHECK(o.model.attention == AttentionKind::kDisentangled);
  }

  TEST_CASE("unknown key names the key and the line") {
    const auto m = config_error("# run settings\npeak-lr = 5e-4\nleraning_rate = 1e-4\n");
    CHECK(contains(m, "leraning_rate"));
    CHECK(contains(m, "run.cfg:3"));
    CHECK(contains(config_error("", {{"leraning-rate", "1"}}), "command line"));
  }

  TEST_CASE("type mismatches and malformed lines") {
    CHECK(contains(config_error("steps = many\n"), "run.cfg:1"));
    CHECK(contains(config_error("\n\ndropout = 0.x"), "run.cfg:3"));
    CHECK_FALSE(config_error("just a line\n").empty());
    CHECK_FALSE(config_error("ft-epochs = 3,,x\n").empty());
    CHECK_FALSE(config_error("", {{"seed", "abc"}}).empty());
  }

  TEST_CASE("command line beats the file, which beats the toy preset") {
    const auto file = parse_config("peak-lr = 5e-4\n", {{"peak-lr", "3e-4"}});
    CHECK(file.get_float("peak-lr") == 3e-4);
    const auto toy = parse_config("", {}, true);
    CHECK(toy.get_size("num-layers") == 2);
    CHECK(toy.get_size("hidden") == 64);
    CHECK(toy.get_float("dropout") == 0.0);
    const auto toy_file = parse_config("hidden = 96\n", {}, true);
    CHECK(toy_file.get_size("hidden") == 96);
    CHECK(parse_config("hidden = 96\n", {{"hidden", "48"}}, true).get_size("hidden") == 48);
  }

  TEST_CASE("keys accept underscores, comments and whitespace") {
    const auto cfg = parse_config("  peak_lr=1e-4   # note\n\n# full comment\nMODEL = bert\n");
    CHECK(cfg.get_float("peak-lr") == 1e-4);
    CHECK(cfg.get_string("model") == "bert");
    CHECK(cfg.variant().objective == Objective::kMlm);
  }

  TEST_CASE("variant mapping and labels") {
    CHECK(variant_mapping("bert").attention == AttentionKind::kAbsolute);
    CHECK(variant_mapping("deberta").attention == AttentionKind::kDisentangled);
    CHECK(variant_mapping("deberta").objective == Objective::kMlm);
    CHECK(variant_mapping("electra").objective == Objective::kElectra);
    CHECK(variant_mapping("electra").attention == AttentionKind::kAbsolute);
    CHECK(variant_label("electra-deberta") == "ELECTRA-DeBERTa");
    CHECK_THROWS(variant_mapping("xlnet"));
    CHECK(parse_config("model = deberta\n").input_mode() == InputMode::kContiguous);
    CHECK(parse_config("model = bert\n").input_mode() == InputMode::kPair);
    CHECK(parse_config("model = bert\ninput-mode = contiguous\n").input_mode() == InputMode::kContiguous);
    CHECK_THROWS(parse_config("model = gpt\n").variant());
  }

  TEST_CASE("fine-tuning grid follows the objective unless set") {
    const auto electra = parse_config("").finetune_grid();
    CHECK(electra.lrs == std::vector<double>{1e-4, 2e-4, 3e-4});
    CHECK(electra.batch_sizes == std::vector<std::size_t>{16, 32});
    CHECK(electra.epochs == std::vector<std::size_t>{3, 10});
    const auto mlm = parse_config("model = bert\n").finetune_grid();
    CHECK(mlm.lrs.front() == 1e-5);
    const auto custom = parse_config("ft-lrs = 2e-4, 4e-4\n").finetune_grid();
    CHECK(custom.lrs == std::vector<double>{2e-4, 4e-4});
  }

  TEST_CASE("required paths and the data directory fallback") {
    const auto cfg = parse_config("");
    try {
      cfg.require_path("corpus");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(contains(e.what(), "missing required setting 'corpus'"));
    }
    ::setenv("SMALLBENCH_DATA_DIR", "/data/glue", 1);
    CHECK(cfg.glue_dir() == "/data/glue");
    CHECK(parse_config("glue-dir = /elsewhere\n").glue_dir() == "/elsewhere");
    ::unsetenv("SMALLBENCH_DATA_DIR");
  }

  TEST_CASE("per-task column overrides") {
    const auto cfg = parse_config("glue.sst.dev = dev_small.tsv\nglue.SST.label = 0\nglue.sst.text-a = 1\n");
    const auto t = cfg.task("SST-2");
    CHECK(t.columns.dev_file == "dev_small.tsv");
    CHECK(t.columns.label == 0);
    CHECK(t.columns.text_a == 1);
    CHECK(cfg.task("CoLA").columns.dev_file == "dev.tsv");
    CHECK_FALSE(config_error("glue.sst.colour = red\n").empty());
    CHECK_FALSE(config_error("glue.wnli.dev = x\n").empty());
  }

  TEST_CASE("config files load and a missing file is an error") {
    const auto path = std::filesystem::temp_directory_path() / "smallbench_config_test.cfg";
    std::ofstream(path) << "steps = 77\nleraning_rate = 1\n";
    try {
      load_config(path);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(contains(e.what(), ":2"));
    }
    std::ofstream(path) << "steps = 77\n";
    CHECK(load_config(path).get_size("steps") == 77);
    std::filesystem::remove(path);
    CHECK_THROWS(load_config(path));
    CHECK(load_config(std::nullopt).get_size("steps") == 1000000);
  }

  TEST_CASE("stop-at zero runs the whole schedule") {
    CHECK_FALSE(parse_config("stop-at = 0\n").pretrain_options(100).stop_at_step.has_value());
    CHECK(parse_config("stop-at = 9\n").pretrain_options(100).stop_at_step == 9u);
  }
}
