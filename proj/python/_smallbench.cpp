#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "smallbench/bench.hpp"
#include "smallbench/checkpoint.hpp"
#include "smallbench/cli.hpp"
#include "smallbench/config.hpp"
#include "smallbench/finetune.hpp"
#include "smallbench/glue.hpp"
#include "smallbench/tokenizer.hpp"
#include "smallbench/trainer.hpp"

namespace py = pybind11;
using namespace smallbench;

namespace {

py::dict encoded_dict(const EncodedSequence& s) {
  py::dict d;
  d["ids"] = s.ids;
  d["segment_ids"] = s.segment_ids;
  d["special_mask"] = s.special_mask;
  return d;
}

py::dict step_dict(const StepLog& e) {
  py::dict d;
  d["step"] = e.step;
  d["lr"] = e.lr;
  d["loss"] = e.loss;
  d["mlm_loss"] = e.mlm_loss;
  d["rtd_loss"] = e.rtd_loss;
  d["rtd_accuracy"] = e.rtd_accuracy;
  d["grad_norm"] = e.grad_norm;
  return d;
}

std::map<std::string, std::string> as_overrides(const py::dict& settings) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : settings) out[py::str(k)] = py::str(v);
  return out;
}

}  // namespace

PYBIND11_MODULE(_smallbench, m) {
  m.doc() = "Small transformer pretraining and GLUE benchmarking";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.def("matthews_corrcoef", [](const std::vector<int>& p, const std::vector<int>& y) { return matthews_corrcoef(p, y); },
        py::arg("predictions"), py::arg("labels"));
  m.def("accuracy", [](const std::vector<int>& p, const std::vector<int>& y) { return accuracy(p, y); },
        py::arg("predictions"), py::arg("labels"));
  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); },
        py::arg("x"), py::arg("y"));
  m.def("average_score", [](const std::vector<double>& s) { return average_score(s); }, py::arg("scores"),
        "Mean of eight task scores, each rounded to two decimals first.");
  m.def("format_score", &format_score, py::arg("value"));
  m.def("task_names", [] {
    std::vector<std::string> names;
    for (const auto& t : glue_tasks()) names.push_back(t.name);
    return names;
  });

  py::class_<Vocab>(m, "Vocab")
      .def(py::init<std::vector<std::string>>(), py::arg("tokens"))
      .def_static("load", &Vocab::load, py::arg("path"))
      .def("save", &Vocab::save, py::arg("path"))
      .def("__len__", &Vocab::size)
      .def("token", &Vocab::token, py::arg("id"))
      .def("find", &Vocab::find, py::arg("token"))
      .def_property_readonly("tokens", &Vocab::tokens)
      .def("__eq__", [](const Vocab& a, const Vocab& b) { return a == b; });

  m.def("build_vocab", &build_vocab, py::arg("corpus"), py::arg("target_size"), py::arg("min_frequency") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def("build_vocab_from_text", &build_vocab_from_text, py::arg("text"), py::arg("target_size"),
        py::arg("min_frequency") = 1);
  m.def("tokenize", &tokenize, py::arg("text"), py::arg("vocab"));
  m.def("decode", [](const std::vector<std::int32_t>& ids, const Vocab& v) { return decode(ids, v); }, py::arg("ids"),
        py::arg("vocab"));
  m.def("encode", [](const std::string& a, std::optional<std::string> b, const Vocab& v, std::size_t max_len, bool pad) {
    return encoded_dict(b ? encode_pair(a, *b, v, max_len, pad) : encode_single(a, v, max_len, pad));
  }, py::arg("text_a"), py::arg("text_b") = py::none(), py::arg("vocab"), py::arg("max_len") = 128,
        py::arg("pad") = true);

  m.def("parameter_count", [](const std::string& variant, bool toy, std::size_t vocab_size) {
    return count_parameters_total(parse_config("model = " + variant + "\n", {}, toy).model_config(vocab_size));
  }, py::arg("variant"), py::arg("toy") = false, py::arg("vocab_size") = 30522,
        "Downstream parameter count (generator excluded) for a named variant.");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); }, py::arg("path"))
      .def_readonly("step", &Checkpoint::step)
      .def_property_readonly("config", [](const Checkpoint& c) { return c.config.to_record(); })
      .def_property_readonly("metadata", [](const Checkpoint& c) {
        std::map<std::string, std::string> out(c.metadata.begin(), c.metadata.end());
        out.erase("vocab");
        return out;
      })
      .def_property_readonly("tensor_names", [](const Checkpoint& c) {
        std::vector<std::string> names;
        for (const auto& t : c.tensors) names.push_back(t.name);
        return names;
      })
      .def("tensor", [](const Checkpoint& c, const std::string& name) {
        const auto* t = c.find(name);
        if (!t) throw py::key_error(name);
        return py::make_tuple(t->shape, t->values);
      }, py::arg("name"))
      .def("vocab", &Checkpoint::vocab)
      .def("__eq__", [](const Checkpoint& a, const Checkpoint& b) { return a == b; });

  m.def("pretrain", [](const std::filesystem::path& corpus, const Vocab& vocab, const std::string& config,
                       const py::dict& settings, bool toy) {
    auto options = parse_config(config, as_overrides(settings), toy).pretrain_options(vocab.size());
    options.log_every = 0;
    PretrainResult r;
    {
      py::gil_scoped_release release;
      r = pretrain(options, corpus, vocab);
    }
    py::list log;
    for (const auto& e : r.log) log.append(step_dict(e));
    return py::make_tuple(std::move(r.checkpoint), log);
  }, py::arg("corpus"), py::arg("vocab"), py::arg("config") = "", py::arg("settings") = py::dict(),
        py::arg("toy") = false, "Runs pretraining; returns (checkpoint, per-step log).");

  m.def("finetune", [](const Checkpoint& pretrained, const std::string& task_name, const std::filesystem::path& glue_dir,
                       double lr, std::size_t batch_size, std::size_t epochs, double layer_decay, std::uint64_t seed,
                       std::size_t max_len) {
    const auto& task = glue_task(task_name);
    FinetuneHyper h;
    h.lr = lr;
    h.batch_size = batch_size;
    h.epochs = epochs;
    h.layer_decay = layer_decay;
    h.seed = seed;
    h.max_len = max_len;
    py::gil_scoped_release release;
    const auto train = load_task(task, glue_dir, Split::kTrain), dev = load_task(task, glue_dir, Split::kDev);
    auto r = finetune(pretrained, task, train, dev, h);
    return std::make_pair(r.score, std::move(r.model));
  }, py::arg("pretrained"), py::arg("task"), py::arg("glue_dir"), py::arg("lr") = 1e-4, py::arg("batch_size") = 32,
        py::arg("epochs") = 3, py::arg("layer_decay") = 0.8, py::arg("seed") = 0, py::arg("max_len") = 128,
        "Fine-tunes on one task; returns (dev metric, fine-tuned checkpoint).");

  m.def("evaluate", [](const Checkpoint& finetuned, const std::string& task_name, const std::filesystem::path& glue_dir) {
    const auto& task = glue_task(task_name);
    py::gil_scoped_release release;
    return evaluate(finetuned, task, load_task(task, glue_dir, Split::kDev));
  }, py::arg("finetuned"), py::arg("task"), py::arg("glue_dir"));

  m.def("render_leaderboard", [](const std::vector<std::string>& report_texts, const std::string& format) {
    std::vector<MetricReport> reports;
    for (const auto& text : report_texts) reports.push_back(MetricReport::parse(text));
    return render_leaderboard(reports, parse_leaderboard_format(format));
  }, py::arg("reports"), py::arg("format") = "markdown", "Renders report.json documents as a leaderboard.");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = cli_dispatch(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs a smallbench subcommand in-process; returns (exit code, stdout, stderr).");
}
