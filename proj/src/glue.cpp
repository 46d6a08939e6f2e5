#include "smallbench/glue.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

namespace smallbench {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::vector<TaskSpec> make_tasks() {
  const std::vector<std::string> entail = {"entailment", "not_entailment"};
  std::vector<TaskSpec> t(8);
  t[0] = {"CoLA", TargetKind::kBinary, Metric::kMcc, {"CoLA", "train.tsv", "dev.tsv", false, 3, -1, 1, 4, {}}};
  t[1] = {"SST", TargetKind::kBinary, Metric::kAccuracy, {"SST-2", "train.tsv", "dev.tsv", true, 0, -1, 1, 0, {}}};
  t[2] = {"MRPC", TargetKind::kBinary, Metric::kAccuracy, {"MRPC", "train.tsv", "dev.tsv", true, 3, 4, 0, 0, {}}};
  t[3] = {"STS", TargetKind::kRegression, Metric::kSpearman,
          {"STS-B", "train.tsv", "dev.tsv", true, 7, 8, 9, 0, {}}};
  t[4] = {"QQP", TargetKind::kBinary, Metric::kAccuracy, {"QQP", "train.tsv", "dev.tsv", true, 3, 4, 5, 0, {}}};
  t[5] = {"MNLI", TargetKind::kThreeClass, Metric::kAccuracy,
          {"MNLI", "train.tsv", "dev_matched.tsv", true, 8, 9, -1, 0, {"contradiction", "entailment", "neutral"}}};
  t[6] = {"QNLI", TargetKind::kBinary, Metric::kAccuracy, {"QNLI", "train.tsv", "dev.tsv", true, 1, 2, 3, 0, entail}};
  t[7] = {"RTE", TargetKind::kBinary, Metric::kAccuracy, {"RTE", "train.tsv", "dev.tsv", true, 1, 2, 3, 0, entail}};
  return t;
}

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

std::string_view to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::kBinary: return "binary";
    case TargetKind::kThreeClass: return "three-class";
    case TargetKind::kRegression: return "regression";
  }
  return "?";
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::kMcc: return "mcc";
    case Metric::kAccuracy: return "accuracy";
    case Metric::kSpearman: return "spearman";
  }
  return "?";
}

std::size_t TaskSpec::num_outputs() const {
  switch (target) {
    case TargetKind::kBinary: return 2;
    case TargetKind::kThreeClass: return 3;
    case TargetKind::kRegression: return 1;
  }
  return 0;
}

const std::vector<TaskSpec>& glue_tasks() {
  static const std::vector<TaskSpec> tasks = make_tasks();
  return tasks;
}

const TaskSpec& glue_task(std::string_view name) {
  std::string key = upper(name);
  if (key == "SST-2" || key == "SST2") key = "SST";
  if (key == "STS-B" || key == "STSB") key = "STS";
  std::string known;
  for (const auto& t : glue_tasks()) {
    if (upper(t.name) == key) return t;
    known += (known.empty() ? "" : ", ") + t.name;
  }
  throw std::invalid_argument("unknown task '" + std::string(name) + "' (known: " + known + ")");
}

TaskData load_task(const TaskSpec& task, const std::filesystem::path& glue_dir, Split split) {
  const auto& c = task.columns;
  const auto path = glue_dir / c.dir / (split == Split::kTrain ? c.train_file : c.dev_file);
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string() + " for task " + task.name);

  std::size_t expected = c.columns;
  std::size_t line_no = 0;
  std::string line;
  if (c.header) {
    if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    expected = split_tabs(line).size();
  }
  const int needed = std::max({c.text_a, c.text_b, c.label});
  if (expected != 0 && static_cast<std::size_t>(needed) >= expected)
    throw DataError(path.string() + ": column mapping for " + task.name + " needs column " +
                    std::to_string(needed) + " but rows have " + std::to_string(expected));

  TaskData data;
  std::size_t first_bad = 0;
  std::string first_reason;
  auto reject = [&](std::string why) {
    ++data.malformed;
    if (!first_bad) {
      first_bad = line_no;
      first_reason = std::move(why);
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++data.rows;
    const auto cols = split_tabs(line);
    if (expected != 0 && cols.size() != expected) {
      reject("expected " + std::to_string(expected) + " columns, found " + std::to_string(cols.size()));
      continue;
    }
    const std::size_t label_col = c.label < 0 ? cols.size() - 1 : static_cast<std::size_t>(c.label);
    if (label_col >= cols.size() || static_cast<std::size_t>(c.text_a) >= cols.size() ||
        (c.text_b >= 0 && static_cast<std::size_t>(c.text_b) >= cols.size())) {
      reject("too few columns");
      continue;
    }
    Example ex;
    ex.text_a = cols[static_cast<std::size_t>(c.text_a)];
    if (c.text_b >= 0) ex.text_b = cols[static_cast<std::size_t>(c.text_b)];
    const std::string& raw = cols[label_col];
    if (task.target == TargetKind::kRegression) {
      if (!parse_double(raw, ex.label) || ex.label < 0.0 || ex.label > 5.0) {
        reject("score '" + raw + "' is not a number in [0, 5]");
        continue;
      }
    } else if (!c.label_names.empty()) {
      auto it = std::find(c.label_names.begin(), c.label_names.end(), raw);
      if (it == c.label_names.end()) {
        reject("unknown label '" + raw + "'");
        continue;
      }
      ex.label = static_cast<double>(it - c.label_names.begin());
    } else {
      double v;
      if (!parse_double(raw, v) || v != std::floor(v) || v < 0 || v >= static_cast<double>(task.num_outputs())) {
        reject("label '" + raw + "' is not a class id");
        continue;
      }
      ex.label = v;
    }
    data.examples.push_back(std::move(ex));
  }
  if (data.malformed * 100 > data.rows)
    throw DataError(path.string() + ": " + std::to_string(data.malformed) + " of " + std::to_string(data.rows) +
                    " rows malformed (limit 1%); first at line " + std::to_string(first_bad) + ": " + first_reason);
  if (data.examples.empty()) throw DataError(path.string() + " has no usable rows");
  return data;
}

double matthews_corrcoef(std::span<const int> p, std::span<const int> y) {
  if (p.size() != y.size()) throw std::invalid_argument("matthews_corrcoef: size mismatch");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] && y[i]) ++tp;
    else if (!p[i] && !y[i]) ++tn;
    else if (p[i]) ++fp;
    else ++fn;
  }
  const double denom = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
  return denom == 0.0 ? 0.0 : (tp * tn - fp * fn) / denom;
}

double accuracy(std::span<const int> p, std::span<const int> y) {
  if (p.size() != y.size()) throw std::invalid_argument("accuracy: size mismatch");
  if (p.empty()) throw std::invalid_argument("accuracy: no examples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < p.size(); ++i) hit += p[i] == y[i];
  return static_cast<double>(hit) / static_cast<double>(p.size());
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: size mismatch");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double task_metric(const TaskSpec& task, std::span<const double> predictions, std::span<const double> labels) {
  if (task.metric == Metric::kSpearman) return spearman(predictions, labels);
  std::vector<int> p(predictions.size()), y(labels.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<int>(std::lround(predictions[i]));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(std::lround(labels[i]));
  return task.metric == Metric::kMcc ? matthews_corrcoef(p, y) : accuracy(p, y);
}

}  // namespace smallbench
