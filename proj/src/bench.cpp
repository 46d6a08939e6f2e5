#include "smallbench/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "smallbench/rng.hpp"

namespace smallbench {
namespace {

using json = nlohmann::ordered_json;

double round2(double v) { return std::round(v * 100.0) / 100.0; }

json hyper_to_json(const FinetuneHyper& h) {
  return json{{"lr", h.lr},
              {"batch_size", h.batch_size},
              {"epochs", h.epochs},
              {"layer_decay", h.layer_decay},
              {"warmup_fraction", h.warmup_fraction},
              {"weight_decay", h.weight_decay},
              {"clip_norm", h.clip_norm},
              {"seed", h.seed},
              {"max_len", h.max_len}};
}

FinetuneHyper hyper_from_json(const json& j) {
  FinetuneHyper h;
  h.lr = j.at("lr").get<double>();
  h.batch_size = j.at("batch_size").get<std::size_t>();
  h.epochs = j.at("epochs").get<std::size_t>();
  h.layer_decay = j.at("layer_decay").get<double>();
  h.warmup_fraction = j.at("warmup_fraction").get<double>();
  h.weight_decay = j.at("weight_decay").get<double>();
  h.clip_norm = j.at("clip_norm").get<double>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.max_len = j.at("max_len").get<std::size_t>();
  return h;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

Metric parse_metric(const std::string& s) {
  for (Metric m : {Metric::kMcc, Metric::kAccuracy, Metric::kSpearman})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown metric '" + s + "'");
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> markdown_cells(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  for (std::size_t i = 1; i < line.size(); ++i) {
    if (line[i] == '\\' && i + 1 < line.size() && line[i + 1] == '|') {
      cur.push_back('|');
      ++i;
    } else if (line[i] == '|') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(line[i]);
    }
  }
  return cells;
}

std::string escape_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::optional<double> parse_cell_score(const std::string& cell) {
  if (cell == "-") return std::nullopt;
  std::size_t used = 0;
  const double v = std::stod(cell, &used);
  if (used != cell.size()) throw std::invalid_argument("bad score cell '" + cell + "'");
  return round2(v);
}

}  // namespace

double average_score(std::span<const double> scores) {
  if (scores.size() != kNumTasks)
    throw std::invalid_argument("average needs exactly 8 task scores, got " + std::to_string(scores.size()));
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(kNumTasks);
}

std::string format_score(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", round2(value));
  return std::string(buf) == "-0.00" ? "0.00" : buf;
}

std::vector<FinetuneHyper> HyperGrid::expand(const FinetuneHyper& base) const {
  std::vector<FinetuneHyper> out;
  auto or_base = [](const auto& values, auto fallback) {
    using V = std::decay_t<decltype(fallback)>;
    return values.empty() ? std::vector<V>{fallback} : std::vector<V>(values.begin(), values.end());
  };
  for (double lr : or_base(lrs, base.lr))
    for (double d : or_base(layer_decays, base.layer_decay))
      for (std::size_t b : or_base(batch_sizes, base.batch_size))
        for (std::size_t e : or_base(epochs, base.epochs)) {
          FinetuneHyper h = base;
          h.lr = lr;
          h.layer_decay = d;
          h.batch_size = b;
          h.epochs = e;
          out.push_back(h);
        }
  return out;
}

HyperGrid HyperGrid::defaults_for(Objective objective) {
  HyperGrid g;
  if (objective == Objective::kElectra) {
    g.lrs = {1e-4, 2e-4, 3e-4};
    g.layer_decays = {0.9, 0.8, 0.7};
  } else {
    g.lrs = {1e-5, 2e-5, 3e-5, 4e-5, 5e-5};
    g.layer_decays = {1.0};
  }
  g.batch_sizes = {16, 32};
  g.epochs = {3, 10};
  return g;
}

json MetricReport::to_json() const {
  json meta = json::object();
  for (const auto& [k, v] : metadata) meta[k] = v;
  json tasks_json = json::array();
  for (const auto& t : tasks) {
    json runs_json = json::array();
    for (const auto& r : t.runs)
      runs_json.push_back(
          json{{"run", r.run}, {"score", optional_number(r.score)}, {"error", r.error}, {"hyper", hyper_to_json(r.hyper)}});
    tasks_json.push_back(json{{"task", t.task},
                              {"metric", std::string(to_string(t.metric))},
                              {"best", optional_number(t.best)},
                              {"best_hyper", t.best_hyper ? hyper_to_json(*t.best_hyper) : json(nullptr)},
                              {"runs", std::move(runs_json)}});
  }
  return json{{"schema_version", schema_version},
              {"model", model},
              {"variant", variant},
              {"parameters", parameters},
              {"seed", seed},
              {"runs_per_task", runs_per_task},
              {"complete", complete},
              {"error", error},
              {"average", optional_number(average)},
              {"metadata", std::move(meta)},
              {"tasks", std::move(tasks_json)}};
}

MetricReport MetricReport::from_json(const json& j) {
  try {
    MetricReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion)
      throw std::invalid_argument("unsupported report schema version " + std::to_string(r.schema_version));
    r.model = j.at("model").get<std::string>();
    r.variant = j.at("variant").get<std::string>();
    r.parameters = j.at("parameters").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.runs_per_task = j.at("runs_per_task").get<std::size_t>();
    r.complete = j.at("complete").get<bool>();
    r.error = j.at("error").get<std::string>();
    r.average = number_or_null(j.at("average"));
    for (const auto& [k, v] : j.at("metadata").items()) r.metadata.emplace_back(k, v.get<std::string>());
    for (const auto& tj : j.at("tasks")) {
      TaskReport t;
      t.task = tj.at("task").get<std::string>();
      t.metric = parse_metric(tj.at("metric").get<std::string>());
      t.best = number_or_null(tj.at("best"));
      if (!tj.at("best_hyper").is_null()) t.best_hyper = hyper_from_json(tj.at("best_hyper"));
      for (const auto& rj : tj.at("runs")) {
        RunRecord run;
        run.run = rj.at("run").get<std::size_t>();
        run.score = number_or_null(rj.at("score"));
        run.error = rj.at("error").get<std::string>();
        run.hyper = hyper_from_json(rj.at("hyper"));
        t.runs.push_back(std::move(run));
      }
      r.tasks.push_back(std::move(t));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed report: ") + e.what());
  }
}

std::string MetricReport::dump() const { return to_json().dump(2) + "\n"; }

MetricReport MetricReport::parse(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("report is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

MetricReport run_benchmark(const BenchOptions& options, const TaskRunner& runner, MetricReport header) {
  if (options.runs_per_task == 0) throw std::invalid_argument("runs per task must be at least 1");
  std::vector<const TaskSpec*> specs;
  if (options.tasks.empty()) {
    for (const auto& t : glue_tasks()) specs.push_back(&t);
  } else {
    for (const auto& name : options.tasks) specs.push_back(&glue_task(name));
  }
  const auto grid = options.grid.expand(options.base);

  struct Job {
    std::size_t task, run;
    FinetuneHyper hyper;
  };
  std::vector<Job> jobs;
  for (std::size_t t = 0; t < specs.size(); ++t) {
    const std::size_t task_index = static_cast<std::size_t>(
        std::find_if(glue_tasks().begin(), glue_tasks().end(), [&](const TaskSpec& s) { return &s == specs[t]; }) -
        glue_tasks().begin());
    for (std::size_t r = 0; r < options.runs_per_task; ++r) {
      FinetuneHyper h = grid[r % grid.size()];
      h.seed = mix_seed(mix_seed(options.seed, task_index), r);
      jobs.push_back({t, r, h});
    }
  }

  std::vector<std::optional<RunRecord>> slots(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::size_t first_failed_job = jobs.size();
  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      RunRecord rec;
      rec.run = jobs[i].run;
      rec.hyper = jobs[i].hyper;
      try {
        rec.score = 100.0 * runner(*specs[jobs[i].task], jobs[i].hyper);
      } catch (const std::exception& e) {
        rec.error = e.what();
        std::lock_guard lock(error_mutex);
        first_failed_job = std::min(first_failed_job, i);
        failed = true;
      }
      slots[i] = std::move(rec);
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.jobs, jobs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  MetricReport report = std::move(header);
  report.schema_version = kReportSchemaVersion;
  report.seed = options.seed;
  report.runs_per_task = options.runs_per_task;
  report.tasks.clear();
  for (const auto* spec : specs) report.tasks.push_back(TaskReport{spec->name, spec->metric, {}, {}, {}});
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!slots[i]) continue;
    auto& t = report.tasks[jobs[i].task];
    const RunRecord& rec = *slots[i];
    if (rec.score && (!t.best || *rec.score > *t.best)) {
      t.best = rec.score;
      t.best_hyper = rec.hyper;
    }
    t.runs.push_back(rec);
  }
  report.complete = !failed && specs.size() == kNumTasks;
  if (failed) {
    const Job& j = jobs[first_failed_job];
    report.error = "task " + specs[j.task]->name + " run " + std::to_string(j.run) + " failed: " +
                   slots[first_failed_job]->error;
  } else if (specs.size() != kNumTasks) {
    report.error = "only " + std::to_string(specs.size()) + " of 8 tasks requested";
  }
  report.average.reset();
  if (report.complete) {
    std::vector<double> best;
    for (const auto& t : report.tasks) best.push_back(round2(*t.best));
    report.average = average_score(best);
  }
  return report;
}

LeaderboardFormat parse_leaderboard_format(std::string_view text) {
  if (text == "markdown" || text == "md") return LeaderboardFormat::kMarkdown;
  if (text == "json") return LeaderboardFormat::kJson;
  throw std::invalid_argument("unknown leaderboard format '" + std::string(text) + "' (markdown|json)");
}

LeaderboardRow leaderboard_row(const MetricReport& report) {
  LeaderboardRow row;
  row.model = report.model;
  row.parameters = report.parameters;
  const auto& tasks = glue_tasks();
  for (const auto& t : report.tasks) {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].name == t.task) row.scores[i] = t.best;
  }
  row.average = report.average;
  return row;
}

std::vector<LeaderboardRow> sort_leaderboard(std::vector<LeaderboardRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
    if (a.average.has_value() != b.average.has_value()) return a.average.has_value();
    if (a.average && *a.average != *b.average) return *a.average > *b.average;
    return a.model < b.model;
  });
  return rows;
}

std::string render_leaderboard(std::span<const LeaderboardRow> input, LeaderboardFormat format) {
  const auto rows = sort_leaderboard({input.begin(), input.end()});
  const auto& tasks = glue_tasks();
  if (format == LeaderboardFormat::kJson) {
    json arr = json::array();
    for (const auto& r : rows) {
      json o{{"model", r.model}, {"params", r.parameters}};
      for (std::size_t i = 0; i < kNumTasks; ++i)
        o[tasks[i].name] = r.scores[i] ? json(round2(*r.scores[i])) : json(nullptr);
      o["AVG"] = r.average ? json(round2(*r.average)) : json(nullptr);
      arr.push_back(std::move(o));
    }
    return arr.dump(2) + "\n";
  }
  std::ostringstream os;
  os << "| Model | Params |";
  for (const auto& t : tasks) os << ' ' << t.name << " |";
  os << " AVG |\n|---|---:|";
  for (std::size_t i = 0; i < kNumTasks; ++i) os << "---:|";
  os << "---:|\n";
  for (const auto& r : rows) {
    os << "| " << escape_cell(r.model) << " | " << r.parameters << " |";
    for (const auto& s : r.scores) os << ' ' << (s ? format_score(*s) : "-") << " |";
    os << ' ' << (r.average ? format_score(*r.average) : "-") << " |\n";
  }
  return os.str();
}

std::string render_leaderboard(std::span<const MetricReport> reports, LeaderboardFormat format) {
  std::vector<LeaderboardRow> rows;
  for (const auto& r : reports) rows.push_back(leaderboard_row(r));
  return render_leaderboard(rows, format);
}

std::vector<LeaderboardRow> parse_leaderboard(std::string_view text, LeaderboardFormat format) {
  const auto& tasks = glue_tasks();
  std::vector<LeaderboardRow> rows;
  if (format == LeaderboardFormat::kJson) {
    json arr;
    try {
      arr = json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("leaderboard is not valid JSON: ") + e.what());
    }
    if (!arr.is_array()) throw std::invalid_argument("leaderboard JSON must be an array of rows");
    for (const auto& o : arr) {
      LeaderboardRow r;
      r.model = o.at("model").get<std::string>();
      r.parameters = o.at("params").get<std::size_t>();
      for (std::size_t i = 0; i < kNumTasks; ++i) {
        auto v = number_or_null(o.at(tasks[i].name));
        if (v) r.scores[i] = round2(*v);
      }
      if (auto v = number_or_null(o.at("AVG"))) r.average = round2(*v);
      rows.push_back(std::move(r));
    }
    return rows;
  }
  std::istringstream is{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    if (line.empty() || line[0] != '|') continue;
    if (line_no == 1 || line.starts_with("|---")) continue;
    const auto cells = markdown_cells(line);
    if (cells.size() != kNumTasks + 3)
      throw std::invalid_argument("leaderboard line " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) + " cells, expected 11");
    LeaderboardRow r;
    r.model = cells[0];
    r.parameters = std::stoull(cells[1]);
    for (std::size_t i = 0; i < kNumTasks; ++i) r.scores[i] = parse_cell_score(cells[2 + i]);
    r.average = parse_cell_score(cells[2 + kNumTasks]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace smallbench
