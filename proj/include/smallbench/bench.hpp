#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "smallbench/finetune.hpp"
#include "smallbench/glue.hpp"

namespace smallbench {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::size_t kNumTasks = 8;

/// Arithmetic mean of exactly eight task scores.
double average_score(std::span<const double> scores);

/// Fixed two-decimal text form used in every report.
std::string format_score(double value);

/// Cartesian fine-tuning grid, enumerated lr-major:
/// lr x layer_decay x batch_size x epochs.
struct HyperGrid {
  std::vector<double> lrs;
  std::vector<double> layer_decays;
  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> epochs;

  std::vector<FinetuneHyper> expand(const FinetuneHyper& base) const;
  /// Grid used for ELECTRA-style (electra objective) or MLM-style models.
  static HyperGrid defaults_for(Objective objective);
};

struct RunRecord {
  std::size_t run = 0;
  FinetuneHyper hyper;
  std::optional<double> score;  // points (metric x 100); empty if the run failed
  std::string error;
};

struct TaskReport {
  std::string task;
  Metric metric = Metric::kAccuracy;
  std::vector<RunRecord> runs;
  std::optional<double> best;  // max over successful runs
  std::optional<FinetuneHyper> best_hyper;
};

struct MetricReport {
  int schema_version = kReportSchemaVersion;
  std::string model;    // leaderboard label
  std::string variant;  // bert | deberta | electra | electra-deberta
  std::size_t parameters = 0;
  std::uint64_t seed = 0;
  std::size_t runs_per_task = 0;
  std::vector<TaskReport> tasks;
  std::optional<double> average;  // present only when all 8 tasks have a best
  bool complete = false;
  std::string error;  // why the run is incomplete
  std::vector<std::pair<std::string, std::string>> metadata;

  nlohmann::ordered_json to_json() const;
  /// Rejects a different schema version or a malformed document.
  static MetricReport from_json(const nlohmann::ordered_json& j);
  /// Pretty JSON text, newline-terminated.
  std::string dump() const;
  static MetricReport parse(std::string_view text);
};

struct BenchOptions {
  std::vector<std::string> tasks;  // empty = all eight in leaderboard order
  std::size_t runs_per_task = 5;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
  HyperGrid grid;
  FinetuneHyper base;  // fields not covered by the grid
};

/// One fine-tuning run; returns the raw dev metric. May be called from
/// several threads at once.
using TaskRunner = std::function<double(const TaskSpec&, const FinetuneHyper&)>;

/// Run r of task t uses grid point r mod |grid| and seed
/// mix_seed(mix_seed(seed, t), r). Results are assembled in task/run order
/// whatever the job count. The first failing run stops the benchmark: no
/// new runs start and the report comes back with complete == false and the
/// error recorded. `header` supplies model, variant, parameters and metadata.
MetricReport run_benchmark(const BenchOptions& options, const TaskRunner& runner, MetricReport header);

struct LeaderboardRow {
  std::string model;
  std::size_t parameters = 0;
  std::array<std::optional<double>, kNumTasks> scores;
  std::optional<double> average;

  friend bool operator==(const LeaderboardRow&, const LeaderboardRow&) = default;
};

enum class LeaderboardFormat { kMarkdown, kJson };
LeaderboardFormat parse_leaderboard_format(std::string_view text);

LeaderboardRow leaderboard_row(const MetricReport& report);

/// Highest average first, rows without an average last, ties by model name.
std::vector<LeaderboardRow> sort_leaderboard(std::vector<LeaderboardRow> rows);

/// Columns Model, Params, the eight tasks and AVG; scores with two decimals.
/// Input rows are sorted before rendering.
std::string render_leaderboard(std::span<const LeaderboardRow> rows, LeaderboardFormat format);
std::string render_leaderboard(std::span<const MetricReport> reports, LeaderboardFormat format);

/// Reads back either rendered form.
std::vector<LeaderboardRow> parse_leaderboard(std::string_view text, LeaderboardFormat format);

}  // namespace smallbench
