#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace smallbench {

enum class TargetKind { kBinary, kThreeClass, kRegression };
enum class Metric { kMcc, kAccuracy, kSpearman };

std::string_view to_string(TargetKind kind);
std::string_view to_string(Metric metric);

/// Where a task's fields live in its TSV files (0-based columns).
struct ColumnMapping {
  std::string dir;
  std::string train_file = "train.tsv";
  std::string dev_file = "dev.tsv";
  bool header = true;
  int text_a = 0;
  int text_b = -1;  // -1: single-sentence task
  int label = 1;    // -1: last column
  /// Required column count when there is no header (with a header, the
  /// header's own count is required).
  std::size_t columns = 0;
  /// Label strings in class-id order; empty means the label is numeric.
  std::vector<std::string> label_names;
};

struct TaskSpec {
  std::string name;  // CoLA, SST, MRPC, STS, QQP, MNLI, QNLI, RTE
  TargetKind target = TargetKind::kBinary;
  Metric metric = Metric::kAccuracy;
  ColumnMapping columns;

  bool is_pair() const { return columns.text_b >= 0; }
  /// Output width of the task head: classes, or 1 for regression.
  std::size_t num_outputs() const;
};

/// The eight tasks in leaderboard column order with the standard GLUE
/// distribution layout.
const std::vector<TaskSpec>& glue_tasks();

/// Case-insensitive; also accepts "SST-2" and "STS-B". Throws
/// std::invalid_argument listing the known names.
const TaskSpec& glue_task(std::string_view name);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Example {
  std::string text_a;
  std::string text_b;
  double label = 0.0;  // class id, or the real-valued score for STS
};

struct TaskData {
  std::vector<Example> examples;
  std::size_t rows = 0;       // data rows seen (header excluded)
  std::size_t malformed = 0;  // rows skipped
};

enum class Split { kTrain, kDev };

/// Loads one split. Rows with the wrong column count, an unknown label or
/// an out-of-range score are skipped; more than 1% of such rows is a
/// DataError naming the file and the first bad line. A missing file or a
/// split without usable rows is a DataError too.
TaskData load_task(const TaskSpec& task, const std::filesystem::path& glue_dir, Split split);

/// Matthews correlation of binary predictions; 0 when undefined.
double matthews_corrcoef(std::span<const int> predictions, std::span<const int> labels);
double accuracy(std::span<const int> predictions, std::span<const int> labels);
/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> values);
/// Spearman correlation with average ranks for ties; 0 when either side
/// is constant.
double spearman(std::span<const double> x, std::span<const double> y);

/// Task metric on raw model outputs: class ids (as doubles) or scores.
double task_metric(const TaskSpec& task, std::span<const double> predictions, std::span<const double> labels);

}  // namespace smallbench
