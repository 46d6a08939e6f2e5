#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "smallbench/checkpoint.hpp"
#include "smallbench/objectives.hpp"
#include "smallbench/optim.hpp"
#include "smallbench/pretrain_data.hpp"

namespace smallbench {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Streams forked from Rng(seed): weight init, batch shuffling, masking,
/// and dropout plus generator sampling.
inline constexpr std::uint64_t kInitStream = 1, kDataStream = 2, kMaskStream = 3, kModelStream = 4;

struct PretrainOptions {
  ModelConfig model;
  Schedule schedule;
  std::uint64_t seed = 0;
  std::size_t batch_size = 128;
  InputMode input_mode = InputMode::kPair;
  MaskingPolicy masking;
  AdamWHyper optimizer;
  double clip_norm = 1.0;
  std::size_t shuffle_buffer = 10000;
  /// Stop after this many completed steps (unset = schedule.total_steps).
  /// The schedule still spans total_steps, so a stopped run can be resumed.
  std::optional<std::size_t> stop_at_step;
  std::size_t log_every = 100;
  /// Periodic checkpoints (0 = only the final one).
  std::size_t checkpoint_every = 0;
  /// Where checkpoints go; empty = keep in memory only.
  std::filesystem::path checkpoint_path;
};

struct StepLog {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double mlm_loss = 0.0;
  double rtd_loss = 0.0;  // 0 for the mlm objective
  double rtd_accuracy = 0.0;
  double grad_norm = 0.0;
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;  // one entry per step run by this call
  std::size_t epochs_started = 0;
};

/// Tab-separated header and row used for the training log.
std::string step_log_header();
std::string format_step_log(const StepLog& entry);

/// Pretrains one model variant on a corpus file. With `resume`, weights,
/// optimizer moments and rng states are restored and the batch stream is
/// replayed up to the saved step, so an interrupted run continues exactly
/// as if it had never stopped. Rows are written to `log` every log_every
/// steps. A non-finite loss or gradient raises TrainingError and leaves the
/// last written checkpoint untouched.
PretrainResult pretrain(const PretrainOptions& options, const std::filesystem::path& corpus, const Vocab& vocab,
                        const Checkpoint* resume = nullptr, std::ostream* log = nullptr);

/// Builds the float model described by a pretraining checkpoint and loads
/// its weights.
PretrainModel<float> restore_pretrain_model(const Checkpoint& checkpoint);

}  // namespace smallbench
