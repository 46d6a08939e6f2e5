#pragma once

#include <cstdint>
#include <vector>

#include "smallbench/checkpoint.hpp"
#include "smallbench/glue.hpp"
#include "smallbench/pretrain_data.hpp"

namespace smallbench {

struct FinetuneHyper {
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 3;
  double layer_decay = 0.8;  // 1 disables layer-wise decay
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  std::size_t max_len = 128;  // capped at the model's max_len

  friend bool operator==(const FinetuneHyper&, const FinetuneHyper&) = default;
};

/// Downstream model: the pretrained embeddings and encoder plus a linear
/// head ("task_head.*") over the [CLS] position.
template <typename T>
class ClassifierModel {
 public:
  ClassifierModel(const ModelConfig& config, std::size_t outputs, Rng& init_rng);

  ClassifierModel(const ClassifierModel&) = delete;
  ClassifierModel& operator=(const ClassifierModel&) = delete;
  ClassifierModel(ClassifierModel&&) = default;

  /// Logits (or the regression score) of shape [B, outputs].
  BasicTensor<T> forward(const TokenBatch& batch, const DropoutContext& drop = {}) const;

  const ModelConfig& config() const { return config_; }
  std::size_t outputs() const { return head_.bias.dim(0); }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

 private:
  ModelConfig config_;
  ParameterStore<T> store_;
  EmbeddingTables<T> embeddings_;
  EncoderWeights<T> encoder_;
  Linear<T> head_;
};

struct FinetuneResult {
  double score = 0.0;  // raw task metric on dev
  std::vector<double> predictions;
  std::vector<double> step_losses;
  Checkpoint model;  // kind=finetuned
};

/// Tokenizes examples for the task (single or pair input), unpadded.
std::vector<EncodedSequence> encode_examples(const TaskSpec& task, const TaskData& data, const Vocab& vocab,
                                             std::size_t max_len);

/// Fine-tunes the downstream encoder of a pretraining checkpoint (the
/// discriminator for electra, the sole encoder for mlm) and scores dev.
/// Each epoch visits the training set in a fresh seeded permutation; the
/// learning rate warms up over warmup_fraction of all steps, then decays
/// linearly, and is scaled per layer by layer_decay. epochs == 0 scores the
/// untrained head. Identical inputs give bit-identical results.
FinetuneResult finetune(const Checkpoint& pretrained, const TaskSpec& task, const TaskData& train,
                        const TaskData& dev, const FinetuneHyper& hyper);

/// Scores a checkpoint produced by finetune on `data`.
double evaluate(const Checkpoint& finetuned, const TaskSpec& task, const TaskData& data,
                std::vector<double>* predictions = nullptr);

}  // namespace smallbench
