#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "smallbench/encoder.hpp"

namespace smallbench {

/// hidden -> e, gelu, layer norm, then logits against the tied token table.
template <typename T>
struct MlmHead {
  Linear<T> dense;  // [hidden, e]
  LayerNormParams<T> norm;
  BasicTensor<T> output_bias;  // [V]
};

/// hidden -> hidden, gelu, -> one logit per position.
template <typename T>
struct RtdHead {
  Linear<T> dense;
  Linear<T> out;  // [hidden, 1]
};

/// Everything pretraining allocates for one model variant.
///
/// mlm objective: one encoder ("encoder.*") and its MLM head ("mlm_head.*").
/// electra objective: the discriminator is "encoder.*" with "rtd_head.*";
/// the reduced-width generator is "generator.*" with "generator_head.*".
/// Both encoders read the same "embeddings.*" tables (one copy).
template <typename T>
class PretrainModel {
 public:
  PretrainModel(const ModelConfig& config, Rng& init_rng);

  PretrainModel(const PretrainModel&) = delete;
  PretrainModel& operator=(const PretrainModel&) = delete;
  PretrainModel(PretrainModel&&) = default;

  const ModelConfig& config() const { return config_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

  const EmbeddingTables<T>& embeddings() const { return embeddings_; }
  const EncoderWeights<T>& encoder() const { return encoder_; }
  const EncoderWeights<T>& generator() const { return *generator_; }
  bool has_generator() const { return generator_.has_value(); }
  const MlmHead<T>& mlm_head() const { return mlm_head_; }
  const RtdHead<T>& rtd_head() const { return *rtd_head_; }

 private:
  ModelConfig config_;
  ParameterStore<T> store_;
  EmbeddingTables<T> embeddings_;
  EncoderWeights<T> encoder_;
  std::optional<EncoderWeights<T>> generator_;
  MlmHead<T> mlm_head_;
  std::optional<RtdHead<T>> rtd_head_;
};

template <typename T>
using ElectraPair = PretrainModel<T>;

/// Flat row indices (b * L + t) of positions carrying an MLM label.
std::vector<std::size_t> labeled_positions(std::span<const std::int32_t> mlm_labels);

/// Vocabulary logits [rows, V] for the selected rows of hidden [B, L, h].
template <typename T>
BasicTensor<T> mlm_logits(const BasicTensor<T>& hidden, std::span<const std::size_t> rows, const MlmHead<T>& head,
                          const BasicTensor<T>& token_table, T eps);

/// Cross-entropy over labeled positions only. Throws when none is labeled.
template <typename T>
BasicTensor<T> mlm_loss(const BasicTensor<T>& hidden, std::span<const std::int32_t> mlm_labels,
                        const MlmHead<T>& head, const BasicTensor<T>& token_table, T eps);

/// Draws one token per row of logits [n, V] at temperature 1 by inverse CDF
/// (one uniform draw per row) and writes it to ids[positions[r]]. Returns
/// the corrupted copy; reads logit values only, so no gradient crosses.
template <typename T>
std::vector<std::int32_t> generator_sample(const BasicTensor<T>& logits, std::span<const std::size_t> positions,
                                           std::span<const std::int32_t> ids, Rng& rng);

struct RtdLabels {
  std::vector<std::uint8_t> labels;      // 1 = replaced
  std::vector<std::uint8_t> valid_mask;  // unpadded, non-special
};

/// Label 1 where corrupted != original on a valid position. A sample equal
/// to the original token counts as original.
RtdLabels rtd_labels(std::span<const std::int32_t> original, std::span<const std::int32_t> corrupted,
                     std::span<const std::uint8_t> valid_mask);

/// One logit per position, shape [B * L].
template <typename T>
BasicTensor<T> rtd_logits(const BasicTensor<T>& disc_hidden, const RtdHead<T>& head);

/// Mean binary cross-entropy over every valid position.
template <typename T>
BasicTensor<T> rtd_loss(const BasicTensor<T>& logits, const RtdLabels& labels);

/// Fraction of valid positions where (logit > 0) == label.
template <typename T>
double rtd_accuracy(const BasicTensor<T>& logits, const RtdLabels& labels);

template <typename T>
struct PretrainLoss {
  BasicTensor<T> total;
  BasicTensor<T> mlm;
  BasicTensor<T> rtd;  // undefined for the mlm objective
  double rtd_accuracy = 0.0;
  std::vector<std::int32_t> corrupted_ids;
  RtdLabels labels;
};

/// total = generator MLM loss + lambda_rtd * discriminator RTD loss.
/// `masked` must come from dynamic_mask. `rng` drives generator sampling;
/// `drop` drives dropout in both networks.
template <typename T>
PretrainLoss<T> electra_loss(const PretrainModel<T>& model, const TokenBatch& masked, Rng& rng, double lambda_rtd,
                             const DropoutContext& drop = {});

/// MLM objective alone (total == mlm).
template <typename T>
PretrainLoss<T> mlm_objective_loss(const PretrainModel<T>& model, const TokenBatch& masked,
                                   const DropoutContext& drop = {});

/// Dispatches on the model's objective.
template <typename T>
PretrainLoss<T> pretraining_loss(const PretrainModel<T>& model, const TokenBatch& masked, Rng& rng,
                                 const DropoutContext& drop = {});

/// Undo masking: the original ids of a masked batch.
std::vector<std::int32_t> original_ids(const TokenBatch& masked);

}  // namespace smallbench
