#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "smallbench/ops.hpp"
#include "smallbench/pretrain_data.hpp"
#include "smallbench/rng.hpp"
#include "smallbench/tensor.hpp"

namespace smallbench {

enum class AttentionKind { kAbsolute, kDisentangled };
enum class Objective { kMlm, kElectra };

std::string_view to_string(AttentionKind kind);
std::string_view to_string(Objective objective);
AttentionKind parse_attention_kind(std::string_view text);
Objective parse_objective(std::string_view text);

/// Architecture and objective hyperparameters. Defaults are the small
/// (12 x 256, 4 heads, 1024 FFN, 128-wide factorized embeddings) setup.
struct ModelConfig {
  std::size_t num_layers = 12;
  std::size_t hidden = 256;
  std::size_t heads = 4;
  std::size_t ffn_inner = 1024;
  std::size_t embedding_dim = 128;
  std::size_t vocab_size = 30522;
  std::size_t max_len = 128;
  std::size_t max_relative_distance = 128;  // k: relative table has 2k rows
  AttentionKind attention = AttentionKind::kDisentangled;
  double dropout = 0.1;
  double generator_fraction = 0.25;
  double lambda_rtd = 50.0;
  Objective objective = Objective::kElectra;
  double layer_norm_eps = 1e-12;

  void validate() const;
  std::size_t head_dim() const { return hidden / heads; }

  /// Same depth; hidden, ffn_inner and heads scaled by generator_fraction
  /// (rounded, heads at least 1).
  ModelConfig generator() const;

  /// "key=value" lines, one per field, fixed order.
  std::string to_record() const;
  /// Parses to_record() output. Unknown keys are an error; missing keys
  /// keep their defaults.
  static ModelConfig from_record(std::string_view record);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct Linear {
  BasicTensor<T> weight;  // [in, out]
  BasicTensor<T> bias;    // [out]

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return linear(x, weight, bias); }
};

template <typename T>
struct LayerNormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

template <typename T>
struct LayerWeights {
  Linear<T> query, key, value, output;
  LayerNormParams<T> attention_norm;
  Linear<T> ffn_in, ffn_out;
  LayerNormParams<T> ffn_norm;
  // Disentangled attention only.
  Linear<T> position_query, position_key;
};

/// Tables shared by every encoder built over them.
template <typename T>
struct EmbeddingTables {
  BasicTensor<T> token;     // [V, e]
  BasicTensor<T> segment;   // [2, e]
  BasicTensor<T> position;  // [max_len, e], absolute attention only
  BasicTensor<T> relative;  // [2k, e], disentangled attention only
};

template <typename T>
struct EncoderWeights {
  EmbeddingTables<T> embeddings;
  Linear<T> projection;  // [e, hidden]
  LayerNormParams<T> embedding_norm;
  std::vector<LayerWeights<T>> layers;
};

/// Ordered, uniquely named set of trainable tensors. Handles alias the
/// model's weights, so registering a table once and reading it from two
/// encoders shares its storage and gradient.
template <typename T>
class ParameterStore {
 public:
  using Entry = std::pair<std::string, BasicTensor<T>>;

  const BasicTensor<T>& add(std::string name, BasicTensor<T> tensor);
  const BasicTensor<T>* find(std::string_view name) const;
  const BasicTensor<T>& get(std::string_view name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

/// Where dropout draws come from. A null rng (or rate 0) disables dropout.
struct DropoutContext {
  double rate = 0.0;
  Rng* rng = nullptr;

  template <typename T>
  BasicTensor<T> apply(const BasicTensor<T>& x) const {
    return rng && rate > 0.0 ? dropout(x, rate, *rng) : x;
  }
};

/// Truncated normal (std 0.02) weight, zero bias.
template <typename T>
Linear<T> init_linear(std::size_t in, std::size_t out, Rng& rng, ParameterStore<T>& store, const std::string& name);
template <typename T>
LayerNormParams<T> init_layer_norm(std::size_t width, ParameterStore<T>& store, const std::string& name);

/// Registers "embeddings.*" tables for the config's attention kind.
template <typename T>
EmbeddingTables<T> init_embeddings(const ModelConfig& config, Rng& rng, ParameterStore<T>& store);

/// Registers "<prefix>.projection", "<prefix>.embedding_norm" and
/// "<prefix>.layer.<i>.*" over the given shared tables.
template <typename T>
EncoderWeights<T> init_encoder(const ModelConfig& config, const EmbeddingTables<T>& embeddings, Rng& rng,
                               ParameterStore<T>& store, const std::string& prefix);

/// Multi-head scaled dot-product attention, scale 1/sqrt(d_head).
/// hidden [B, L, H]; pad_mask [B * L]; returns the output projection.
template <typename T>
BasicTensor<T> absolute_attention(const BasicTensor<T>& hidden, const LayerWeights<T>& layer,
                                  std::span<const std::uint8_t> pad_mask, std::size_t heads,
                                  const DropoutContext& drop = {});

/// Disentangled attention over content states and relative positions.
/// Per head the raw score is
///   Qc[i].Kc[j] + Qc[i].Kr[bucket(i, j)] + Kc[j].Qr[bucket(j, i)]
/// scaled by 1/sqrt(3 d_head), where Kr / Qr project `relative`
/// [2k, H] through the layer's position_key / position_query.
template <typename T>
BasicTensor<T> disentangled_attention(const BasicTensor<T>& hidden, const BasicTensor<T>& relative,
                                      const LayerWeights<T>& layer, std::span<const std::uint8_t> pad_mask,
                                      std::size_t heads, std::size_t k, const DropoutContext& drop = {});

/// Embeddings -> projection -> layer norm -> layers. Returns [B, L, hidden].
/// Throws std::out_of_range for ids outside the vocabulary.
template <typename T>
BasicTensor<T> encoder_forward(const ModelConfig& config, const EncoderWeights<T>& weights,
                               const TokenBatch& batch, const DropoutContext& drop = {});

/// Analytic trainable-scalar counts.
struct ParameterCount {
  std::size_t embeddings = 0;       // shared tables
  std::size_t encoder_stem = 0;     // projection + embedding norm
  std::size_t per_layer = 0;
  std::size_t layers = 0;           // per_layer * num_layers
  std::size_t head = 0;             // objective head of the downstream model
  std::size_t total() const { return embeddings + encoder_stem + layers + head; }
};

/// Count of the downstream model: shared embeddings, the (discriminator)
/// encoder and its pretraining head (RTD head for electra, MLM head for
/// mlm). The ELECTRA generator is excluded.
ParameterCount count_parameters(const ModelConfig& config);
std::size_t count_parameters_total(const ModelConfig& config);
/// Generator encoder plus its MLM head (0 for the mlm objective).
std::size_t count_generator_parameters(const ModelConfig& config);

}  // namespace smallbench
