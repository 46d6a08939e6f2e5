#include "smallbench/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smallbench {

template <typename T>
PretrainModel<T>::PretrainModel(const ModelConfig& config, Rng& init_rng) : config_(config) {
  config_.validate();
  embeddings_ = init_embeddings<T>(config_, init_rng, store_);
  encoder_ = init_encoder<T>(config_, embeddings_, init_rng, store_, "encoder");
  const ModelConfig* mlm_side = &config_;
  ModelConfig gen;
  std::string head_name = "mlm_head";
  if (config_.objective == Objective::kElectra) {
    gen = config_.generator();
    generator_ = init_encoder<T>(gen, embeddings_, init_rng, store_, "generator");
    mlm_side = &gen;
    head_name = "generator_head";
    RtdHead<T> rtd;
    rtd.dense = init_linear<T>(config_.hidden, config_.hidden, init_rng, store_, "rtd_head.dense");
    rtd.out = init_linear<T>(config_.hidden, 1, init_rng, store_, "rtd_head.out");
    rtd_head_ = std::move(rtd);
  }
  mlm_head_.dense = init_linear<T>(mlm_side->hidden, config_.embedding_dim, init_rng, store_, head_name + ".dense");
  mlm_head_.norm = init_layer_norm<T>(config_.embedding_dim, store_, head_name + ".norm");
  mlm_head_.output_bias = store_.add(head_name + ".output_bias", BasicTensor<T>::zeros({config_.vocab_size}));
}

std::vector<std::size_t> labeled_positions(std::span<const std::int32_t> mlm_labels) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mlm_labels.size(); ++i)
    if (mlm_labels[i] != kIgnoreId) rows.push_back(i);
  return rows;
}

std::vector<std::int32_t> original_ids(const TokenBatch& masked) {
  std::vector<std::int32_t> ids = masked.ids;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (masked.mlm_labels[i] != kIgnoreId) ids[i] = masked.mlm_labels[i];
  return ids;
}

template <typename T>
BasicTensor<T> mlm_logits(const BasicTensor<T>& hidden, std::span<const std::size_t> rows, const MlmHead<T>& head,
                          const BasicTensor<T>& token_table, T eps) {
  auto h = gather_rows(hidden, rows);
  h = layer_norm(gelu(head.dense(h)), head.norm.gamma, head.norm.beta, eps);
  return add(matmul(h, transpose(token_table)), head.output_bias);
}

template <typename T>
BasicTensor<T> mlm_loss(const BasicTensor<T>& hidden, std::span<const std::int32_t> mlm_labels,
                        const MlmHead<T>& head, const BasicTensor<T>& token_table, T eps) {
  const auto rows = labeled_positions(mlm_labels);
  if (rows.empty()) throw std::invalid_argument("mlm_loss: batch has no labeled positions");
  std::vector<std::int32_t> targets(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) targets[i] = mlm_labels[rows[i]];
  return cross_entropy(mlm_logits(hidden, rows, head, token_table, eps), targets, kIgnoreId);
}

template <typename T>
std::vector<std::int32_t> generator_sample(const BasicTensor<T>& logits, std::span<const std::size_t> positions,
                                           std::span<const std::int32_t> ids, Rng& rng) {
  if (logits.rank() != 2 || logits.dim(0) != positions.size())
    throw DimensionError("generator_sample: logits " + shape_str(logits.shape()) + " for " +
                         std::to_string(positions.size()) + " positions");
  const std::size_t V = logits.dim(1);
  std::vector<std::int32_t> out(ids.begin(), ids.end());
  std::vector<double> p(V);
  auto data = logits.data();
  for (std::size_t r = 0; r < positions.size(); ++r) {
    if (positions[r] >= out.size()) throw std::out_of_range("generator_sample: position outside the batch");
    const T* row = data.data() + r * V;
    const double mx = static_cast<double>(*std::max_element(row, row + V));
    double z = 0.0;
    for (std::size_t j = 0; j < V; ++j) z += (p[j] = std::exp(static_cast<double>(row[j]) - mx));
    const double u = rng.uniform() * z;
    double acc = 0.0;
    std::size_t pick = V - 1;
    for (std::size_t j = 0; j < V; ++j) {
      acc += p[j];
      if (u < acc) {
        pick = j;
        break;
      }
    }
    out[positions[r]] = static_cast<std::int32_t>(pick);
  }
  return out;
}

RtdLabels rtd_labels(std::span<const std::int32_t> original, std::span<const std::int32_t> corrupted,
                     std::span<const std::uint8_t> valid_mask) {
  if (original.size() != corrupted.size() || original.size() != valid_mask.size())
    throw DimensionError("rtd_labels: original (" + std::to_string(original.size()) + "), corrupted (" +
                         std::to_string(corrupted.size()) + ") and valid mask (" +
                         std::to_string(valid_mask.size()) + ") differ in size");
  RtdLabels out;
  out.valid_mask.assign(valid_mask.begin(), valid_mask.end());
  out.labels.resize(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) out.labels[i] = valid_mask[i] && original[i] != corrupted[i];
  return out;
}

template <typename T>
BasicTensor<T> rtd_logits(const BasicTensor<T>& disc_hidden, const RtdHead<T>& head) {
  auto logits = head.out(gelu(head.dense(disc_hidden)));
  return reshape(logits, {logits.numel()});
}

template <typename T>
BasicTensor<T> rtd_loss(const BasicTensor<T>& logits, const RtdLabels& labels) {
  std::vector<T> y(labels.labels.begin(), labels.labels.end());
  return bce_with_logits(logits, std::span<const T>(y), labels.valid_mask);
}

template <typename T>
double rtd_accuracy(const BasicTensor<T>& logits, const RtdLabels& labels) {
  auto d = logits.data();
  std::size_t hit = 0, n = 0;
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    if (!labels.valid_mask[i]) continue;
    ++n;
    hit += (d[i] > T(0)) == (labels.labels[i] != 0);
  }
  return n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0;
}

template <typename T>
PretrainLoss<T> electra_loss(const PretrainModel<T>& model, const TokenBatch& masked, Rng& rng, double lambda_rtd,
                             const DropoutContext& drop) {
  if (!model.has_generator()) throw std::invalid_argument("electra_loss needs a model built for the electra objective");
  const auto& cfg = model.config();
  const T eps = static_cast<T>(cfg.layer_norm_eps);
  const ModelConfig gen_cfg = cfg.generator();

  const auto rows = labeled_positions(masked.mlm_labels);
  if (rows.empty()) throw std::invalid_argument("electra_loss: batch has no masked positions");
  std::vector<std::int32_t> targets(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) targets[i] = masked.mlm_labels[rows[i]];

  auto gen_hidden = encoder_forward(gen_cfg, model.generator(), masked, drop);
  auto logits = mlm_logits(gen_hidden, rows, model.mlm_head(), model.embeddings().token, eps);

  PretrainLoss<T> out;
  out.mlm = cross_entropy(logits, targets, kIgnoreId);

  const auto original = original_ids(masked);
  out.corrupted_ids = generator_sample(logits, rows, original, rng);
  out.labels = rtd_labels(original, out.corrupted_ids, masked.eligible_mask());

  TokenBatch corrupted = masked;
  corrupted.ids = out.corrupted_ids;
  auto disc_hidden = encoder_forward(cfg, model.encoder(), corrupted, drop);
  auto disc_logits = rtd_logits(disc_hidden, model.rtd_head());
  out.rtd_accuracy = rtd_accuracy(disc_logits, out.labels);
  out.rtd = rtd_loss(disc_logits, out.labels);
  out.total = add(out.mlm, scale(out.rtd, static_cast<T>(lambda_rtd)));
  return out;
}

template <typename T>
PretrainLoss<T> mlm_objective_loss(const PretrainModel<T>& model, const TokenBatch& masked,
                                   const DropoutContext& drop) {
  const auto& cfg = model.config();
  auto hidden = encoder_forward(cfg, model.encoder(), masked, drop);
  PretrainLoss<T> out;
  out.mlm = mlm_loss(hidden, masked.mlm_labels, model.mlm_head(), model.embeddings().token,
                     static_cast<T>(cfg.layer_norm_eps));
  out.total = out.mlm;
  return out;
}

template <typename T>
PretrainLoss<T> pretraining_loss(const PretrainModel<T>& model, const TokenBatch& masked, Rng& rng,
                                 const DropoutContext& drop) {
  if (model.config().objective == Objective::kElectra)
    return electra_loss(model, masked, rng, model.config().lambda_rtd, drop);
  return mlm_objective_loss(model, masked, drop);
}

#define SMALLBENCH_INSTANTIATE_OBJECTIVES(T)                                                                  \
  template class PretrainModel<T>;                                                                            \
  template BasicTensor<T> mlm_logits(const BasicTensor<T>&, std::span<const std::size_t>, const MlmHead<T>&,  \
                                     const BasicTensor<T>&, T);                                               \
  template BasicTensor<T> mlm_loss(const BasicTensor<T>&, std::span<const std::int32_t>, const MlmHead<T>&,   \
                                   const BasicTensor<T>&, T);                                                 \
  template std::vector<std::int32_t> generator_sample(const BasicTensor<T>&, std::span<const std::size_t>,    \
                                                      std::span<const std::int32_t>, Rng&);                   \
  template BasicTensor<T> rtd_logits(const BasicTensor<T>&, const RtdHead<T>&);                               \
  template BasicTensor<T> rtd_loss(const BasicTensor<T>&, const RtdLabels&);                                  \
  template double rtd_accuracy(const BasicTensor<T>&, const RtdLabels&);                                      \
  template PretrainLoss<T> electra_loss(const PretrainModel<T>&, const TokenBatch&, Rng&, double,             \
                                        const DropoutContext&);                                               \
  template PretrainLoss<T> mlm_objective_loss(const PretrainModel<T>&, const TokenBatch&, const DropoutContext&); \
  template PretrainLoss<T> pretraining_loss(const PretrainModel<T>&, const TokenBatch&, Rng&, const DropoutContext&);

SMALLBENCH_INSTANTIATE_OBJECTIVES(float)
SMALLBENCH_INSTANTIATE_OBJECTIVES(double)

}  // namespace smallbench
