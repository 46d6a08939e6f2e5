#include "smallbench/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "smallbench/optim.hpp"

namespace smallbench {
namespace {

constexpr std::uint64_t kHeadStream = 1, kOrderStream = 2, kDropoutStream = 3;
constexpr std::size_t kEvalBatch = 64;

bool is_head(const std::string& name) { return name.starts_with("task_head."); }

std::vector<double> predict(const ClassifierModel<float>& model, const TaskSpec& task,
                            const std::vector<EncodedSequence>& seqs) {
  std::vector<double> out;
  out.reserve(seqs.size());
  for (std::size_t start = 0; start < seqs.size(); start += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, seqs.size() - start);
    const TokenBatch batch = collate(std::span(seqs).subspan(start, n));
    const auto logits = model.forward(batch).detach();
    const auto d = logits.data();
    const std::size_t w = model.outputs();
    for (std::size_t b = 0; b < n; ++b) {
      const float* row = d.data() + b * w;
      if (task.target == TargetKind::kRegression) out.push_back(row[0]);
      else out.push_back(static_cast<double>(std::max_element(row, row + w) - row));
    }
  }
  return out;
}

std::vector<double> labels_of(const TaskData& data) {
  std::vector<double> y;
  y.reserve(data.examples.size());
  for (const auto& ex : data.examples) y.push_back(ex.label);
  return y;
}

}  // namespace

template <typename T>
ClassifierModel<T>::ClassifierModel(const ModelConfig& config, std::size_t outputs, Rng& init_rng) : config_(config) {
  config_.validate();
  if (outputs == 0) throw std::invalid_argument("classifier needs at least one output");
  embeddings_ = init_embeddings<T>(config_, init_rng, store_);
  encoder_ = init_encoder<T>(config_, embeddings_, init_rng, store_, "encoder");
  head_ = init_linear<T>(config_.hidden, outputs, init_rng, store_, "task_head");
}

template <typename T>
BasicTensor<T> ClassifierModel<T>::forward(const TokenBatch& batch, const DropoutContext& drop) const {
  const auto hidden = encoder_forward(config_, encoder_, batch, drop);
  std::vector<std::size_t> cls(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) cls[b] = b * batch.length;
  return head_(drop.apply(gather_rows(hidden, cls)));
}

template class ClassifierModel<float>;
template class ClassifierModel<double>;

std::vector<EncodedSequence> encode_examples(const TaskSpec& task, const TaskData& data, const Vocab& vocab,
                                             std::size_t max_len) {
  std::vector<EncodedSequence> out;
  out.reserve(data.examples.size());
  for (const auto& ex : data.examples)
    out.push_back(task.is_pair() ? encode_pair(ex.text_a, ex.text_b, vocab, max_len, false)
                                 : encode_single(ex.text_a, vocab, max_len, false));
  return out;
}

FinetuneResult finetune(const Checkpoint& pretrained, const TaskSpec& task, const TaskData& train,
                        const TaskData& dev, const FinetuneHyper& h) {
  if (auto kind = pretrained.meta("kind"); kind && *kind != "pretrain")
    throw std::invalid_argument("fine-tuning needs a pretraining checkpoint, got kind '" + *kind + "'");
  if (h.batch_size == 0) throw std::invalid_argument("fine-tuning batch size must be positive");
  if (!(h.lr > 0.0)) throw std::invalid_argument("fine-tuning learning rate must be positive");
  if (train.examples.empty() || dev.examples.empty()) throw std::invalid_argument("fine-tuning needs train and dev data");

  const Vocab vocab = pretrained.vocab();
  const ModelConfig& cfg = pretrained.config;
  const std::size_t max_len = std::min(h.max_len, cfg.max_len);
  Rng root(h.seed);
  Rng init_rng = root.fork(kHeadStream);
  Rng order_rng = root.fork(kOrderStream);
  Rng drop_rng = root.fork(kDropoutStream);

  ClassifierModel<float> model(cfg, task.num_outputs(), init_rng);
  auto& params = model.parameters();
  import_parameters(params, pretrained, "", [](const std::string& n) { return !is_head(n); });

  const auto train_seqs = encode_examples(task, train, vocab, max_len);
  const auto dev_seqs = encode_examples(task, dev, vocab, max_len);
  const auto train_y = labels_of(train);

  FinetuneResult result;
  const std::size_t per_epoch = (train_seqs.size() + h.batch_size - 1) / h.batch_size;
  const std::size_t total = per_epoch * h.epochs;
  if (total > 0) {
    const Schedule schedule = Schedule::with_warmup_fraction(h.lr, total, h.warmup_fraction);
    AdamWHyper ah;
    ah.weight_decay = h.weight_decay;
    auto state = OptimState<float>::for_store(params, ah);
    const auto scales = layerwise_scales(params, h.layer_decay, cfg.num_layers);
    const DropoutContext drop{cfg.dropout, &drop_rng};
    std::vector<std::size_t> order(train_seqs.size());
    std::vector<EncodedSequence> group;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < h.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.uniform_int(i)]);
      for (std::size_t start = 0; start < order.size(); start += h.batch_size) {
        const std::size_t n = std::min(h.batch_size, order.size() - start);
        group.clear();
        std::vector<std::int32_t> cls_targets;
        std::vector<float> reg_targets;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t idx = order[start + i];
          group.push_back(train_seqs[idx]);
          cls_targets.push_back(static_cast<std::int32_t>(std::lround(train_y[idx])));
          reg_targets.push_back(static_cast<float>(train_y[idx]));
        }
        params.zero_grad();
        const auto out = model.forward(collate(group), drop);
        const auto loss = task.target == TargetKind::kRegression
                              ? mse_loss(reshape(out, {n}), std::span<const float>(reg_targets))
                              : cross_entropy(out, cls_targets, kIgnoreId);
        result.step_losses.push_back(loss.item());
        loss.backward();
        clip_grad_norm(params, h.clip_norm);
        ++step;
        adamw_step(params, state, lr_at_step(step, schedule), scales);
      }
    }
  }

  result.predictions = predict(model, task, dev_seqs);
  result.score = task_metric(task, result.predictions, labels_of(dev));
  result.model.config = cfg;
  result.model.step = total;
  result.model.set_meta("kind", "finetuned");
  result.model.set_meta("task", task.name);
  result.model.set_meta("max_len", std::to_string(max_len));
  result.model.set_vocab(vocab);
  export_parameters(params, result.model);
  return result;
}

double evaluate(const Checkpoint& finetuned, const TaskSpec& task, const TaskData& data,
                std::vector<double>* predictions) {
  if (finetuned.meta("kind") != "finetuned")
    throw std::invalid_argument("evaluation needs a fine-tuned checkpoint");
  if (auto t = finetuned.meta("task"); t && *t != task.name)
    throw std::invalid_argument("checkpoint was fine-tuned on " + *t + ", not " + task.name);
  Rng scratch(0);
  ClassifierModel<float> model(finetuned.config, task.num_outputs(), scratch);
  import_parameters(model.parameters(), finetuned);
  const Vocab vocab = finetuned.vocab();
  const auto max_len = finetuned.meta("max_len");
  const auto seqs =
      encode_examples(task, data, vocab, max_len ? std::stoull(*max_len) : finetuned.config.max_len);
  auto preds = predict(model, task, seqs);
  const double score = task_metric(task, preds, labels_of(data));
  if (predictions) *predictions = std::move(preds);
  return score;
}

}  // namespace smallbench
