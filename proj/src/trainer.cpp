#include "smallbench/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace smallbench {
namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void check_resume_compatible(const Checkpoint& ck, const PretrainOptions& o) {
  if (!(ck.config == o.model)) throw TrainingError("resume checkpoint was trained with a different model config");
  auto expect = [&](const char* key, const std::string& value) {
    auto stored = ck.meta(key);
    if (!stored || *stored != value)
      throw TrainingError(std::string("resume checkpoint has ") + key + "=" + stored.value_or("<missing>") +
                          ", run uses " + value);
  };
  expect("kind", "pretrain");
  expect("seed", std::to_string(o.seed));
  expect("batch_size", std::to_string(o.batch_size));
  expect("input_mode", std::string(to_string(o.input_mode)));
  expect("schedule.total_steps", std::to_string(o.schedule.total_steps));
}

}  // namespace

std::string step_log_header() { return "step\tlr\tloss\tmlm_loss\trtd_loss\trtd_accuracy\tgrad_norm"; }

std::string format_step_log(const StepLog& e) {
  return std::to_string(e.step) + "\t" + fmt("%.6e", e.lr) + "\t" + fmt("%.6f", e.loss) + "\t" +
         fmt("%.6f", e.mlm_loss) + "\t" + fmt("%.6f", e.rtd_loss) + "\t" + fmt("%.4f", e.rtd_accuracy) + "\t" +
         fmt("%.4f", e.grad_norm);
}

PretrainModel<float> restore_pretrain_model(const Checkpoint& checkpoint) {
  Rng scratch(0);
  PretrainModel<float> model(checkpoint.config, scratch);
  import_parameters(model.parameters(), checkpoint);
  return model;
}

PretrainResult pretrain(const PretrainOptions& o, const std::filesystem::path& corpus, const Vocab& vocab,
                        const Checkpoint* resume, std::ostream* log) {
  o.model.validate();
  o.masking.validate();
  o.schedule.validate();
  if (o.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (o.model.vocab_size != vocab.size())
    throw std::invalid_argument("model vocab_size " + std::to_string(o.model.vocab_size) +
                                " differs from the vocabulary (" + std::to_string(vocab.size()) + " tokens)");
  const std::size_t stop = o.stop_at_step.value_or(o.schedule.total_steps);
  if (stop > o.schedule.total_steps) throw std::invalid_argument("stop step lies beyond the schedule");

  Rng root(o.seed);
  Rng init_rng = root.fork(kInitStream);
  Rng mask_rng = root.fork(kMaskStream);
  Rng model_rng = root.fork(kModelStream);
  PretrainModel<float> model(o.model, init_rng);
  auto& params = model.parameters();
  auto state = OptimState<float>::for_store(params, o.optimizer);

  CorpusReader reader(corpus, vocab, o.input_mode, o.model.max_len);
  BatchStream stream([&reader] { return reader.next(); }, o.batch_size, root.fork(kDataStream), false,
                     o.shuffle_buffer);
  PretrainResult result;
  result.epochs_started = 1;
  auto next_batch = [&]() -> TokenBatch {
    if (auto b = stream.next()) return std::move(*b);
    reader.rewind();
    ++result.epochs_started;
    if (auto b = stream.next()) return std::move(*b);
    throw TrainingError("corpus " + corpus.string() + " yields no sequences");
  };

  std::size_t step = 0;
  if (resume) {
    check_resume_compatible(*resume, o);
    import_parameters(params, *resume);
    for (std::size_t p = 0; p < params.entries().size(); ++p) {
      const auto& name = params.entries()[p].first;
      const NamedArray* m = resume->find("optim.m." + name);
      const NamedArray* v = resume->find("optim.v." + name);
      if (!m || !v || m->values.size() != state.m[p].size() || v->values.size() != state.v[p].size())
        throw TrainingError("resume checkpoint lacks optimizer moments for '" + name + "'");
      state.m[p] = m->values;
      state.v[p] = v->values;
    }
    auto meta = [&](const char* key) {
      auto v = resume->meta(key);
      if (!v) throw TrainingError(std::string("resume checkpoint lacks '") + key + "'");
      return *v;
    };
    state.step = std::stoull(meta("optim.step"));
    mask_rng = Rng::parse(meta("rng.mask"));
    model_rng = Rng::parse(meta("rng.model"));
    step = resume->step;
    if (step > stop) throw TrainingError("resume checkpoint is already past the requested stop step");
    for (std::size_t i = 0; i < step; ++i) next_batch();
  }

  auto snapshot = [&]() {
    Checkpoint ck;
    ck.config = o.model;
    ck.step = step;
    ck.set_meta("kind", "pretrain");
    ck.set_meta("seed", std::to_string(o.seed));
    ck.set_meta("batch_size", std::to_string(o.batch_size));
    ck.set_meta("input_mode", std::string(to_string(o.input_mode)));
    ck.set_meta("schedule.peak_lr", fmt("%.17g", o.schedule.peak_lr));
    ck.set_meta("schedule.warmup_steps", std::to_string(o.schedule.warmup_steps));
    ck.set_meta("schedule.total_steps", std::to_string(o.schedule.total_steps));
    ck.set_meta("optim.step", std::to_string(state.step));
    ck.set_meta("rng.mask", mask_rng.to_string());
    ck.set_meta("rng.model", model_rng.to_string());
    ck.set_vocab(vocab);
    export_parameters(params, ck);
    for (std::size_t p = 0; p < params.entries().size(); ++p) {
      const auto& [name, t] = params.entries()[p];
      ck.tensors.push_back({"optim.m." + name, t.shape(), state.m[p]});
      ck.tensors.push_back({"optim.v." + name, t.shape(), state.v[p]});
    }
    return ck;
  };
  auto last_saved = [&]() -> std::string {
    return o.checkpoint_path.empty() || !std::filesystem::exists(o.checkpoint_path)
               ? "no checkpoint written yet"
               : "last good checkpoint kept at " + o.checkpoint_path.string();
  };

  if (log && o.log_every) *log << step_log_header() << '\n';
  const DropoutContext drop{o.model.dropout, &model_rng};
  while (step < stop) {
    const TokenBatch batch = next_batch();
    TokenBatch masked = dynamic_mask(batch, o.masking, vocab.size(), mask_rng);
    while (labeled_positions(masked.mlm_labels).empty()) masked = dynamic_mask(batch, o.masking, vocab.size(), mask_rng);

    params.zero_grad();
    auto loss = pretraining_loss(model, masked, model_rng, drop);
    StepLog entry;
    entry.step = step + 1;
    entry.loss = loss.total.item();
    entry.mlm_loss = loss.mlm.item();
    entry.rtd_loss = loss.rtd.defined() ? loss.rtd.item() : 0.0;
    entry.rtd_accuracy = loss.rtd_accuracy;
    if (!std::isfinite(entry.loss))
      throw TrainingError("non-finite loss at step " + std::to_string(entry.step) + "; " + last_saved());
    loss.total.backward();
    entry.grad_norm = clip_grad_norm(params, o.clip_norm);
    entry.lr = lr_at_step(entry.step, o.schedule);
    try {
      adamw_step(params, state, entry.lr);
    } catch (const NonFiniteGradient& e) {
      throw TrainingError(std::string(e.what()) + " at step " + std::to_string(entry.step) + "; " + last_saved());
    }
    step = entry.step;
    result.log.push_back(entry);
    if (log && o.log_every && step % o.log_every == 0) *log << format_step_log(entry) << '\n' << std::flush;
    if (!o.checkpoint_path.empty() && o.checkpoint_every && step % o.checkpoint_every == 0 && step < stop)
      save_checkpoint(snapshot(), o.checkpoint_path);
  }

  result.checkpoint = snapshot();
  if (!o.checkpoint_path.empty()) save_checkpoint(result.checkpoint, o.checkpoint_path);
  return result;
}

}  // namespace smallbench
