// Runs the eleven acceptance criteria and prints one PASS/FAIL line each.
// Exit status is 0 only when every selected criterion passes.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "smallbench/bench.hpp"
#include "smallbench/checkpoint.hpp"
#include "smallbench/cli.hpp"
#include "smallbench/config.hpp"
#include "smallbench/finetune.hpp"
#include "smallbench/glue.hpp"
#include "smallbench/objectives.hpp"
#include "smallbench/optim.hpp"
#include "smallbench/pretrain_data.hpp"
#include "smallbench/trainer.hpp"
#include "support/attention_fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/model_fixtures.hpp"
#include "support/oracles.hpp"

using namespace smallbench;
namespace fs = std::filesystem;
using sbtest::TensorD;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path corpus_path() { return sbtest::source_dir() / "data" / "toy_corpus.txt"; }
fs::path glue_mini() { return sbtest::source_dir() / "data" / "glue_mini"; }

// ---------------------------------------------------------------- 1

Verdict aggregation_fidelity() {
  struct Row {
    const char* model;
    std::array<double, 8> scores;
    double average;
  };
  const Row rows[] = {
      {"BERT", {45.00, 90.14, 86.27, 84.46, 88.59, 79.58, 87.22, 65.70}, 78.37},
      {"RoBERTa", {44.72, 89.45, 85.30, 84.02, 89.84, 79.51, 87.39, 66.42}, 78.33},
      {"DeBERTa", {47.82, 90.36, 88.49, 84.62, 88.31, 78.11, 86.67, 67.87}, 79.03},
      {"ELECTRA", {56.80, 88.30, 87.40, 86.80, 88.30, 78.90, 87.90, 68.50}, 80.36},
      {"ELECTRA-DeBERTa", {57.50, 90.40, 88.22, 86.74, 90.44, 81.78, 88.10, 69.09}, 81.53},
  };
  Verdict v;
  double worst = 0;
  for (const auto& r : rows) {
    const double avg = average_score(r.scores);
    worst = std::max(worst, std::abs(avg - r.average));
    v.pass = v.pass && std::abs(avg - r.average) <= 0.005 && format_score(avg) == format_score(r.average);
    v.detail += std::string(v.detail.empty() ? "" : ", ") + r.model + " " + format_score(avg);
  }
  v.detail += "; max |diff| " + fmt("%.4f", worst);
  return v;
}

// ---------------------------------------------------------------- 2

std::size_t enumerate_downstream(const ModelConfig& c) {
  Rng rng(0);
  PretrainModel<float> model(c, rng);
  std::size_t n = 0;
  for (const auto& [name, t] : model.parameters().entries())
    if (!name.starts_with("generator")) n += t.numel();
  return n;
}

Verdict parameter_counts() {
  Verdict v;
  std::vector<ModelConfig> configs;
  for (auto objective : {Objective::kMlm, Objective::kElectra})
    for (auto attention : {AttentionKind::kAbsolute, AttentionKind::kDisentangled}) {
      ModelConfig full;
      full.objective = objective;
      full.attention = attention;
      configs.push_back(full);
      auto toy = parse_config("", {}, true).model_config(2000);
      toy.objective = objective;
      toy.attention = attention;
      configs.push_back(toy);
      configs.push_back(sbtest::tiny_config(attention, objective));
    }
  std::size_t mismatches = 0;
  for (const auto& c : configs) mismatches += count_parameters_total(c) != enumerate_downstream(c);
  ModelConfig ed, bert;
  bert.objective = Objective::kMlm;
  bert.attention = AttentionKind::kAbsolute;
  const auto n_ed = count_parameters_total(ed), n_bert = count_parameters_total(bert);
  v.pass = mismatches == 0 && n_ed >= 13'500'000 && n_ed <= 16'500'000 && n_bert >= 12'500'000 && n_bert <= 15'500'000;
  v.detail = "ELECTRA-DeBERTa " + std::to_string(n_ed) + ", BERT " + std::to_string(n_bert) + "; formula vs enumeration " +
             std::to_string(configs.size() - mismatches) + "/" + std::to_string(configs.size()) + " exact";
  return v;
}

// ---------------------------------------------------------------- 3

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.uniform_int(hi - lo + 1); }

Verdict gradient_suite() {
  using sbtest::gradcheck;
  using sbtest::probe;
  using sbtest::random_tensor;
  constexpr int kInstances = 10;
  std::map<std::string, double> op_worst;
  auto op = [&](const std::string& name, const std::function<TensorD()>& loss,
                std::vector<std::pair<std::string, TensorD>> inputs) {
    const auto r = gradcheck(loss, std::move(inputs));
    op_worst[name] = std::max(op_worst[name], r.max_rel_error);
  };
  for (int n = 0; n < kInstances; ++n) {
    Rng rng(5000 + n);
    const Shape s{dim(rng, 1, 3), dim(rng, 1, 4), dim(rng, 2, 5)};
    auto a = random_tensor(s, rng), b = random_tensor(s, rng), suffix = random_tensor({s[2]}, rng);
    op("add", [&] { return probe(add(a, suffix), n); }, {{"a", a}, {"b", suffix}});
    op("sub", [&] { return probe(sub(a, b), n); }, {{"a", a}, {"b", b}});
    op("mul", [&] { return probe(mul(a, b), n); }, {{"a", a}, {"b", b}});
    op("scale", [&] { return probe(scale(a, -1.3), n); }, {{"a", a}});
    op("sum", [&] { return sum(mul(a, b)); }, {{"a", a}, {"b", b}});
    op("mean", [&] { return mean(mul(a, a)); }, {{"a", a}});

    const std::size_t B = dim(rng, 1, 3), M = dim(rng, 1, 4), K = dim(rng, 1, 5), N = dim(rng, 1, 4);
    auto x = random_tensor({B, M, K}, rng), w = random_tensor({K, N}, rng), w3 = random_tensor({B, K, N}, rng);
    auto bias = random_tensor({N}, rng);
    op("matmul", [&] { return probe(matmul(x, w3), n); }, {{"x", x}, {"w", w3}});
    op("linear", [&] { return probe(linear(x, w, bias), n); }, {{"x", x}, {"w", w}, {"b", bias}});
    op("transpose", [&] { return probe(transpose(x), n); }, {{"x", x}});
    op("permute", [&] { return probe(permute(x, {1, 2, 0}), n); }, {{"x", x}});
    op("reshape", [&] { return probe(reshape(x, {B * M * K}), n); }, {{"x", x}});

    const std::size_t R = dim(rng, 2, 4), C = dim(rng, 2, 6);
    auto m = random_tensor({R, C}, rng, 2.0), g = random_tensor({C}, rng), beta = random_tensor({C}, rng);
    auto m3 = random_tensor({1, R, C}, rng, 2.0);
    std::vector<std::uint8_t> mask(C, 1);
    for (std::size_t j = 1; j < C; ++j) mask[j] = rng.uniform() < 0.7;
    op("softmax", [&] { return probe(softmax(m, -1), n); }, {{"x", m}});
    op("masked_softmax", [&] { return probe(masked_softmax(m3, mask), n); }, {{"x", m3}});
    op("layer_norm", [&] { return probe(layer_norm(m, g, beta, 1e-12), n); }, {{"x", m}, {"g", g}, {"b", beta}});
    op("gelu", [&] { return probe(gelu(m), n); }, {{"x", m}});

    std::vector<std::int32_t> targets(R);
    for (auto& t : targets) t = static_cast<std::int32_t>(rng.uniform_int(C));
    op("cross_entropy", [&] { return cross_entropy(m, targets, kIgnoreId); }, {{"logits", m}});
    auto flat = random_tensor({R}, rng, 2.0);
    std::vector<double> labels(R), reals(R);
    for (std::size_t i = 0; i < R; ++i) {
      labels[i] = static_cast<double>(rng.uniform_int(2));
      reals[i] = rng.normal();
    }
    std::vector<std::uint8_t> valid(R, 1);
    op("bce_with_logits", [&] { return bce_with_logits(flat, std::span<const double>(labels), valid); },
       {{"logits", flat}});
    op("mse_loss", [&] { return mse_loss(flat, std::span<const double>(reals)); }, {{"pred", flat}});

    const std::size_t V = dim(rng, 3, 8), e = dim(rng, 1, 4), L = dim(rng, 2, 6), k = dim(rng, 1, 4);
    auto table = random_tensor({V, e}, rng);
    std::vector<std::int32_t> ids(2 * L);
    for (auto& id : ids) id = static_cast<std::int32_t>(rng.uniform_int(V));
    op("embedding", [&] { return probe(embedding(table, ids, {2, L}), n); }, {{"table", table}});
    auto rows = random_tensor({2, L, 3}, rng);
    std::vector<std::size_t> picks{0, 2 * L - 1, 1, 1};
    op("gather_rows", [&] { return probe(gather_rows(rows, picks), n); }, {{"x", rows}});
    auto rel = random_tensor({2, L, 2 * k}, rng);
    op("relative_gather", [&] {
      return add(probe(relative_gather(rel, k, RelativeGather::kContentToPosition), n),
                 probe(relative_gather(rel, k, RelativeGather::kPositionToContent), n + 1));
    }, {{"x", rel}});
    const Rng drop_base(n);
    auto d = random_tensor({3, 5}, rng);
    op("dropout", [&] {
      Rng r = drop_base;
      return probe(dropout(d, 0.3, r), n);
    }, {{"x", d}});
  }

  double model_worst = 0;
  std::size_t model_checks = 0;
  for (auto kind : {AttentionKind::kAbsolute, AttentionKind::kDisentangled}) {
    for (int n = 0; n < kInstances; ++n) {
      const auto config = sbtest::tiny_config(kind, Objective::kMlm);
      Rng init(6000 + n);
      PretrainModel<double> model(config, init);
      sbtest::randomize_parameters(model.parameters(), 6100 + n, 0.3);
      const auto batch = sbtest::random_batch(config, 2, 6, 6200 + n);
      const auto r = gradcheck([&] { return probe(encoder_forward(config, model.encoder(), batch), n); },
                               model.parameters().entries(), 1e-3, 0, n);
      model_worst = std::max(model_worst, r.max_rel_error);
      ++model_checks;

      auto ec = sbtest::tiny_config(kind, Objective::kElectra);
      Rng init2(6300 + n);
      PretrainModel<double> electra(ec, init2);
      sbtest::randomize_parameters(electra.parameters(), 6400 + n, 0.3);
      Rng mask_rng(6500 + n);
      auto masked = dynamic_mask(sbtest::random_batch(ec, 2, 7, 6600 + n), MaskingPolicy{0.4}, ec.vocab_size, mask_rng);
      if (labeled_positions(masked.mlm_labels).empty()) masked.mlm_labels[1] = masked.ids[1];
      const Rng sample_base(6700 + n);
      const auto re = gradcheck([&] {
        Rng s = sample_base;
        return pretraining_loss(electra, masked, s).total;
      }, electra.parameters().entries(), 1e-4, 0, n);
      model_worst = std::max(model_worst, re.max_rel_error);
      ++model_checks;
    }
  }

  double worst_op = 0;
  std::string worst_name;
  for (const auto& [name, e] : op_worst)
    if (e >= worst_op) {
      worst_op = e;
      worst_name = name;
    }
  Verdict v;
  v.pass = worst_op < 1e-6 && model_worst < 1e-4;
  v.detail = std::to_string(op_worst.size()) + " ops x " + std::to_string(kInstances) + " max rel err " +
             fmt("%.2e", worst_op) + " (" + worst_name + "); " + std::to_string(model_checks) +
             " whole-model checks max " + fmt("%.2e", model_worst);
  return v;
}

// ---------------------------------------------------------------- 4

Verdict attention_oracle() {
  using sbtest::attention_oracle;
  using sbtest::make_attention_case;
  double dis = 0, abs = 0, reduced = 0;
  constexpr int kInstances = 25;
  for (int n = 0; n < kInstances; ++n) {
    auto c = make_attention_case<double>(7000 + n);
    const auto got = disentangled_attention(c.hidden, c.relative, c.layer, c.pad_mask, c.heads, c.k);
    dis = std::max(dis, sbtest::max_abs_diff(got, attention_oracle(std::span<const double>(c.hidden_values()), c.B, c.L,
                                                                   c.H, c.layer, c.pad_mask, c.heads,
                                                                   c.relative_values(), c.k)));
    const auto plain = absolute_attention(c.hidden, c.layer, c.pad_mask, c.heads);
    abs = std::max(abs, sbtest::max_abs_diff(plain, attention_oracle(std::span<const double>(c.hidden_values()), c.B,
                                                                     c.L, c.H, c.layer, c.pad_mask, c.heads,
                                                                     std::nullopt, c.k)));
    for (auto* l : {&c.layer.position_query, &c.layer.position_key}) {
      for (auto& x : l->weight.mutable_data()) x = 0.0;
      for (auto& x : l->bias.mutable_data()) x = 0.0;
    }
    const auto zero = BasicTensor<double>::zeros(c.relative.shape());
    const auto p0 = disentangled_attention(c.hidden, zero, c.layer, c.pad_mask, c.heads, c.k);
    const double d = static_cast<double>(c.H / c.heads);
    reduced = std::max(reduced, sbtest::max_abs_diff(p0, attention_oracle(std::span<const double>(c.hidden_values()),
                                                                          c.B, c.L, c.H, c.layer, c.pad_mask, c.heads,
                                                                          std::nullopt, c.k, 1.0 / std::sqrt(3.0 * d))));
  }
  Verdict v;
  v.pass = dis < 1e-5 && abs < 1e-5 && reduced < 1e-5;
  v.detail = std::to_string(kInstances) + " instances (L <= 8): disentangled " + fmt("%.1e", dis) + ", absolute " +
             fmt("%.1e", abs) + ", P=0 reduction " + fmt("%.1e", reduced);
  return v;
}

// ---------------------------------------------------------------- 5

bool is_generator_weight(const std::string& name) {
  return name.starts_with("generator.") || name.starts_with("generator_head.");
}

Verdict objective_isolation() {
  std::size_t analytic_nonzero = 0, fd_changes = 0, fd_probes = 0, shared_ok = 0, shared_total = 0;
  for (auto kind : {AttentionKind::kAbsolute, AttentionKind::kDisentangled}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto config = sbtest::tiny_config(kind, Objective::kElectra);
      Rng init(8000 + seed);
      PretrainModel<double> model(config, init);
      sbtest::randomize_parameters(model.parameters(), 8100 + seed, 0.3);
      Rng mask_rng(8200 + seed);
      auto masked =
          dynamic_mask(sbtest::random_batch(config, 3, 8, 8300 + seed), MaskingPolicy{0.4}, config.vocab_size, mask_rng);
      if (labeled_positions(masked.mlm_labels).empty()) masked.mlm_labels[1] = masked.ids[1];
      auto loss = [&] {
        Rng r(8400 + seed);
        return electra_loss(model, masked, r, config.lambda_rtd);
      };
      auto& store = model.parameters();

      store.zero_grad();
      loss().rtd.backward();
      for (const auto& [name, t] : store.entries())
        if (is_generator_weight(name) && t.has_grad())
          for (double g : t.grad()) analytic_nonzero += g != 0.0;

      const auto base = loss();
      Rng pick(8500 + seed);
      for (auto& [name, t] : store.entries()) {
        if (!is_generator_weight(name)) continue;
        auto data = t.mutable_data();
        const auto i = pick.uniform_int(t.numel());
        const double x0 = data[i];
        data[i] = x0 + 1e-4;
        const auto moved = loss();
        data[i] = x0;
        if (moved.corrupted_ids != base.corrupted_ids) continue;
        ++fd_probes;
        fd_changes += moved.rtd.item() != base.rtd.item();
      }

      // Shared embeddings: finite differences of each term agree with its
      // analytic gradient and are nonzero.
      for (const char* table : {"embeddings.token.weight", "embeddings.relative.weight", "embeddings.position.weight"}) {
        const auto* found = store.find(table);
        if (!found) continue;
        auto& t = const_cast<BasicTensor<double>&>(*found);
        for (int term = 0; term < 2; ++term) {
          ++shared_total;
          store.zero_grad();
          auto out = loss();
          (term == 0 ? out.mlm : out.rtd).backward();
          std::size_t best = 0;
          for (std::size_t i = 0; i < t.numel(); ++i)
            if (std::abs(t.grad()[i]) > std::abs(t.grad()[best])) best = i;
          const double g = t.grad()[best], h = 1e-5;
          auto data = t.mutable_data();
          const double x0 = data[best];
          data[best] = x0 + h;
          const auto up = loss();
          data[best] = x0 - h;
          const auto down = loss();
          data[best] = x0;
          const double fd = term == 0 ? (up.mlm.item() - down.mlm.item()) / (2 * h)
                                      : (up.rtd.item() - down.rtd.item()) / (2 * h);
          shared_ok += g != 0.0 && fd != 0.0 && std::abs(fd - g) <= 1e-4 * std::max(std::abs(g), 1e-5);
        }
      }
    }
  }
  Verdict v;
  v.pass = analytic_nonzero == 0 && fd_changes == 0 && fd_probes > 0 && shared_ok == shared_total;
  v.detail = "generator grads from rtd: " + std::to_string(analytic_nonzero) + " nonzero; FD probes " +
             std::to_string(fd_probes) + " with " + std::to_string(fd_changes) + " rtd changes; shared tables fed by " +
             "both terms " + std::to_string(shared_ok) + "/" + std::to_string(shared_total);
  return v;
}

// ---------------------------------------------------------------- 6

struct ToyRun {
  Vocab vocab;
  PretrainResult result;
  PretrainOptions options;
};

const Vocab& toy_vocab() {
  static const Vocab v = build_vocab(corpus_path(), parse_config("", {}, true).get_size("vocab-size"), 1);
  return v;
}

PretrainOptions toy_options(const std::string& variant) {
  auto o = parse_config("model = " + variant + "\n", {}, true).pretrain_options(toy_vocab().size());
  o.log_every = 0;
  return o;
}

const ToyRun& toy_run(const std::string& variant) {
  static std::map<std::string, ToyRun> cache;
  if (auto it = cache.find(variant); it != cache.end()) return it->second;
  ToyRun r{toy_vocab(), {}, toy_options(variant)};
  r.result = pretrain(r.options, corpus_path(), r.vocab);
  return cache.emplace(variant, std::move(r)).first->second;
}

double window_mean(const std::vector<StepLog>& log, std::size_t first, std::size_t count,
                   double StepLog::*field) {
  double s = 0;
  for (std::size_t i = first; i < first + count; ++i) s += log[i].*field;
  return s / static_cast<double>(count);
}

Verdict toy_convergence() {
  const auto& ed = toy_run("electra-deberta");
  const auto& log = ed.result.log;
  const std::size_t W = 50;
  Verdict v;
  if (log.size() < 2 * W) return {false, "pretraining produced only " + std::to_string(log.size()) + " steps"};
  const double early = window_mean(log, 0, W, &StepLog::loss);
  const double late = window_mean(log, log.size() - W, W, &StepLog::loss);
  const double rtd_acc = window_mean(log, log.size() - W, W, &StepLog::rtd_accuracy);

  const auto& bert = toy_run("bert");
  const double mlm = window_mean(bert.result.log, bert.result.log.size() - W, W, &StepLog::mlm_loss);
  const double bound = 0.5 * std::log(static_cast<double>(bert.vocab.size()));

  v.pass = late <= 0.5 * early && rtd_acc > 0.85 && mlm < bound;
  v.detail = "V=" + std::to_string(ed.vocab.size()) + ", " + std::to_string(log.size()) + " steps: loss " +
             fmt("%.2f", early) + " -> " + fmt("%.2f", late) + " (ratio " + fmt("%.3f", late / early) +
             ", need <= 0.5); RTD accuracy " + fmt("%.3f", rtd_acc) + " (need > 0.85); MLM-only loss " +
             fmt("%.2f", mlm) + " (need < " + fmt("%.2f", bound) + ")";
  return v;
}

// ---------------------------------------------------------------- 7

Verdict finetune_overfit() {
  const auto& task = glue_task("SST");
  auto data = load_task(task, glue_mini(), Split::kTrain);
  data.examples.resize(20);
  data.rows = 20;
  const Checkpoint& ck = toy_run("electra-deberta").result.checkpoint;

  // Fixed in advance: the toy fine-tuning preset with batch 4.
  FinetuneHyper h;
  h.lr = 2e-3;
  h.batch_size = 4;
  h.layer_decay = 0.9;
  h.epochs = 10;
  h.max_len = 64;
  std::string scores;
  std::size_t reached = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    h.seed = seed;
    const double acc = finetune(ck, task, data, data, h).score;
    reached += acc >= 0.95;
    scores += (scores.empty() ? "" : " ") + fmt("%.2f", acc);
  }

  // Layer-wise rate groups of the downstream model against decay^(N - depth).
  Rng rng(0);
  ClassifierModel<float> model(ck.config, task.num_outputs(), rng);
  const std::size_t N = ck.config.num_layers;
  const auto scales = layerwise_scales(model.parameters(), h.layer_decay, N);
  std::size_t exact = 0;
  const auto& entries = model.parameters().entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    const auto& name = entries[p].first;
    double power = static_cast<double>(N);
    if (name.starts_with("task_head.")) power = 0;
    else if (name.starts_with("encoder.layer.")) power = static_cast<double>(N - 1 - std::stoul(name.substr(14)));
    exact += scales[p] == std::pow(h.layer_decay, power);
  }
  const auto rates = layerwise_lrs(1e-4, 0.8, 12);
  bool closed_form = rates.head == 1e-4;
  for (std::size_t i = 0; i < 12; ++i)
    closed_form = closed_form && std::abs(rates.layers[i] / (1e-4 * std::pow(0.8, 11.0 - double(i))) - 1) < 1e-15;
  closed_form = closed_form && std::abs(rates.embeddings / (1e-4 * std::pow(0.8, 12.0)) - 1) < 1e-15;

  Verdict v;
  v.pass = reached == 5 && exact == entries.size() && closed_form;
  v.detail = "20-example task, 10 epochs, seeds 0-4 accuracy [" + scores + "] (need all >= 0.95); LR groups " +
             std::to_string(exact) + "/" + std::to_string(entries.size()) + " exact" +
             (closed_form ? ", 12-layer closed form ok" : ", 12-layer closed form MISMATCH");
  return v;
}

// ---------------------------------------------------------------- 8

Verdict metric_oracles() {
  Rng rng(9000);
  std::size_t bad = 0;
  double worst = 0;
  for (int n = 0; n < 1000; ++n) {
    const std::size_t len = 2 + rng.uniform_int(80);
    std::vector<int> p(len), y(len), p3(len), y3(len);
    std::vector<double> a(len), b(len);
    const double grid = n % 2 ? 5.0 : 1e6;
    for (std::size_t i = 0; i < len; ++i) {
      p[i] = static_cast<int>(rng.uniform_int(2));
      y[i] = n % 10 == 0 ? 1 : static_cast<int>(rng.uniform_int(2));  // some constant golds
      p3[i] = static_cast<int>(rng.uniform_int(3));
      y3[i] = static_cast<int>(rng.uniform_int(3));
      a[i] = std::floor(rng.uniform() * grid);
      b[i] = n % 17 == 0 ? 1.0 : std::floor(rng.uniform() * grid);
    }
    const double m = matthews_corrcoef(p, y), s = spearman(a, b);
    const double dm = std::abs(m - sbtest::mcc_oracle(p, y)), ds = std::abs(s - sbtest::spearman_oracle(a, b));
    worst = std::max({worst, dm, ds});
    bad += dm >= 1e-12 || ds >= 1e-12;
    bad += accuracy(p3, y3) != sbtest::accuracy_oracle(p3, y3);
    bad += m != matthews_corrcoef(y, p) || s != spearman(b, a) || accuracy(p3, y3) != accuracy(y3, p3);
  }
  const std::vector<int> pp{1, 1, 1, 0, 0, 0, 0}, yy{1, 1, 0, 0, 0, 0, 1};
  const double mcc = matthews_corrcoef(pp, yy);
  const std::vector<double> x{1, 2, 2, 3}, z{1, 3, 2, 4};
  const double rho = spearman(x, z), rho_hand = 4.5 / std::sqrt(4.5 * 5.0);
  Verdict v;
  v.pass = bad == 0 && std::abs(mcc - 5.0 / 12.0) < 1e-12 && std::abs(rho - rho_hand) < 1e-12;
  v.detail = "1000 vectors, " + std::to_string(bad) + " mismatches, max |diff| " + fmt("%.1e", worst) + "; MCC case " +
             fmt("%.5f", mcc) + ", tie Spearman " + fmt("%.6f", rho);
  return v;
}

// ---------------------------------------------------------------- 9

Verdict determinism(const fs::path& work) {
  auto o = toy_options("electra-deberta");
  o.schedule.total_steps = 40;
  o.schedule.warmup_steps = 5;
  o.log_every = 1;
  std::ostringstream log_a, log_b;
  const auto a = pretrain(o, corpus_path(), toy_vocab(), nullptr, &log_a);
  const auto b = pretrain(o, corpus_path(), toy_vocab(), nullptr, &log_b);
  const bool logs_equal = log_a.str() == log_b.str() && !log_a.str().empty();

  o.stop_at_step = 20;
  const auto half = pretrain(o, corpus_path(), toy_vocab());
  fs::create_directories(work);
  save_checkpoint(half.checkpoint, work / "half.ckpt");
  const auto restored = load_checkpoint(work / "half.ckpt");
  save_checkpoint(restored, work / "half_again.ckpt");
  const bool bytes_equal = slurp(work / "half.ckpt") == slurp(work / "half_again.ckpt");
  o.stop_at_step.reset();
  const auto resumed = pretrain(o, corpus_path(), toy_vocab(), &restored);
  const bool resume_equal = serialize_checkpoint(resumed.checkpoint) == serialize_checkpoint(a.checkpoint);

  // two benchmark runs with one seed give identical report bytes
  auto cfg = parse_config("model = electra-deberta\nft-epochs = 1\n", {}, true);
  auto bench = cfg.bench_options();
  auto runner = [&](const TaskSpec& spec, const FinetuneHyper& hyper) {
    const auto train = load_task(spec, glue_mini(), Split::kTrain), dev = load_task(spec, glue_mini(), Split::kDev);
    return finetune(a.checkpoint, spec, train, dev, hyper).score;
  };
  MetricReport header;
  header.model = "ELECTRA-DeBERTa";
  header.variant = "electra-deberta";
  const auto r1 = run_benchmark(bench, runner, header).dump();
  bench.jobs = 2;
  const auto r2 = run_benchmark(bench, runner, header).dump();
  const bool reports_equal = r1 == r2;

  Verdict v;
  v.pass = logs_equal && bytes_equal && resume_equal && reports_equal;
  auto word = [](bool ok) { return ok ? "identical" : "DIFFERENT"; };
  v.detail = std::string("loss logs ") + word(logs_equal) + ", save/load/save bytes " + word(bytes_equal) +
             ", resume@20 vs 40 uninterrupted " + word(resume_equal) + ", bench reports " + word(reports_equal);
  return v;
}

// ---------------------------------------------------------------- 10

Verdict masking_statistics() {
  const std::size_t V = 30522;
  Rng data_rng(10000), mask_rng(10001);
  std::vector<EncodedSequence> seqs;
  for (int r = 0; r < 100; ++r) {
    std::vector<std::int32_t> ids;
    for (int i = 0; i < 100; ++i) ids.push_back(kNumSpecialTokens + static_cast<std::int32_t>(data_rng.uniform_int(V - kNumSpecialTokens)));
    seqs.push_back(encode_pieces(ids, 102, false));
  }
  const auto batch = collate(seqs);
  const auto masked = dynamic_mask(batch, MaskingPolicy{}, V, mask_rng);
  std::size_t eligible = 0, selected = 0, as_mask = 0, as_random = 0, kept = 0;
  for (std::size_t i = 0; i < batch.ids.size(); ++i) {
    eligible += batch.eligible_mask()[i];
    if (masked.mlm_labels[i] == kIgnoreId) continue;
    ++selected;
    if (masked.ids[i] == kMaskId) ++as_mask;
    else if (masked.ids[i] == batch.ids[i]) ++kept;
    else ++as_random;
  }

  // exhaustive: specials and padding never selected, over many draws
  std::size_t violations = 0, special_positions = 0;
  Rng pad_rng(10002);
  std::vector<EncodedSequence> ragged;
  for (int r = 0; r < 32; ++r) {
    std::vector<std::int32_t> a, b;
    for (std::size_t i = 0, n = 1 + pad_rng.uniform_int(20); i < n; ++i) a.push_back(kNumSpecialTokens + 1);
    for (std::size_t i = 0, n = pad_rng.uniform_int(10); i < n; ++i) b.push_back(kNumSpecialTokens + 2);
    ragged.push_back(b.empty() ? encode_pieces(a, 40, false) : encode_pieces(a, b, 40, false));
  }
  const auto padded = collate(ragged);
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng r(seed);
    const auto m = dynamic_mask(padded, MaskingPolicy{0.9}, 100, r);
    for (std::size_t i = 0; i < padded.ids.size(); ++i) {
      const auto id = padded.ids[i];
      if (id == kClsId || id == kSepId || id == kPadId) {
        ++special_positions;
        violations += m.mlm_labels[i] != kIgnoreId || m.ids[i] != id;
      }
    }
  }

  const double rate = static_cast<double>(selected) / static_cast<double>(eligible);
  const double s = static_cast<double>(selected);
  Verdict v;
  v.pass = eligible == 10000 && std::abs(rate - 0.15) <= 0.01 && std::abs(as_mask / s - 0.8) <= 0.02 &&
           std::abs(as_random / s - 0.1) <= 0.02 && std::abs(kept / s - 0.1) <= 0.02 && violations == 0;
  v.detail = std::to_string(eligible) + " eligible: rate " + fmt("%.4f", rate) + ", split " + fmt("%.3f", as_mask / s) +
             "/" + fmt("%.3f", as_random / s) + "/" + fmt("%.3f", kept / s) + "; " + std::to_string(special_positions) +
             " special/pad positions checked, " + std::to_string(violations) + " masked";
  return v;
}

// ---------------------------------------------------------------- 11

Verdict end_to_end(const fs::path& work) {
  const fs::path dir = work / "e2e";
  fs::remove_all(dir);
  std::ostringstream out, err;
  auto step = [&](std::vector<std::string> args) {
    const int code = cli_dispatch(args, out, err);
    if (code != 0) throw std::runtime_error(args[0] + " exited " + std::to_string(code) + ": " + err.str());
  };
  const std::vector<std::string> common{"--toy", "--out-dir", dir.string(), "--model", "electra-deberta"};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
    head.insert(head.end(), common.begin(), common.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };
  try {
    step({"build-vocab", "--toy", "--corpus", corpus_path().string(), "--out-dir", dir.string()});
    step(with({"pretrain"}, {"--corpus", corpus_path().string(), "--steps", "300"}));
    step(with({"bench"}, {"--checkpoint", (dir / "electra-deberta.ckpt").string(), "--glue-dir", glue_mini().string(),
                          "--runs-per-task", "1"}));
    step({"report", (dir / "report.json").string(), "--format", "json", "--output", (dir / "leaderboard.json").string()});
    step({"report", (dir / "report.json").string(), "--output", (dir / "leaderboard.md").string()});
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
  const auto json = nlohmann::ordered_json::parse(slurp(dir / "leaderboard.json"));
  const auto rows = parse_leaderboard(slurp(dir / "leaderboard.json"), LeaderboardFormat::kJson);
  std::size_t scores = 0;
  if (rows.size() == 1)
    for (const auto& s : rows[0].scores) scores += s.has_value();
  const bool has_avg = rows.size() == 1 && rows[0].average.has_value();
  const bool md_ok = parse_leaderboard(slurp(dir / "leaderboard.md"), LeaderboardFormat::kMarkdown) == rows;
  Verdict v;
  v.pass = json.is_array() && rows.size() == 1 && scores == 8 && has_avg && md_ok;
  v.detail = "build-vocab, pretrain, bench N=1, report: exit 0; leaderboard rows " + std::to_string(rows.size()) +
             ", task scores " + std::to_string(scores) + "/8, AVG " +
             (has_avg ? format_score(*rows[0].average) : std::string("missing")) +
             (md_ok ? ", markdown agrees" : ", markdown DISAGREES");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = (fs::temp_directory_path() / "smallbench_acceptance").string();
  std::vector<int> only;
  app.add_option("--work-dir", work, "scratch directory");
  app.add_option("--only", only, "criterion numbers to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"aggregation fidelity", aggregation_fidelity},
      {"parameter-count plausibility", parameter_counts},
      {"gradient suite", gradient_suite},
      {"attention oracle", attention_oracle},
      {"objective isolation", objective_isolation},
      {"toy pretraining convergence", toy_convergence},
      {"fine-tune overfit", finetune_overfit},
      {"metric oracles", metric_oracles},
      {"determinism and persistence", [&] { return determinism(work); }},
      {"data-pipeline statistics", masking_statistics},
      {"end-to-end smoke", [&] { return end_to_end(work); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << number << ". " << criteria[i].first << ": " << v.detail << " ["
              << fmt("%.1f", secs) << "s]" << std::endl;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
