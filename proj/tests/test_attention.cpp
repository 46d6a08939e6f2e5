#include <doctest.h>

#include <cmath>

#include "smallbench/encoder.hpp"
#include "support/attention_fixtures.hpp"
#include "support/oracles.hpp"

using namespace smallbench;
using sbtest::attention_oracle;
using sbtest::make_attention_case;
using sbtest::max_abs_diff;

TEST_SUITE("attention") {
  TEST_CASE("disentangled attention matches the per-pair oracle") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      auto c = make_attention_case<double>(seed);
      auto got = disentangled_attention(c.hidden, c.relative, c.layer, c.pad_mask, c.heads, c.k);
      auto want = attention_oracle(std::span<const double>(c.hidden_values()), c.B, c.L, c.H, c.layer, c.pad_mask,
                                   c.heads, c.relative_values(), c.k);
      INFO("seed " << seed << " B=" << c.B << " L=" << c.L << " H=" << c.H << " k=" << c.k);
      CHECK(max_abs_diff(got, want) < 1e-5);
    }
  }

  TEST_CASE("absolute attention matches the per-pair oracle") {
    for (std::uint64_t seed = 100; seed < 130; ++seed) {
      auto c = make_attention_case<double>(seed);
      auto got = absolute_attention(c.hidden, c.layer, c.pad_mask, c.heads);
      auto want = attention_oracle(std::span<const double>(c.hidden_values()), c.B, c.L, c.H, c.layer, c.pad_mask,
                                   c.heads, std::nullopt, c.k);
      INFO("seed " << seed);
      CHECK(max_abs_diff(got, want) < 1e-5);
    }
  }

  TEST_CASE("single precision agrees with the oracle too") {
    for (std::uint64_t seed = 200; seed < 220; ++seed) {
      auto c = make_attention_case<float>(seed);
      auto got = disentangled_attention(c.hidden, c.relative, c.layer, c.pad_mask, c.heads, c.k);
      std::vector<double> hidden(c.hidden.data().begin(), c.hidden.data().end());
      auto want = attention_oracle(std::span<const double>(hidden), c.B, c.L, c.H, c.layer, c.pad_mask, c.heads,
                                   c.relative_values(), c.k);
      CHECK(max_abs_diff(got, want) < 1e-5);
    }
  }

  TEST_CASE("zero positions reduce to content attention at temperature sqrt(3)") {
    for (std::uint64_t seed = 300; seed < 325; ++seed) {
      auto c = make_attention_case<double>(seed);
      auto zero_relative = BasicTensor<double>::zeros(c.relative.shape());
      for (auto* l : {&c.layer.position_query, &c.layer.position_key}) {
        for (auto& x : l->weight.mutable_data()) x = 0.0;
        for (auto& x : l->bias.mutable_data()) x = 0.0;
      }
      auto got = disentangled_attention(c.hidden, zero_relative, c.layer, c.pad_mask, c.heads, c.k);
      const double d = static_cast<double>(c.H / c.heads);
      auto want = attention_oracle(std::span<const double>(c.hidden_values()), c.B, c.L, c.H, c.layer, c.pad_mask,
                                   c.heads, std::nullopt, c.k, 1.0 / std::sqrt(3.0 * d));
      CHECK(max_abs_diff(got, want) < 1e-5);
    }
  }

  TEST_CASE("a single key passes its value straight through") {
    auto c = make_attention_case<double>(7);
    c.B = 1;
    c.L = 1;
    c.hidden = BasicTensor<double>({1, 1, c.H}, std::vector<double>(c.hidden.data().begin(),
                                                                    c.hidden.data().begin() + c.H));
    std::vector<std::uint8_t> mask{1};
    auto value = c.layer.output(c.layer.value(c.hidden));
    const auto dis = disentangled_attention(c.hidden, c.relative, c.layer, mask, c.heads, c.k);
    const auto abs = absolute_attention(c.hidden, c.layer, mask, c.heads);
    for (std::size_t i = 0; i < c.H; ++i) {
      CHECK(dis.data()[i] == doctest::Approx(value.data()[i]).epsilon(1e-12));
      CHECK(abs.data()[i] == doctest::Approx(value.data()[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("identical keys give uniform weights over unpadded columns") {
    auto c = make_attention_case<double>(11);
    const std::size_t L = 4, H = c.H;
    std::vector<double> rows(L * H);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t i = 0; i < H; ++i) rows[t * H + i] = std::sin(1.0 + static_cast<double>(i));
    BasicTensor<double> hidden({1, L, H}, rows);
    std::vector<std::uint8_t> mask{1, 1, 1, 0};
    // equal rows mean equal values too, so the output equals one value row
    auto out = absolute_attention(hidden, c.layer, mask, c.heads);
    auto single = c.layer.output(c.layer.value(BasicTensor<double>({1, 1, H}, std::vector<double>(rows.begin(), rows.begin() + H))));
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t i = 0; i < H; ++i) CHECK(out.data()[t * H + i] == doctest::Approx(single.data()[i]));
  }

  TEST_CASE("pad tokens never influence unpadded outputs") {
    for (auto kind : {AttentionKind::kAbsolute, AttentionKind::kDisentangled}) {
      auto config = sbtest::tiny_config(kind, Objective::kMlm);
      Rng init(5);
      ParameterStore<double> store;
      auto tables = init_embeddings<double>(config, init, store);
      auto enc = init_encoder<double>(config, tables, init, store, "encoder");
      sbtest::randomize_parameters(store, 6, 0.3);
      auto batch = sbtest::random_batch(config, 3, 7, 8);
      auto before = encoder_forward(config, enc, batch);
      for (std::size_t i = 0; i < batch.ids.size(); ++i)
        if (!batch.pad_mask[i]) batch.ids[i] = 17;
      auto after = encoder_forward(config, enc, batch);
      const std::size_t H = config.hidden;
      for (std::size_t pos = 0; pos < batch.ids.size(); ++pos) {
        if (!batch.pad_mask[pos]) continue;
        for (std::size_t i = 0; i < H; ++i) CHECK(before.data()[pos * H + i] == after.data()[pos * H + i]);
      }
    }
  }

  TEST_CASE("encoder purity and shape") {
    auto config = sbtest::tiny_config(AttentionKind::kDisentangled, Objective::kMlm);
    Rng init(1);
    ParameterStore<float> store;
    auto tables = init_embeddings<float>(config, init, store);
    auto enc = init_encoder<float>(config, tables, init, store, "encoder");
    auto one = sbtest::random_batch(config, 1, 6, 3);
    TokenBatch twice = one;
    twice.batch = 2;
    for (auto* v : {&twice.ids, &twice.segment_ids, &twice.mlm_labels}) v->insert(v->end(), v->begin(), v->end());
    twice.pad_mask.insert(twice.pad_mask.end(), one.pad_mask.begin(), one.pad_mask.end());
    auto out = encoder_forward(config, enc, twice);
    CHECK(out.shape() == Shape{2, 6, config.hidden});
    const std::size_t row = 6 * config.hidden;
    for (std::size_t i = 0; i < row; ++i) CHECK(out.data()[i] == out.data()[row + i]);
  }

  TEST_CASE("shape errors") {
    auto c = make_attention_case<double>(3);
    auto bad_relative = BasicTensor<double>::zeros({2 * c.k + 1, c.H});
    CHECK_THROWS_AS(disentangled_attention(c.hidden, bad_relative, c.layer, c.pad_mask, c.heads, c.k), DimensionError);
    std::vector<std::uint8_t> short_mask(c.pad_mask.size() + 1, 1);
    CHECK_THROWS_AS(absolute_attention(c.hidden, c.layer, short_mask, c.heads), DimensionError);
  }
}
