#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>

#include "smallbench/pretrain_data.hpp"
#include "support/oracles.hpp"

using namespace smallbench;

namespace {

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& text, const std::string& name = "smallbench_corpus_test.txt")
      : path(std::filesystem::temp_directory_path() / name) {
    std::ofstream(path) << text;
  }
  ~TempFile() { std::filesystem::remove(path); }
};

Vocab word_vocab(int words) {
  auto tokens = Vocab::specials_only().tokens();
  for (int i = 0; i < words; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocab(tokens);
}

// rows x (content + 2 specials), with every odd row padded by `pad`.
TokenBatch synthetic_batch(std::size_t rows, std::size_t content, std::size_t pad, std::size_t V, Rng& rng) {
  std::vector<EncodedSequence> seqs;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::int32_t> ids;
    const std::size_t n = r % 2 ? content - pad : content;
    for (std::size_t i = 0; i < n; ++i)
      ids.push_back(kNumSpecialTokens + static_cast<std::int32_t>(rng.uniform_int(V - kNumSpecialTokens)));
    seqs.push_back(encode_pieces(ids, n + 2, false));
  }
  return collate(seqs);
}

std::int32_t marker(const TokenBatch& b, std::size_t row) { return b.ids[row * b.length + 1]; }

}  // namespace

TEST_SUITE("pretrain_data") {
  TEST_CASE("mask_prob zero leaves the batch untouched") {
    Rng rng(1);
    auto batch = synthetic_batch(4, 10, 3, 100, rng);
    auto masked = dynamic_mask(batch, MaskingPolicy{0.0}, 100, rng);
    CHECK(masked.ids == batch.ids);
    for (auto l : masked.mlm_labels) CHECK(l == kIgnoreId);
  }

  TEST_CASE("masking statistics over 10,000 eligible positions") {
    Rng data_rng(2), mask_rng(3);
    const std::size_t V = 30522;
    auto batch = synthetic_batch(100, 100, 0, V, data_rng);
    auto eligible = batch.eligible_mask();
    REQUIRE(std::count(eligible.begin(), eligible.end(), 1) == 10000);
    auto masked = dynamic_mask(batch, MaskingPolicy{}, V, mask_rng);
    std::size_t selected = 0, as_mask = 0, as_random = 0, kept = 0;
    for (std::size_t i = 0; i < batch.ids.size(); ++i) {
      if (masked.mlm_labels[i] == kIgnoreId) {
        CHECK(masked.ids[i] == batch.ids[i]);
        continue;
      }
      ++selected;
      CHECK(masked.mlm_labels[i] == batch.ids[i]);
      if (masked.ids[i] == kMaskId) ++as_mask;
      else if (masked.ids[i] == batch.ids[i]) ++kept;
      else {
        ++as_random;
        CHECK(masked.ids[i] >= kNumSpecialTokens);
      }
    }
    const double s = static_cast<double>(selected);
    CHECK(std::abs(s / 10000 - 0.15) <= 0.01);
    CHECK(std::abs(as_mask / s - 0.8) <= 0.02);
    CHECK(std::abs(as_random / s - 0.1) <= 0.02);
    CHECK(std::abs(kept / s - 0.1) <= 0.02);
  }

  TEST_CASE("specials and padding are never selected") {
    Rng data_rng(4);
    auto batch = synthetic_batch(16, 12, 5, 50, data_rng);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      Rng rng(seed);
      auto masked = dynamic_mask(batch, MaskingPolicy{0.9}, 50, rng);
      for (std::size_t i = 0; i < batch.ids.size(); ++i) {
        const bool special = batch.ids[i] == kClsId || batch.ids[i] == kSepId || batch.ids[i] == kPadId;
        if (special) {
          CHECK(masked.mlm_labels[i] == kIgnoreId);
          CHECK(masked.ids[i] == batch.ids[i]);
        }
      }
      masked.validate(64);
    }
  }

  TEST_CASE("different rng states give different masks") {
    Rng data_rng(5);
    auto batch = synthetic_batch(8, 30, 0, 100, data_rng);
    Rng a(1), b(2);
    CHECK(dynamic_mask(batch, MaskingPolicy{}, 100, a).mlm_labels !=
          dynamic_mask(batch, MaskingPolicy{}, 100, b).mlm_labels);
  }

  TEST_CASE("policy validation") {
    CHECK_THROWS(MaskingPolicy{0.15, 0.5, 0.1, 0.1}.validate());
    CHECK_THROWS(MaskingPolicy{1.5}.validate());
    MaskingPolicy{}.validate();
  }

  TEST_CASE("batching arithmetic and determinism") {
    std::vector<EncodedSequence> seqs;
    for (int i = 0; i < 5; ++i) seqs.push_back(encode_pieces({kNumSpecialTokens + i}, 8, false));
    Rng r1(9), r2(9);
    auto b1 = make_batches(seqs, 2, r1, true);
    CHECK(b1.size() == 2);
    auto b2 = make_batches(seqs, 2, r2, true);
    CHECK(b1.size() == b2.size());
    for (std::size_t i = 0; i < b1.size(); ++i) CHECK(b1[i].ids == b2[i].ids);
    Rng r3(9);
    CHECK(make_batches(seqs, 2, r3, false).size() == 3);
  }

  TEST_CASE("shuffle matches the reference procedure") {
    for (std::size_t buffer : {std::size_t(1), std::size_t(7), std::size_t(10), std::size_t(100), std::size_t(10000)}) {
      std::vector<EncodedSequence> seqs;
      for (int i = 0; i < 100; ++i) seqs.push_back(encode_pieces({kNumSpecialTokens + i}, 4, false));
      Rng lib(2024), ref(2024);
      auto batches = make_batches(seqs, 4, lib, false, buffer);
      std::vector<std::size_t> got;
      for (const auto& b : batches)
        for (std::size_t r = 0; r < b.batch; ++r) got.push_back(static_cast<std::size_t>(marker(b, r) - kNumSpecialTokens));
      CHECK(got == sbtest::shuffle_buffer_oracle(100, buffer, ref));
    }
  }

  TEST_CASE("pair mode reads consecutive sentence pairs") {
    auto vocab = word_vocab(20);
    TempFile f("w1 w2\nw3 w4\n\nw5\nw6\nw7\n");
    auto seqs = ingest_corpus(f.path, vocab, InputMode::kPair, 32);
    REQUIRE(seqs.size() == 3);
    CHECK(seqs[0].ids == std::vector<std::int32_t>{kClsId, 6, 7, kSepId, 8, 9, kSepId});
    CHECK(seqs[0].segment_ids == std::vector<std::int32_t>{0, 0, 0, 0, 1, 1, 1});
    CHECK(seqs[2].ids == std::vector<std::int32_t>{kClsId, 12, kSepId});
  }

  TEST_CASE("contiguous mode packs whole sentences within a document") {
    auto vocab = word_vocab(40);
    std::string doc;
    // 10 sentences of 30 pieces each: 300 pieces in one document
    for (int s = 0; s < 10; ++s) {
      for (int w = 0; w < 30; ++w) doc += "w" + std::to_string((s * 3 + w) % 40) + (w + 1 < 30 ? " " : "\n");
    }
    TempFile f(doc + "\nw0 w1\n");
    auto seqs = ingest_corpus(f.path, vocab, InputMode::kContiguous, 128);
    REQUIRE(seqs.size() >= 4);
    std::vector<std::int32_t> joined;
    for (std::size_t i = 0; i + 1 < seqs.size(); ++i) {
      CHECK(seqs[i].size() <= 128);
      CHECK((seqs[i].size() - 2) % 30 == 0);
      for (auto s : seqs[i].segment_ids) CHECK(s == 0);
      joined.insert(joined.end(), seqs[i].ids.begin() + 1, seqs[i].ids.end() - 1);
    }
    CHECK(seqs.size() - 1 >= 3);
    CHECK(joined.size() == 300);
    std::vector<std::int32_t> expected;
    for (int s = 0; s < 10; ++s)
      for (int w = 0; w < 30; ++w) expected.push_back(kNumSpecialTokens + (s * 3 + w) % 40);
    CHECK(joined == expected);
    CHECK(seqs.back().ids == std::vector<std::int32_t>{kClsId, 5, 6, kSepId});
  }

  TEST_CASE("reader rewinds") {
    auto vocab = word_vocab(10);
    TempFile f("w1\nw2\n");
    CorpusReader reader(f.path, vocab, InputMode::kPair, 16);
    auto first = reader.next();
    CHECK_FALSE(reader.next().has_value());
    reader.rewind();
    CHECK(reader.next()->ids == first->ids);
  }

  TEST_CASE("batch invariants") {
    Rng rng(6);
    auto batch = synthetic_batch(3, 6, 2, 30, rng);
    batch.validate(16);
    CHECK_THROWS(batch.validate(4));
    auto labeled_pad = batch;
    const auto pad = std::find(batch.pad_mask.begin(), batch.pad_mask.end(), 0) - batch.pad_mask.begin();
    labeled_pad.mlm_labels[static_cast<std::size_t>(pad)] = 7;
    CHECK_THROWS(labeled_pad.validate(16));
    auto labeled_cls = batch;
    labeled_cls.mlm_labels[0] = kClsId;
    CHECK_THROWS(labeled_cls.validate(16));
    auto ragged = batch;
    ragged.segment_ids.pop_back();
    CHECK_THROWS(ragged.validate(16));
  }
}
