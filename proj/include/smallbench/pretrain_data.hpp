#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "smallbench/rng.hpp"
#include "smallbench/tokenizer.hpp"

namespace smallbench {

inline constexpr std::int32_t kIgnoreId = -100;

/// Padded [batch, length] matrices stored row-major.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::int32_t> segment_ids;
  std::vector<std::uint8_t> pad_mask;  // 1 = real token
  std::vector<std::int32_t> mlm_labels;  // kIgnoreId where not masked

  std::size_t size() const { return batch * length; }
  /// Throws std::logic_error describing the first broken invariant.
  void validate(std::size_t max_len) const;
  /// 1 where the position is a real, non-[CLS]/[SEP] token.
  std::vector<std::uint8_t> eligible_mask() const;
};

/// BERT-style masking rates. The three replacement fractions sum to 1.
struct MaskingPolicy {
  double mask_prob = 0.15;
  double replace_with_mask = 0.8;
  double replace_with_random = 0.1;
  double keep_original = 0.1;

  void validate() const;
};

enum class InputMode { kPair, kContiguous };

InputMode parse_input_mode(std::string_view text);
std::string_view to_string(InputMode mode);

/// Streams model sequences out of a plain-text corpus: one sentence per
/// line, documents separated by blank lines.
///
/// Pair mode emits [CLS] A [SEP] B [SEP] from consecutive, non-overlapping
/// sentence pairs of one document (a trailing odd sentence is emitted
/// alone). Contiguous mode packs whole consecutive sentences of one
/// document up to max_len; a single over-long sentence is truncated.
/// Sequences are unpadded.
class CorpusReader {
 public:
  CorpusReader(std::filesystem::path path, const Vocab& vocab, InputMode mode, std::size_t max_len);

  std::optional<EncodedSequence> next();
  /// Restarts from the first document.
  void rewind();

 private:
  bool read_document();

  std::filesystem::path path_;
  const Vocab* vocab_;
  InputMode mode_;
  std::size_t max_len_;
  std::ifstream in_;
  std::deque<EncodedSequence> pending_;
};

std::vector<EncodedSequence> ingest_corpus(const std::filesystem::path& path, const Vocab& vocab, InputMode mode,
                                           std::size_t max_len);

/// Pads a group of sequences to their longest member.
TokenBatch collate(std::span<const EncodedSequence> sequences);

/// Fresh mask over a batch. Each eligible position is selected with
/// mask_prob (one uniform draw per eligible position, in row-major order);
/// a selected position draws once more to pick [MASK] / random non-special
/// token / unchanged, and the random case draws the token id.
TokenBatch dynamic_mask(const TokenBatch& batch, const MaskingPolicy& policy, std::size_t vocab_size, Rng& rng);

/// Shuffled, padded batches from a sequence source.
///
/// Shuffle: a buffer of `buffer_size` items is filled from the source;
/// afterwards each incoming item replaces the buffer slot
/// j = rng.uniform_int(buffer_size), whose previous occupant is emitted.
/// When the source runs dry the buffer is drained by repeatedly emitting
/// slot j = rng.uniform_int(remaining) and moving the last slot into j.
/// Emitted items are grouped into batches in order.
///
/// next() returns nullopt once source and buffer are both empty; if the
/// source is refilled (e.g. rewound) the stream continues with the same rng.
class BatchStream {
 public:
  using Source = std::function<std::optional<EncodedSequence>()>;

  BatchStream(Source source, std::size_t batch_size, Rng rng, bool drop_last, std::size_t buffer_size = 10000);

  std::optional<TokenBatch> next();

  const Rng& rng() const { return rng_; }

 private:
  std::optional<EncodedSequence> next_sequence();

  Source source_;
  std::size_t batch_size_;
  Rng rng_;
  bool drop_last_;
  std::size_t buffer_size_;
  std::vector<EncodedSequence> buffer_;
  bool source_dry_ = false;
};

/// Eager form of BatchStream over an in-memory list.
std::vector<TokenBatch> make_batches(std::vector<EncodedSequence> sequences, std::size_t batch_size, Rng& rng,
                                     bool drop_last, std::size_t buffer_size = 10000);

}  // namespace smallbench
