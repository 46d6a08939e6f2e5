#include "smallbench/pretrain_data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace smallbench {

void TokenBatch::validate(std::size_t max_len) const {
  const std::size_t n = batch * length;
  if (ids.size() != n || segment_ids.size() != n || pad_mask.size() != n || mlm_labels.size() != n)
    throw std::logic_error("token batch matrices do not share shape [" + std::to_string(batch) + ", " +
                           std::to_string(length) + "]");
  if (length > max_len)
    throw std::logic_error("token batch length " + std::to_string(length) + " exceeds max length " +
                           std::to_string(max_len));
  for (std::size_t i = 0; i < n; ++i) {
    if (mlm_labels[i] == kIgnoreId) continue;
    if (!pad_mask[i]) throw std::logic_error("mlm label set on a padding position");
    if (mlm_labels[i] == kClsId || mlm_labels[i] == kSepId || mlm_labels[i] == kPadId)
      throw std::logic_error("mlm label set on a special position");
  }
}

std::vector<std::uint8_t> TokenBatch::eligible_mask() const {
  std::vector<std::uint8_t> m(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    m[i] = pad_mask[i] && ids[i] != kClsId && ids[i] != kSepId && ids[i] != kPadId;
  return m;
}

void MaskingPolicy::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(mask_prob) || !in_unit(replace_with_mask) || !in_unit(replace_with_random) || !in_unit(keep_original))
    throw std::invalid_argument("masking probabilities must lie in [0, 1]");
  if (std::abs(replace_with_mask + replace_with_random + keep_original - 1.0) > 1e-9)
    throw std::invalid_argument("mask/random/keep fractions must sum to 1");
}

InputMode parse_input_mode(std::string_view text) {
  if (text == "pair") return InputMode::kPair;
  if (text == "contiguous") return InputMode::kContiguous;
  throw std::invalid_argument("unknown input mode '" + std::string(text) + "' (expected pair|contiguous)");
}

std::string_view to_string(InputMode mode) { return mode == InputMode::kPair ? "pair" : "contiguous"; }

CorpusReader::CorpusReader(std::filesystem::path path, const Vocab& vocab, InputMode mode, std::size_t max_len)
    : path_(std::move(path)), vocab_(&vocab), mode_(mode), max_len_(max_len) {
  if (max_len_ < (mode_ == InputMode::kPair ? 5u : 3u))
    throw std::invalid_argument("max_len " + std::to_string(max_len_) + " too small for " +
                                std::string(to_string(mode_)) + " mode");
  rewind();
  if (pending_.empty() && !read_document()) throw std::runtime_error("corpus " + path_.string() + " is empty");
}

void CorpusReader::rewind() {
  in_.close();
  in_.clear();
  in_.open(path_, std::ios::binary);
  if (!in_) throw std::runtime_error("cannot read corpus " + path_.string());
  pending_.clear();
}

bool CorpusReader::read_document() {
  std::vector<std::vector<std::int32_t>> sentences;
  std::string line;
  while (std::getline(in_, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      if (sentences.empty()) continue;
      break;
    }
    sentences.push_back(tokenize(line, *vocab_));
  }
  if (sentences.empty()) return false;

  if (mode_ == InputMode::kPair) {
    for (std::size_t s = 0; s < sentences.size(); s += 2) {
      if (s + 1 < sentences.size())
        pending_.push_back(encode_pieces(sentences[s], sentences[s + 1], max_len_, false));
      else
        pending_.push_back(encode_pieces(sentences[s], max_len_, false));
    }
  } else {
    const std::size_t budget = max_len_ - 2;
    std::vector<std::int32_t> current;
    for (auto& s : sentences) {
      if (!current.empty() && current.size() + s.size() > budget) {
        pending_.push_back(encode_pieces(std::move(current), max_len_, false));
        current.clear();
      }
      current.insert(current.end(), s.begin(), s.end());
    }
    if (!current.empty()) pending_.push_back(encode_pieces(std::move(current), max_len_, false));
  }
  return true;
}

std::optional<EncodedSequence> CorpusReader::next() {
  while (pending_.empty())
    if (!read_document()) return std::nullopt;
  EncodedSequence s = std::move(pending_.front());
  pending_.pop_front();
  return s;
}

std::vector<EncodedSequence> ingest_corpus(const std::filesystem::path& path, const Vocab& vocab, InputMode mode,
                                           std::size_t max_len) {
  CorpusReader reader(path, vocab, mode, max_len);
  std::vector<EncodedSequence> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

TokenBatch collate(std::span<const EncodedSequence> sequences) {
  if (sequences.empty()) throw std::invalid_argument("collate: no sequences");
  TokenBatch b;
  b.batch = sequences.size();
  for (const auto& s : sequences) b.length = std::max(b.length, s.size());
  const std::size_t n = b.batch * b.length;
  b.ids.assign(n, kPadId);
  b.segment_ids.assign(n, 0);
  b.pad_mask.assign(n, 0);
  b.mlm_labels.assign(n, kIgnoreId);
  for (std::size_t r = 0; r < b.batch; ++r) {
    const auto& s = sequences[r];
    for (std::size_t t = 0; t < s.size(); ++t) {
      b.ids[r * b.length + t] = s.ids[t];
      b.segment_ids[r * b.length + t] = s.segment_ids[t];
      b.pad_mask[r * b.length + t] = s.ids[t] != kPadId;
    }
  }
  return b;
}

TokenBatch dynamic_mask(const TokenBatch& batch, const MaskingPolicy& policy, std::size_t vocab_size, Rng& rng) {
  policy.validate();
  if (vocab_size <= static_cast<std::size_t>(kNumSpecialTokens))
    throw std::invalid_argument("dynamic_mask needs at least one non-special token in the vocabulary");
  TokenBatch out = batch;
  std::fill(out.mlm_labels.begin(), out.mlm_labels.end(), kIgnoreId);
  const auto eligible = batch.eligible_mask();
  const double random_cut = policy.replace_with_mask + policy.replace_with_random;
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    if (!eligible[i]) continue;
    if (rng.uniform() >= policy.mask_prob) continue;
    out.mlm_labels[i] = batch.ids[i];
    const double v = rng.uniform();
    if (v < policy.replace_with_mask) {
      out.ids[i] = kMaskId;
    } else if (v < random_cut) {
      out.ids[i] = static_cast<std::int32_t>(kNumSpecialTokens +
                                             rng.uniform_int(vocab_size - static_cast<std::size_t>(kNumSpecialTokens)));
    }
  }
  return out;
}

BatchStream::BatchStream(Source source, std::size_t batch_size, Rng rng, bool drop_last, std::size_t buffer_size)
    : source_(std::move(source)),
      batch_size_(batch_size),
      rng_(rng),
      drop_last_(drop_last),
      buffer_size_(buffer_size) {
  if (batch_size_ == 0) throw std::invalid_argument("batch size must be >= 1");
  if (buffer_size_ == 0) throw std::invalid_argument("shuffle buffer size must be >= 1");
}

std::optional<EncodedSequence> BatchStream::next_sequence() {
  if (!source_dry_) {
    while (buffer_.size() < buffer_size_) {
      auto s = source_();
      if (!s) break;
      buffer_.push_back(std::move(*s));
    }
    if (buffer_.size() == buffer_size_) {
      if (auto incoming = source_()) {
        const auto j = rng_.uniform_int(buffer_size_);
        EncodedSequence out = std::move(buffer_[j]);
        buffer_[j] = std::move(*incoming);
        return out;
      }
    }
    source_dry_ = true;
  }
  if (buffer_.empty()) {
    source_dry_ = false;  // let a rewound source refill
    return std::nullopt;
  }
  const auto j = rng_.uniform_int(buffer_.size());
  EncodedSequence out = std::move(buffer_[j]);
  buffer_[j] = std::move(buffer_.back());
  buffer_.pop_back();
  return out;
}

std::optional<TokenBatch> BatchStream::next() {
  std::vector<EncodedSequence> group;
  group.reserve(batch_size_);
  while (group.size() < batch_size_) {
    auto s = next_sequence();
    if (!s) break;
    group.push_back(std::move(*s));
  }
  if (group.empty() || (group.size() < batch_size_ && drop_last_)) return std::nullopt;
  return collate(group);
}

std::vector<TokenBatch> make_batches(std::vector<EncodedSequence> sequences, std::size_t batch_size, Rng& rng,
                                     bool drop_last, std::size_t buffer_size) {
  std::size_t cursor = 0;
  BatchStream stream(
      [&]() -> std::optional<EncodedSequence> {
        if (cursor >= sequences.size()) return std::nullopt;
        return std::move(sequences[cursor++]);
      },
      batch_size, rng, drop_last, buffer_size);
  std::vector<TokenBatch> out;
  while (auto b = stream.next()) out.push_back(std::move(*b));
  rng = stream.rng();
  return out;
}

}  // namespace smallbench
