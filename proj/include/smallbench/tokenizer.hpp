#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace smallbench {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
inline constexpr std::int32_t kClsId = 2;
inline constexpr std::int32_t kSepId = 3;
inline constexpr std::int32_t kMaskId = 4;
inline constexpr std::int32_t kNumSpecialTokens = 5;

/// Token <-> id bijection. Ids 0-4 are always [PAD] [UNK] [CLS] [SEP] [MASK].
/// Immutable once constructed.
class Vocab {
 public:
  explicit Vocab(std::vector<std::string> tokens);

  static Vocab specials_only();

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::int32_t id) const;
  std::optional<std::int32_t> find(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// vocab.txt convention: UTF-8, one token per line, line number = id.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Model input for one sequence. All three lists have equal length.
struct EncodedSequence {
  std::vector<std::int32_t> ids;
  std::vector<std::int32_t> segment_ids;
  std::vector<std::uint8_t> special_mask;  // 1 at [CLS] / [SEP] / [PAD]

  std::size_t size() const { return ids.size(); }
  /// Number of non-[PAD] positions.
  std::size_t unpadded_size() const;
};

/// Lowercases, folds full-width ASCII forms, drops control characters and
/// maps every whitespace run to one space, trimming both ends.
std::string normalize_text(std::string_view text);

/// Splits normalized text on whitespace and isolates ASCII punctuation.
std::vector<std::string> split_words(std::string_view normalized);

/// Greedy longest-match-first WordPiece over one word. A word that cannot be
/// covered (or longer than 100 code points) becomes a single [UNK].
std::vector<std::int32_t> wordpiece(std::string_view word, const Vocab& vocab);

/// normalize -> split -> wordpiece.
std::vector<std::int32_t> tokenize(std::string_view text, const Vocab& vocab);

/// Builds a vocabulary of at most `target_size` entries from a corpus:
/// the five specials, then the character alphabet (word-initial and "##"
/// continuation forms), then whole words, then "##" suffix pieces, each
/// tier ranked by frequency with lexicographic tie-breaks. Words occurring
/// fewer than `min_frequency` times are ignored.
Vocab build_vocab(const std::filesystem::path& corpus, std::size_t target_size, std::size_t min_frequency);
Vocab build_vocab_from_text(std::string_view text, std::size_t target_size, std::size_t min_frequency);

/// [CLS] pieces [SEP], truncated to max_len and (when pad) padded to it.
EncodedSequence encode_single(std::string_view text, const Vocab& vocab, std::size_t max_len, bool pad = true);

/// [CLS] A [SEP] B [SEP] with longest-first truncation (ties trim B).
EncodedSequence encode_pair(std::string_view a, std::string_view b, const Vocab& vocab, std::size_t max_len,
                            bool pad = true);

EncodedSequence encode_pieces(std::vector<std::int32_t> a, std::size_t max_len, bool pad = true);
EncodedSequence encode_pieces(std::vector<std::int32_t> a, std::vector<std::int32_t> b, std::size_t max_len,
                              bool pad = true);

/// Inverse mapping: specials dropped, "##" pieces glued to their predecessor.
std::string decode(std::span<const std::int32_t> ids, const Vocab& vocab);

}  // namespace smallbench
