#include "smallbench/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace smallbench {
namespace {

const std::vector<std::string> kSpecialTokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
constexpr std::size_t kMaxWordChars = 100;

std::vector<char32_t> utf8_decode(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1f;
      len = 2;
    } else if ((c >> 4) == 0xe) {
      cp = c & 0x0f;
      len = 3;
    } else if ((c >> 3) == 0x1e) {
      cp = c & 0x07;
      len = 4;
    } else {
      out.push_back(0xfffd);
      ++i;
      continue;
    }
    if (i + len > s.size()) {
      out.push_back(0xfffd);
      break;
    }
    bool ok = true;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (cc & 0x3f);
    }
    if (!ok) {
      out.push_back(0xfffd);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

void utf8_append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xc0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xe0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  } else {
    out += static_cast<char>(0xf0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  }
}

bool is_space(char32_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f' || c == 0xa0 || c == 0x3000 ||
         (c >= 0x2000 && c <= 0x200a);
}

bool is_control(char32_t c) { return (c < 0x20 || (c >= 0x7f && c < 0xa0)) && !is_space(c); }

bool is_punct(char32_t c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

char32_t fold(char32_t c) {
  if (c >= 0xff01 && c <= 0xff5e) c -= 0xfee0;  // full-width ASCII forms
  if (c >= 'A' && c <= 'Z') return c + 32;
  if ((c >= 0xc0 && c <= 0xde && c != 0xd7)) return c + 32;  // Latin-1 uppercase
  return c;
}

// Byte offsets of code point starts in a UTF-8 string, plus the end offset.
std::vector<std::size_t> char_boundaries(std::string_view s) {
  std::vector<std::size_t> b;
  for (std::size_t i = 0; i < s.size(); ++i)
    if ((static_cast<unsigned char>(s[i]) & 0xc0) != 0x80) b.push_back(i);
  b.push_back(s.size());
  return b;
}

bool is_special(std::int32_t id) { return id >= 0 && id < kNumSpecialTokens; }

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kSpecialTokens.size())
    throw std::invalid_argument("vocabulary needs at least the 5 special tokens, got " +
                                std::to_string(tokens_.size()));
  for (std::size_t i = 0; i < kSpecialTokens.size(); ++i)
    if (tokens_[i] != kSpecialTokens[i])
      throw std::invalid_argument("vocabulary id " + std::to_string(i) + " must be " + kSpecialTokens[i] +
                                  ", found '" + tokens_[i] + "'");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw std::invalid_argument("vocabulary id " + std::to_string(i) + " is empty");
    for (unsigned char ch : tokens_[i])
      if (ch <= 0x20 || ch == 0x7f)
        throw std::invalid_argument("vocabulary id " + std::to_string(i) + " contains whitespace or a control byte");
    if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second)
      throw std::invalid_argument("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

Vocab Vocab::specials_only() { return Vocab(kSpecialTokens); }

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(tokens_.size()));
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<std::int32_t> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw std::runtime_error("failed writing vocabulary file " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

std::size_t EncodedSequence::unpadded_size() const {
  return static_cast<std::size_t>(std::count_if(ids.begin(), ids.end(), [](auto id) { return id != kPadId; }));
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char32_t c : utf8_decode(text)) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (is_control(c)) continue;
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    utf8_append(out, fold(c));
  }
  return out;
}

std::vector<std::string> split_words(std::string_view normalized) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(std::move(cur));
    cur.clear();
  };
  for (char32_t c : utf8_decode(normalized)) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      words.emplace_back(1, static_cast<char>(c));
    } else {
      utf8_append(cur, c);
    }
  }
  flush();
  return words;
}

std::vector<std::int32_t> wordpiece(std::string_view word, const Vocab& vocab) {
  const auto bounds = char_boundaries(word);
  const std::size_t nchars = bounds.size() - 1;
  if (nchars == 0) return {};
  if (nchars > kMaxWordChars) return {kUnkId};
  std::vector<std::int32_t> pieces;
  std::size_t start = 0;
  std::string candidate;
  while (start < nchars) {
    std::size_t end = nchars;
    std::optional<std::int32_t> found;
    while (end > start) {
      candidate.assign(start > 0 ? "##" : "");
      candidate.append(word.substr(bounds[start], bounds[end] - bounds[start]));
      found = vocab.find(candidate);
      if (found && !is_special(*found)) break;
      found.reset();
      --end;
    }
    if (!found) return {kUnkId};
    pieces.push_back(*found);
    start = end;
  }
  return pieces;
}

std::vector<std::int32_t> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<std::int32_t> ids;
  for (const auto& w : split_words(normalize_text(text))) {
    auto p = wordpiece(w, vocab);
    ids.insert(ids.end(), p.begin(), p.end());
  }
  return ids;
}

Vocab build_vocab_from_text(std::string_view text, std::size_t target_size, std::size_t min_frequency) {
  if (target_size < kSpecialTokens.size())
    throw std::invalid_argument("target vocabulary size " + std::to_string(target_size) +
                                " is below the 5 reserved special tokens");
  std::map<std::string, std::size_t> word_counts;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    for (auto& w : split_words(normalize_text(text.substr(start, nl - start)))) ++word_counts[w];
    start = nl + 1;
  }
  if (word_counts.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");

  std::map<std::string, std::size_t> alphabet, words, suffixes;
  for (const auto& [w, n] : word_counts) {
    if (n < min_frequency) continue;
    const auto b = char_boundaries(w);
    const std::size_t nchars = b.size() - 1;
    if (nchars > kMaxWordChars) continue;
    for (std::size_t c = 0; c < nchars; ++c)
      alphabet[(c ? "##" : "") + w.substr(b[c], b[c + 1] - b[c])] += n;
    if (nchars > 1) {
      words[w] += n;
      for (std::size_t c = 1; c + 1 < nchars; ++c) suffixes["##" + w.substr(b[c])] += n;
    }
  }

  std::vector<std::string> tokens = kSpecialTokens;
  std::map<std::string, bool> taken;
  for (const auto& t : tokens) taken[t] = true;
  auto take_tier = [&](const std::map<std::string, std::size_t>& tier) {
    std::vector<std::pair<std::string, std::size_t>> ranked(tier.begin(), tier.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [tok, n] : ranked) {
      if (tokens.size() >= target_size) return;
      if (n < min_frequency || taken[tok]) continue;
      taken[tok] = true;
      tokens.push_back(tok);
    }
  };
  take_tier(alphabet);
  take_tier(words);
  take_tier(suffixes);
  return Vocab(std::move(tokens));
}

Vocab build_vocab(const std::filesystem::path& corpus, std::size_t target_size, std::size_t min_frequency) {
  std::ifstream in(corpus, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read corpus " + corpus.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return build_vocab_from_text(ss.str(), target_size, min_frequency);
}

namespace {

EncodedSequence finish(std::vector<std::int32_t> ids, std::vector<std::int32_t> segs, std::size_t max_len,
                       bool pad) {
  EncodedSequence seq;
  if (pad) {
    segs.resize(max_len, 0);
    ids.resize(max_len, kPadId);
  }
  seq.special_mask.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    seq.special_mask[i] = ids[i] == kClsId || ids[i] == kSepId || ids[i] == kPadId;
  seq.ids = std::move(ids);
  seq.segment_ids = std::move(segs);
  return seq;
}

}  // namespace

EncodedSequence encode_pieces(std::vector<std::int32_t> a, std::size_t max_len, bool pad) {
  if (max_len < 3) throw std::invalid_argument("single-sequence max_len must be >= 3");
  if (a.size() > max_len - 2) a.resize(max_len - 2);
  std::vector<std::int32_t> ids;
  ids.reserve(max_len);
  ids.push_back(kClsId);
  ids.insert(ids.end(), a.begin(), a.end());
  ids.push_back(kSepId);
  std::vector<std::int32_t> segs(ids.size(), 0);
  return finish(std::move(ids), std::move(segs), max_len, pad);
}

EncodedSequence encode_pieces(std::vector<std::int32_t> a, std::vector<std::int32_t> b, std::size_t max_len,
                              bool pad) {
  if (max_len < 5) throw std::invalid_argument("pair max_len must be >= 5");
  while (a.size() + b.size() > max_len - 3) {
    if (a.size() > b.size())
      a.pop_back();
    else
      b.pop_back();
  }
  std::vector<std::int32_t> ids;
  std::vector<std::int32_t> segs;
  ids.reserve(max_len);
  ids.push_back(kClsId);
  ids.insert(ids.end(), a.begin(), a.end());
  ids.push_back(kSepId);
  segs.assign(ids.size(), 0);
  ids.insert(ids.end(), b.begin(), b.end());
  ids.push_back(kSepId);
  segs.resize(ids.size(), 1);
  return finish(std::move(ids), std::move(segs), max_len, pad);
}

EncodedSequence encode_single(std::string_view text, const Vocab& vocab, std::size_t max_len, bool pad) {
  return encode_pieces(tokenize(text, vocab), max_len, pad);
}

EncodedSequence encode_pair(std::string_view a, std::string_view b, const Vocab& vocab, std::size_t max_len,
                            bool pad) {
  return encode_pieces(tokenize(a, vocab), tokenize(b, vocab), max_len, pad);
}

std::string decode(std::span<const std::int32_t> ids, const Vocab& vocab) {
  std::string out;
  for (auto id : ids) {
    const auto& tok = vocab.token(id);
    if (is_special(id)) continue;
    if (tok.size() > 2 && tok.starts_with("##")) {
      out.append(tok, 2);
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

}  // namespace smallbench
