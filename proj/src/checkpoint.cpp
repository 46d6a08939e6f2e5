#include "smallbench/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace smallbench {
namespace {

constexpr char kMagic[4] = {'S', 'B', 'N', '1'};
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    out_.append(c, n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void str(std::string_view s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string& buffer() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, const std::string& source) : data_(data), source_(source) {}

  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n)
      throw CheckpointError(source_ + ": truncated checkpoint (reading " + what + " at byte " +
                            std::to_string(pos_) + ")");
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U uint(const char* what) {
    auto s = take(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::string str(const char* what) { return std::string(take(uint<std::uint32_t>(what), what)); }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  const std::string& source_;
};

}  // namespace

const NamedArray* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::optional<std::string> Checkpoint::meta(std::string_view key) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return v;
  return std::nullopt;
}

void Checkpoint::set_meta(std::string key, std::string value) {
  if (key.empty() || key.find_first_of("=\n") != std::string::npos)
    throw std::invalid_argument("checkpoint metadata key '" + key + "' is empty or contains '=' or a newline");
  if (value.find('\n') != std::string::npos)
    throw std::invalid_argument("checkpoint metadata value for '" + key + "' contains a newline");
  for (auto& [k, v] : metadata)
    if (k == key) {
      v = std::move(value);
      return;
    }
  metadata.emplace_back(std::move(key), std::move(value));
}

void Checkpoint::set_vocab(const Vocab& vocab) {
  std::string joined;
  for (const auto& t : vocab.tokens()) {
    if (!joined.empty()) joined.push_back('\t');
    joined += t;
  }
  set_meta("vocab", std::move(joined));
}

Vocab Checkpoint::vocab() const {
  auto joined = meta("vocab");
  if (!joined) throw CheckpointError("checkpoint carries no vocabulary");
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (true) {
    const auto tab = joined->find('\t', start);
    tokens.push_back(joined->substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return Vocab(std::move(tokens));
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string record = "step=" + std::to_string(ck.step) + "\n";
  std::istringstream cfg(ck.config.to_record());
  for (std::string line; std::getline(cfg, line);)
    if (!line.empty()) record += "model." + line + "\n";
  for (const auto& [k, v] : ck.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw CheckpointError("checkpoint metadata '" + k + "' cannot be encoded");
    record += "meta." + k + "=" + v + "\n";
  }

  Writer w;
  w.bytes(kMagic, 4);
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.str(record);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    if (shape_numel(t.shape) != t.values.size())
      throw CheckpointError("tensor '" + t.name + "' has shape " + shape_str(t.shape) + " but " +
                            std::to_string(t.values.size()) + " values");
    w.str(t.name);
    w.uint<std::uint8_t>(kDtypeF32);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.uint<std::uint64_t>(d);
    for (float f : t.values) w.uint<std::uint32_t>(std::bit_cast<std::uint32_t>(f));
  }
  auto& buf = w.buffer();
  const auto sum = fnv1a64({reinterpret_cast<const unsigned char*>(buf.data()), buf.size()});
  w.uint<std::uint64_t>(sum);
  return std::move(buf);
}

Checkpoint parse_checkpoint(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError(source + ": not a checkpoint (bad magic)");
  if (bytes.size() < 4 + 4 + 8) throw CheckpointError(source + ": truncated checkpoint");
  Reader r(bytes, source);
  r.take(4, "magic");
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(source + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8), source);
  const auto stored = tail.uint<std::uint64_t>("checksum");

  Checkpoint ck;
  Reader br(body, source);
  br.take(8, "header");
  const std::string record = br.str("record");
  std::string cfg_record;
  std::istringstream lines(record);
  for (std::string line; std::getline(lines, line);) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError(source + ": malformed record line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "step") ck.step = std::stoull(value);
    else if (key.starts_with("model.")) cfg_record += key.substr(6) + "=" + value + "\n";
    else if (key.starts_with("meta.")) ck.metadata.emplace_back(key.substr(5), value);
    else throw CheckpointError(source + ": unknown record key '" + key + "'");
  }
  try {
    ck.config = ModelConfig::from_record(cfg_record);
  } catch (const std::exception& e) {
    throw CheckpointError(source + ": " + e.what());
  }

  const auto count = br.uint<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray t;
    t.name = br.str("tensor name");
    const auto dtype = br.uint<std::uint8_t>("dtype");
    if (dtype != kDtypeF32)
      throw CheckpointError(source + ": tensor '" + t.name + "' has unsupported dtype " + std::to_string(dtype));
    const auto rank = br.uint<std::uint32_t>("rank");
    if (rank > kMaxRank) throw CheckpointError(source + ": tensor '" + t.name + "' has implausible rank");
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto ext = br.uint<std::uint64_t>("extent");
      if (ext == 0 || ext > (body.size() / 4) || n > body.size() / ext)
        throw CheckpointError(source + ": tensor '" + t.name + "' has an invalid extent");
      t.shape.push_back(static_cast<std::size_t>(ext));
      n *= ext;
    }
    br.need(n * 4, "tensor payload");
    t.values.resize(n);
    for (auto& f : t.values) f = std::bit_cast<float>(br.uint<std::uint32_t>("value"));
    ck.tensors.push_back(std::move(t));
  }
  if (br.pos() != body.size()) throw CheckpointError(source + ": trailing bytes before checksum");
  const auto actual = fnv1a64({reinterpret_cast<const unsigned char*>(body.data()), body.size()});
  if (actual != stored) throw CheckpointError(source + ": checksum mismatch (file corrupted)");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), path.string());
}

template <typename T>
void export_parameters(const ParameterStore<T>& store, Checkpoint& checkpoint, const std::string& prefix) {
  for (const auto& [name, t] : store.entries()) {
    NamedArray a;
    a.name = prefix + name;
    a.shape = t.shape();
    a.values.assign(t.data().begin(), t.data().end());
    checkpoint.tensors.push_back(std::move(a));
  }
}

template <typename T>
void import_parameters(ParameterStore<T>& store, const Checkpoint& checkpoint, const std::string& prefix,
                       const std::function<bool(const std::string&)>& filter) {
  for (auto& [name, t] : store.entries()) {
    if (filter && !filter(name)) continue;
    const NamedArray* a = checkpoint.find(prefix + name);
    if (!a) throw CheckpointError("checkpoint has no tensor '" + prefix + name + "'");
    if (a->shape != t.shape())
      throw CheckpointError("tensor '" + prefix + name + "' has shape " + shape_str(a->shape) + ", model expects " +
                            shape_str(t.shape()));
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(a->values[i]);
  }
}

template void export_parameters(const ParameterStore<float>&, Checkpoint&, const std::string&);
template void export_parameters(const ParameterStore<double>&, Checkpoint&, const std::string&);
template void import_parameters(ParameterStore<float>&, const Checkpoint&, const std::string&,
                                const std::function<bool(const std::string&)>&);
template void import_parameters(ParameterStore<double>&, const Checkpoint&, const std::string&,
                                const std::function<bool(const std::string&)>&);

}  // namespace smallbench
