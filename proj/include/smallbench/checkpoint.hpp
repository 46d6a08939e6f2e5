#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "smallbench/encoder.hpp"
#include "smallbench/tokenizer.hpp"

namespace smallbench {

// File layout, all integers little-endian:
//   "SBN1" | u32 version | u32 n + n bytes record | u32 tensor count |
//   per tensor: u32 n + name, u8 dtype (1 = f32), u32 rank, u64 extents,
//   f32 payload | u64 FNV-1a of every preceding byte.
// The record is UTF-8 "key=value" lines: "step", "model.<field>" for the
// model config and "meta.<key>" for everything else.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

struct Checkpoint {
  ModelConfig config;
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<NamedArray> tensors;

  const NamedArray* find(std::string_view name) const;
  std::optional<std::string> meta(std::string_view key) const;
  /// Replaces an existing key. Values must not contain a newline.
  void set_meta(std::string key, std::string value);

  /// Vocabulary embedded under meta "vocab" (tab-joined tokens).
  void set_vocab(const Vocab& vocab);
  Vocab vocab() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::uint64_t fnv1a64(std::span<const unsigned char> bytes);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// `source` names the input in error messages.
Checkpoint parse_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

/// Writes to a sibling temporary file, then renames over `path`, so a
/// crash never leaves a truncated checkpoint behind.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends every parameter (converted to f32) as "<prefix><name>".
template <typename T>
void export_parameters(const ParameterStore<T>& store, Checkpoint& checkpoint, const std::string& prefix = "");

/// Copies "<prefix><name>" into each store parameter accepted by `filter`
/// (all when empty). A missing tensor or a shape mismatch is an error.
template <typename T>
void import_parameters(ParameterStore<T>& store, const Checkpoint& checkpoint, const std::string& prefix = "",
                       const std::function<bool(const std::string&)>& filter = {});

}  // namespace smallbench
