#pragma once

#include <cstdint>
#include <span>

#include "smallbench/rng.hpp"
#include "smallbench/tensor.hpp"

namespace smallbench {

// Differentiable tensor operations. Every op is instantiated for float and
// double. Outputs require grad iff any tensor input does.
//
// Elementwise binary ops broadcast `b` over the leading dimensions of `a`:
// `b.shape()` must equal `a.shape()` or be a suffix of it.

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

/// Sum of all elements, shape [1].
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);

/// [.., m, k] x [.., k, n] -> [.., m, n]. Batch extents broadcast
/// numpy-style (right aligned, size 1 or missing expands).
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x [.., in] * weight [in, out] + bias [out]
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

/// Swaps the last two axes.
template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, const std::vector<std::size_t>& order);
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

/// Max-subtracted softmax along `axis` (negative counts from the end).
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis);

/// Softmax over the last axis of x [B, .., Lk] where key_mask [B * Lk]
/// (nonzero = visible) hides columns per batch row. Hidden columns get
/// exactly zero weight. A row with no visible column is all zeros.
template <typename T>
BasicTensor<T> masked_softmax(const BasicTensor<T>& x, std::span<const std::uint8_t> key_mask);

/// Normalizes over the last axis with biased variance, then gamma * x + beta.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          T eps);

/// Exact GELU: x * Phi(x).
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

/// Mean negative log-softmax of logits [n, V] at `targets`, skipping
/// entries equal to `ignore_id`. Throws if every target is ignored.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                             std::int32_t ignore_id);

/// Mean binary cross-entropy with logits over positions where valid != 0.
/// logits has one element per label. Throws if nothing is valid.
template <typename T>
BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const T> labels,
                               std::span<const std::uint8_t> valid);

/// Mean squared error between pred (one element per target) and targets.
template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& pred, std::span<const T> targets);

/// Row lookup: table [V, e], ids shaped `index_shape` -> index_shape + [e].
/// Throws std::out_of_range for ids outside [0, V).
template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const std::int32_t> ids, const Shape& index_shape);

/// Treats x as [R, last] and returns the selected rows as [n, last].
template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::span<const std::size_t> rows);

enum class RelativeGather {
  kContentToPosition,  // out[.., i, j] = x[.., i, bucket(i, j)]
  kPositionToContent,  // out[.., i, j] = x[.., j, bucket(j, i)]
};

/// x [.., L, 2k] -> [.., L, L] indexed by the clamped relative bucket.
template <typename T>
BasicTensor<T> relative_gather(const BasicTensor<T>& x, std::size_t k, RelativeGather mode);

/// Inverted dropout. p == 0 returns x unchanged (same handle).
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double p, Rng& rng);

/// Bucket of the clamped offset i - j into [0, 2k).
std::size_t relative_distance(std::size_t i, std::size_t j, std::size_t k);

}  // namespace smallbench
