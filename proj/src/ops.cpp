#include "smallbench/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace smallbench {
namespace {

template <typename T>
using ImplPtr = std::shared_ptr<detail::TensorImpl<T>>;

template <typename T, typename F>
BasicTensor<T> make_output(Shape shape, std::vector<T> data, std::initializer_list<BasicTensor<T>> inputs,
                           F&& backward) {
  BasicTensor<T> out(std::move(shape), std::move(data));
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  if (needs_grad) {
    auto node = std::make_shared<detail::Node<T>>();
    for (const auto& in : inputs) node->inputs.push_back(in.impl());
    node->backward = std::forward<F>(backward);
    out.impl()->requires_grad = true;
    out.impl()->node = std::move(node);
  }
  return out;
}

template <typename T>
bool suffix_broadcastable(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (b.numel() == 1) return true;
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() > sa.size()) return false;
  return std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size()));
}

template <typename T>
void require_broadcast(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (!suffix_broadcastable(a, b))
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " +
                         shape_str(a.shape()));
}

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* __restrict A, const T* __restrict B,
             T* __restrict C) {
  for (std::size_t i = 0; i < M; ++i) {
    T* __restrict c = C + i * N;
    const T* a = A + i * K;
    for (std::size_t p = 0; p < K; ++p) {
      const T av = a[p];
      const T* __restrict b = B + p * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* __restrict A, const T* __restrict B,
             T* __restrict C) {
  for (std::size_t p = 0; p < K; ++p) {
    const T* arow = A + p * M;
    const T* __restrict b = B + p * N;
    for (std::size_t i = 0; i < M; ++i) {
      const T av = arow[i];
      T* __restrict c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

template <typename T>
void transpose_into(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace

std::size_t relative_distance(std::size_t i, std::size_t j, std::size_t k) {
  const auto d = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j);
  const auto kk = static_cast<std::int64_t>(k);
  if (d <= -kk) return 0;
  if (d >= kk) return 2 * k - 1;
  return static_cast<std::size_t>(d + kk);
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_broadcast(a, b, "add");
  const auto n = a.numel(), m = b.numel();
  std::vector<T> out(n);
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = da[i] + db[i % m];
  ImplPtr<T> ia = a.impl(), ib = b.impl();
  return make_output<T>(a.shape(), std::move(out), {a, b}, [ia, ib, n, m](detail::TensorImpl<T>& o) {
    if (ia->requires_grad) {
      auto& g = ia->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i];
    }
    if (ib->requires_grad) {
      auto& g = ib->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i % m] += o.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_broadcast(a, b, "sub");
  const auto n = a.numel(), m = b.numel();
  std::vector<T> out(n);
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = da[i] - db[i % m];
  ImplPtr<T> ia = a.impl(), ib = b.impl();
  return make_output<T>(a.shape(), std::move(out), {a, b}, [ia, ib, n, m](detail::TensorImpl<T>& o) {
    if (ia->requires_grad) {
      auto& g = ia->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i];
    }
    if (ib->requires_grad) {
      auto& g = ib->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i % m] -= o.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_broadcast(a, b, "mul");
  const auto n = a.numel(), m = b.numel();
  std::vector<T> out(n);
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = da[i] * db[i % m];
  ImplPtr<T> ia = a.impl(), ib = b.impl();
  return make_output<T>(a.shape(), std::move(out), {a, b}, [ia, ib, n, m](detail::TensorImpl<T>& o) {
    if (ia->requires_grad) {
      auto& g = ia->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i] * ib->data[i % m];
    }
    if (ib->requires_grad) {
      auto& g = ib->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i % m] += o.grad[i] * ia->data[i];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  ImplPtr<T> ix = x.impl();
  return make_output<T>(x.shape(), std::move(out), {x}, [ix, factor](detail::TensorImpl<T>& o) {
    auto& g = ix->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  ImplPtr<T> ix = x.impl();
  return make_output<T>(Shape{1}, {total}, {x}, [ix](detail::TensorImpl<T>& o) {
    auto& g = ix->grad_buffer();
    for (auto& v : g) v += o.grad[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();
  const std::size_t M = sa[sa.size() - 2], K = sa.back(), N = sb.back();
  if (sb[sb.size() - 2] != K) throw mismatch();

  const std::size_t ra = sa.size() - 2, rb = sb.size() - 2;
  const std::size_t rank = std::max(ra, rb);
  Shape batch(rank);
  std::vector<std::size_t> stride_a(rank, 0), stride_b(rank, 0);
  {
    std::size_t sta = 1, stb = 1;
    for (std::size_t d = rank; d-- > 0;) {
      const std::size_t off = rank - d;  // 1-based from the right
      const std::size_t da = off <= ra ? sa[ra - off] : 1;
      const std::size_t db = off <= rb ? sb[rb - off] : 1;
      if (da != db && da != 1 && db != 1) throw mismatch();
      batch[d] = std::max(da, db);
      stride_a[d] = da == 1 ? 0 : sta;
      stride_b[d] = db == 1 ? 0 : stb;
      sta *= da;
      stb *= db;
    }
  }
  const std::size_t nbatch = shape_numel(batch);
  std::vector<std::size_t> index_a(nbatch), index_b(nbatch);
  for (std::size_t ob = 0; ob < nbatch; ++ob) {
    std::size_t rem = ob, ia = 0, ib = 0;
    for (std::size_t d = rank; d-- > 0;) {
      const std::size_t idx = rem % batch[d];
      rem /= batch[d];
      ia += idx * stride_a[d];
      ib += idx * stride_b[d];
    }
    index_a[ob] = ia;
    index_b[ob] = ib;
  }

  Shape out_shape = batch;
  out_shape.push_back(M);
  out_shape.push_back(N);
  std::vector<T> out(nbatch * M * N, T(0));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for (std::size_t ob = 0; ob < nbatch; ++ob)
    gemm_nn(M, N, K, pa + index_a[ob] * M * K, pb + index_b[ob] * K * N, out.data() + ob * M * N);

  ImplPtr<T> ia = a.impl(), ib = b.impl();
  return make_output<T>(
      std::move(out_shape), std::move(out), {a, b},
      [ia, ib, M, N, K, nbatch, index_a = std::move(index_a), index_b = std::move(index_b)](
          detail::TensorImpl<T>& o) {
        const T* g = o.grad.data();
        if (ia->requires_grad) {
          // dA += dC * B^T, with B^T prepared once per distinct B matrix.
          const std::size_t nb_mats = ib->data.size() / (K * N);
          std::vector<T> bt(ib->data.size());
          for (std::size_t m = 0; m < nb_mats; ++m)
            transpose_into(K, N, ib->data.data() + m * K * N, bt.data() + m * K * N);
          auto& ga = ia->grad_buffer();
          for (std::size_t ob = 0; ob < nbatch; ++ob)
            gemm_nn(M, K, N, g + ob * M * N, bt.data() + index_b[ob] * K * N, ga.data() + index_a[ob] * M * K);
        }
        if (ib->requires_grad) {
          auto& gb = ib->grad_buffer();
          for (std::size_t ob = 0; ob < nbatch; ++ob)
            gemm_tn(K, N, M, ia->data.data() + index_a[ob] * M * K, g + ob * M * N,
                    gb.data() + index_b[ob] * K * N);
        }
      });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  return add(matmul(x, weight), bias);
}

template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, const std::vector<std::size_t>& order) {
  const auto& s = x.shape();
  const std::size_t r = s.size();
  std::vector<bool> seen(r, false);
  if (order.size() != r) throw DimensionError("permute: order size does not match shape " + shape_str(s));
  for (auto o : order) {
    if (o >= r || seen[o]) throw DimensionError("permute: invalid axis order for shape " + shape_str(s));
    seen[o] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t d = r - 1; d-- > 0;) in_stride[d] = in_stride[d + 1] * s[d + 1];
  Shape out_shape(r);
  std::vector<std::size_t> step(r);
  for (std::size_t d = 0; d < r; ++d) {
    out_shape[d] = s[order[d]];
    step[d] = in_stride[order[d]];
  }
  const std::size_t n = x.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*src)[i] = off;
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < out_shape[d]) {
        off += step[d];
        break;
      }
      off -= step[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
  std::vector<T> out(n);
  auto dx = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = dx[(*src)[i]];
  ImplPtr<T> ix = x.impl();
  return make_output<T>(std::move(out_shape), std::move(out), {x}, [ix, src](detail::TensorImpl<T>& o) {
    auto& g = ix->grad_buffer();
    for (std::size_t i = 0; i < src->size(); ++i) g[(*src)[i]] += o.grad[i];
  });
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x) {
  const std::size_t r = x.rank();
  if (r < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(x.shape()));
  std::vector<std::size_t> order(r);
  for (std::size_t d = 0; d < r; ++d) order[d] = d;
  std::swap(order[r - 1], order[r - 2]);
  return permute(x, order);
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<T> out(x.data().begin(), x.data().end());
  ImplPtr<T> ix = x.impl();
  return make_output<T>(std::move(shape), std::move(out), {x}, [ix](detail::TensorImpl<T>& o) {
    auto& g = ix->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis) {
  const auto& s = x.shape();
  const int r = static_cast<int>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("softmax: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (int d = axis + 1; d < r; ++d) inner *= s[d];
  const std::size_t n = s[axis];
  std::vector<T> y(x.numel());
  auto dx = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = dx[base];
      for (std::size_t t = 1; t < n; ++t) mx = std::max(mx, dx[base + t * inner]);
      T total = 0;
      for (std::size_t t = 0; t < n; ++t) total += (y[base + t * inner] = std::exp(dx[base + t * inner] - mx));
      for (std::size_t t = 0; t < n; ++t) y[base + t * inner] /= total;
    }
  ImplPtr<T> ix = x.impl();
  return make_output<T>(s, std::move(y), {x}, [ix, outer, inner, n](detail::TensorImpl<T>& o) {
    auto& g = ix->grad_buffer();
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = a * n * inner + in;
        T dot = 0;
        for (std::size_t t = 0; t < n; ++t) dot += o.grad[base + t * inner] * o.data[base + t * inner];
        for (std::size_t t = 0; t < n; ++t)
          g[base + t * inner] += o.data[base + t * inner] * (o.grad[base + t * inner] - dot);
      }
  });
}

template <typename T>
BasicTensor<T> masked_softmax(const BasicTensor<T>& x, std::span<const std::uint8_t> key_mask) {
  const auto& s = x.shape();
  if (s.size() < 2) throw DimensionError("masked_softmax needs rank >= 2, got " + shape_str(s));
  const std::size_t B = s[0], Lk = s.back();
  if (key_mask.size() != B * Lk)
    throw DimensionError("masked_softmax: mask of " + std::to_string(key_mask.size()) +
                         " entries does not cover [B, Lk] of " + shape_str(s));
  const std::size_t rows = x.numel() / Lk;
  const std::size_t rows_per_batch = rows / B;
  std::vector<T> y(x.numel(), T(0));
  auto dx = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::uint8_t* mask = key_mask.data() + (r / rows_per_batch) * Lk;
    const T* in = dx.data() + r * Lk;
    T* out = y.data() + r * Lk;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < Lk; ++j)
      if (mask[j]) mx = std::max(mx, in[j]);
    if (mx == -std::numeric_limits<T>::infinity()) continue;
    T total = 0;
    for (std::size_t j = 0; j < Lk; ++j)
      if (mask[j]) total += (out[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < Lk; ++j) out[j] /= total;
  }
  ImplPtr<T> ix = x.impl();
  return make_output<T>(s, std::move(y), {x}, [ix, rows, Lk](detail::TensorImpl<T>& o) {
    auto& g = ix->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = o.data.data() + r * Lk;
      const T* gr = o.grad.data() + r * Lk;
      T dot = 0;
      for (std::size_t j = 0; j < Lk; ++j) dot += gr[j] * yr[j];
      T* gx = g.data() + r * Lk;
      for (std::size_t j = 0; j < Lk; ++j) gx[j] += yr[j] * (gr[j] - dot);
    }
  });
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          T eps) {
  const auto& s = x.shape();
  const std::size_t d = s.back();
  if (gamma.numel() != d || beta.numel() != d)
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                         " do not match last axis of " + shape_str(s));
  const std::size_t rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  std::vector<T> y(x.numel());
  auto dx = x.data(), dg = gamma.data(), db = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = dx.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (in[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      y[r * d + j] = h * dg[j] + db[j];
    }
  }
  ImplPtr<T> ix = x.impl(), ig = gamma.impl(), ib = beta.impl();
  return make_output<T>(s, std::move(y), {x, gamma, beta},
                        [ix, ig, ib, xhat, rstd, rows, d](detail::TensorImpl<T>& o) {
                          const T* g = o.grad.data();
                          if (ig->requires_grad) {
                            auto& gg = ig->grad_buffer();
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * (*xhat)[r * d + j];
                          }
                          if (ib->requires_grad) {
                            auto& gb = ib->grad_buffer();
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
                          }
                          if (ix->requires_grad) {
                            auto& gx = ix->grad_buffer();
                            const T inv_d = T(1) / static_cast<T>(d);
                            for (std::size_t r = 0; r < rows; ++r) {
                              T m1 = 0, m2 = 0;
                              for (std::size_t j = 0; j < d; ++j) {
                                const T gh = g[r * d + j] * ig->data[j];
                                m1 += gh;
                                m2 += gh * (*xhat)[r * d + j];
                              }
                              m1 *= inv_d;
                              m2 *= inv_d;
                              for (std::size_t j = 0; j < d; ++j) {
                                const T gh = g[r * d + j] * ig->data[j];
                                gx[r * d + j] += (*rstd)[r] * (gh - m1 - (*xhat)[r * d + j] * m2);
                              }
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> y(x.numel());
  auto dx = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = T(0.5) * dx[i] * (T(1) + std::erf(dx[i] * inv_sqrt2));
  ImplPtr<T> ix = x.impl();
  return make_output<T>(x.shape(), std::move(y), {x}, [ix, inv_sqrt2](detail::TensorImpl<T>& o) {
    auto& g = ix->grad_buffer();
    const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = ix->data[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      g[i] += o.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                             std::int32_t ignore_id) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size())
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  const std::size_t n = logits.dim(0), V = logits.dim(1);
  auto probs = std::make_shared<std::vector<T>>(n * V, T(0));
  auto tg = std::make_shared<std::vector<std::int32_t>>(targets.begin(), targets.end());
  auto dl = logits.data();
  T total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto t = targets[r];
    if (t == ignore_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= V)
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(V) +
                              ")");
    const T* row = dl.data() + r * V;
    T mx = row[0];
    for (std::size_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    T z = 0;
    for (std::size_t j = 0; j < V; ++j) z += ((*probs)[r * V + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < V; ++j) (*probs)[r * V + j] /= z;
    total += mx + std::log(z) - row[t];
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: every target is ignored, mean is undefined");
  const T inv = T(1) / static_cast<T>(count);
  ImplPtr<T> il = logits.impl();
  return make_output<T>(Shape{1}, {total * inv}, {logits},
                        [il, probs, tg, n, V, inv, ignore_id](detail::TensorImpl<T>& o) {
                          auto& g = il->grad_buffer();
                          const T go = o.grad[0] * inv;
                          for (std::size_t r = 0; r < n; ++r) {
                            const auto t = (*tg)[r];
                            if (t == ignore_id) continue;
                            for (std::size_t j = 0; j < V; ++j) g[r * V + j] += go * (*probs)[r * V + j];
                            g[r * V + static_cast<std::size_t>(t)] -= go;
                          }
                        });
}

template <typename T>
BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const T> labels,
                               std::span<const std::uint8_t> valid) {
  const std::size_t n = logits.numel();
  if (labels.size() != n || valid.size() != n)
    throw DimensionError("bce_with_logits: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels / " + std::to_string(valid.size()) + " mask");
  auto dl = logits.data();
  T total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    const T x = dl[i];
    total += std::max(x, T(0)) - x * labels[i] + std::log1p(std::exp(-std::abs(x)));
    ++count;
  }
  if (count == 0) throw std::invalid_argument("bce_with_logits: no valid positions");
  const T inv = T(1) / static_cast<T>(count);
  auto lab = std::make_shared<std::vector<T>>(labels.begin(), labels.end());
  auto msk = std::make_shared<std::vector<std::uint8_t>>(valid.begin(), valid.end());
  ImplPtr<T> il = logits.impl();
  return make_output<T>(Shape{1}, {total * inv}, {logits}, [il, lab, msk, inv](detail::TensorImpl<T>& o) {
    auto& g = il->grad_buffer();
    const T go = o.grad[0] * inv;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(*msk)[i]) continue;
      const T sig = T(1) / (T(1) + std::exp(-il->data[i]));
      g[i] += go * (sig - (*lab)[i]);
    }
  });
}

template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& pred, std::span<const T> targets) {
  const std::size_t n = pred.numel();
  if (targets.size() != n)
    throw DimensionError("mse_loss: prediction " + shape_str(pred.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  auto dp = pred.data();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) total += (dp[i] - targets[i]) * (dp[i] - targets[i]);
  const T inv = T(1) / static_cast<T>(n);
  auto tg = std::make_shared<std::vector<T>>(targets.begin(), targets.end());
  ImplPtr<T> ip = pred.impl();
  return make_output<T>(Shape{1}, {total * inv}, {pred}, [ip, tg, inv](detail::TensorImpl<T>& o) {
    auto& g = ip->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[0] * inv * T(2) * (ip->data[i] - (*tg)[i]);
  });
}

template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const std::int32_t> ids, const Shape& index_shape) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be [V, e], got " + shape_str(table.shape()));
  if (shape_numel(index_shape) != ids.size())
    throw DimensionError("embedding: index shape " + shape_str(index_shape) + " does not hold " +
                         std::to_string(ids.size()) + " ids");
  const std::size_t V = table.dim(0), e = table.dim(1);
  auto dt = table.data();
  std::vector<T> out(ids.size() * e);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V)
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                              std::to_string(V));
    std::copy_n(dt.data() + static_cast<std::size_t>(ids[i]) * e, e, out.data() + i * e);
  }
  Shape shape = index_shape;
  shape.push_back(e);
  auto idx = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
  ImplPtr<T> it = table.impl();
  return make_output<T>(std::move(shape), std::move(out), {table}, [it, idx, e](detail::TensorImpl<T>& o) {
    auto& g = it->grad_buffer();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      T* row = g.data() + static_cast<std::size_t>((*idx)[i]) * e;
      const T* go = o.grad.data() + i * e;
      for (std::size_t j = 0; j < e; ++j) row[j] += go[j];
    }
  });
}

template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::span<const std::size_t> rows) {
  const std::size_t w = x.shape().back();
  const std::size_t R = x.numel() / w;
  if (rows.empty()) throw DimensionError("gather_rows: no rows selected from " + shape_str(x.shape()));
  std::vector<T> out(rows.size() * w);
  auto dx = x.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= R)
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) + " outside " + std::to_string(R));
    std::copy_n(dx.data() + rows[i] * w, w, out.data() + i * w);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  ImplPtr<T> ix = x.impl();
  return make_output<T>(Shape{rows.size(), w}, std::move(out), {x}, [ix, idx, w](detail::TensorImpl<T>& o) {
    auto& g = ix->grad_buffer();
    for (std::size_t i = 0; i < idx->size(); ++i)
      for (std::size_t j = 0; j < w; ++j) g[(*idx)[i] * w + j] += o.grad[i * w + j];
  });
}

template <typename T>
BasicTensor<T> relative_gather(const BasicTensor<T>& x, std::size_t k, RelativeGather mode) {
  const auto& s = x.shape();
  if (s.size() < 2 || s.back() != 2 * k)
    throw DimensionError("relative_gather: expected [.., L, " + std::to_string(2 * k) + "], got " + shape_str(s));
  const std::size_t L = s[s.size() - 2], W = 2 * k;
  const std::size_t outer = x.numel() / (L * W);
  // Flat source index within one [L, 2k] block for every (i, j).
  auto src = std::make_shared<std::vector<std::size_t>>(L * L);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j)
      (*src)[i * L + j] = mode == RelativeGather::kContentToPosition ? i * W + relative_distance(i, j, k)
                                                                     : j * W + relative_distance(j, i, k);
  Shape out_shape(s.begin(), s.end() - 1);
  out_shape.push_back(L);
  std::vector<T> out(outer * L * L);
  auto dx = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t p = 0; p < L * L; ++p) out[o * L * L + p] = dx[o * L * W + (*src)[p]];
  ImplPtr<T> ix = x.impl();
  return make_output<T>(std::move(out_shape), std::move(out), {x}, [ix, src, outer, L, W](detail::TensorImpl<T>& o) {
    auto& g = ix->grad_buffer();
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t p = 0; p < L * L; ++p) g[a * L * W + (*src)[p]] += o.grad[a * L * L + p];
  });
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  auto factor = std::make_shared<std::vector<T>>(x.numel());
  for (auto& f : *factor) f = rng.uniform() < p ? T(0) : keep_scale;
  std::vector<T> out(x.numel());
  auto dx = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[i] * (*factor)[i];
  ImplPtr<T> ix = x.impl();
  return make_output<T>(x.shape(), std::move(out), {x}, [ix, factor](detail::TensorImpl<T>& o) {
    auto& g = ix->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * (*factor)[i];
  });
}

#define SMALLBENCH_INSTANTIATE_OPS(T)                                                                           \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                    \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                                    \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                    \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                      \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                           \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                          \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> permute(const BasicTensor<T>&, const std::vector<std::size_t>&);                      \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                                \
  template BasicTensor<T> softmax(const BasicTensor<T>&, int);                                                  \
  template BasicTensor<T> masked_softmax(const BasicTensor<T>&, std::span<const std::uint8_t>);                 \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, T);   \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                                          \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const std::int32_t>, std::int32_t);    \
  template BasicTensor<T> bce_with_logits(const BasicTensor<T>&, std::span<const T>,                            \
                                          std::span<const std::uint8_t>);                                       \
  template BasicTensor<T> mse_loss(const BasicTensor<T>&, std::span<const T>);                                  \
  template BasicTensor<T> embedding(const BasicTensor<T>&, std::span<const std::int32_t>, const Shape&);        \
  template BasicTensor<T> gather_rows(const BasicTensor<T>&, std::span<const std::size_t>);                     \
  template BasicTensor<T> relative_gather(const BasicTensor<T>&, std::size_t, RelativeGather);                  \
  template BasicTensor<T> dropout(const BasicTensor<T>&, double, Rng&);

SMALLBENCH_INSTANTIATE_OPS(float)
SMALLBENCH_INSTANTIATE_OPS(double)

}  // namespace smallbench
