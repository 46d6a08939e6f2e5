#include "smallbench/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace smallbench {

std::string_view to_string(AttentionKind kind) {
  return kind == AttentionKind::kAbsolute ? "absolute" : "disentangled";
}

std::string_view to_string(Objective objective) { return objective == Objective::kMlm ? "mlm" : "electra"; }

AttentionKind parse_attention_kind(std::string_view text) {
  if (text == "absolute") return AttentionKind::kAbsolute;
  if (text == "disentangled") return AttentionKind::kDisentangled;
  throw std::invalid_argument("unknown attention kind '" + std::string(text) + "' (expected absolute|disentangled)");
}

Objective parse_objective(std::string_view text) {
  if (text == "mlm") return Objective::kMlm;
  if (text == "electra") return Objective::kElectra;
  throw std::invalid_argument("unknown objective '" + std::string(text) + "' (expected mlm|electra)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("model config: ") + name + " must be positive");
  };
  positive(num_layers, "num_layers");
  positive(hidden, "hidden");
  positive(heads, "heads");
  positive(ffn_inner, "ffn_inner");
  positive(embedding_dim, "embedding_dim");
  positive(max_len, "max_len");
  positive(max_relative_distance, "max_relative_distance");
  if (vocab_size <= static_cast<std::size_t>(kNumSpecialTokens))
    throw std::invalid_argument("model config: vocab_size must exceed the 5 special tokens");
  if (hidden % heads != 0)
    throw std::invalid_argument("model config: hidden " + std::to_string(hidden) + " not divisible by heads " +
                                std::to_string(heads));
  if (!(generator_fraction > 0.0 && generator_fraction <= 1.0))
    throw std::invalid_argument("model config: generator_fraction must lie in (0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("model config: dropout must lie in [0, 1)");
  if (!(lambda_rtd >= 0.0)) throw std::invalid_argument("model config: lambda_rtd must be >= 0");
  if (!(layer_norm_eps >= 0.0)) throw std::invalid_argument("model config: layer_norm_eps must be >= 0");
}

ModelConfig ModelConfig::generator() const {
  ModelConfig g = *this;
  auto scaled = [&](std::size_t v) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(v) * generator_fraction)));
  };
  g.hidden = scaled(hidden);
  g.ffn_inner = scaled(ffn_inner);
  g.heads = scaled(heads);
  while (g.hidden % g.heads != 0) --g.heads;
  g.objective = Objective::kMlm;
  return g;
}

std::string ModelConfig::to_record() const {
  std::ostringstream os;
  os.precision(17);
  os << "num_layers=" << num_layers << '\n'
     << "hidden=" << hidden << '\n'
     << "heads=" << heads << '\n'
     << "ffn_inner=" << ffn_inner << '\n'
     << "embedding_dim=" << embedding_dim << '\n'
     << "vocab_size=" << vocab_size << '\n'
     << "max_len=" << max_len << '\n'
     << "max_relative_distance=" << max_relative_distance << '\n'
     << "attention=" << to_string(attention) << '\n'
     << "dropout=" << dropout << '\n'
     << "generator_fraction=" << generator_fraction << '\n'
     << "lambda_rtd=" << lambda_rtd << '\n'
     << "objective=" << to_string(objective) << '\n'
     << "layer_norm_eps=" << layer_norm_eps << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_record(std::string_view record) {
  ModelConfig c;
  std::istringstream is{std::string(record)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("model config record: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    auto as_size = [&] { return static_cast<std::size_t>(std::stoull(value)); };
    if (key == "num_layers") c.num_layers = as_size();
    else if (key == "hidden") c.hidden = as_size();
    else if (key == "heads") c.heads = as_size();
    else if (key == "ffn_inner") c.ffn_inner = as_size();
    else if (key == "embedding_dim") c.embedding_dim = as_size();
    else if (key == "vocab_size") c.vocab_size = as_size();
    else if (key == "max_len") c.max_len = as_size();
    else if (key == "max_relative_distance") c.max_relative_distance = as_size();
    else if (key == "attention") c.attention = parse_attention_kind(value);
    else if (key == "dropout") c.dropout = std::stod(value);
    else if (key == "generator_fraction") c.generator_fraction = std::stod(value);
    else if (key == "lambda_rtd") c.lambda_rtd = std::stod(value);
    else if (key == "objective") c.objective = parse_objective(value);
    else if (key == "layer_norm_eps") c.layer_norm_eps = std::stod(value);
    else throw std::invalid_argument("model config record: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

template <typename T>
const BasicTensor<T>& ParameterStore<T>::add(std::string name, BasicTensor<T> tensor) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

template <typename T>
const BasicTensor<T>* ParameterStore<T>::find(std::string_view name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return &t;
  return nullptr;
}

template <typename T>
const BasicTensor<T>& ParameterStore<T>::get(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

template <typename T>
std::size_t ParameterStore<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

namespace {

template <typename T>
BasicTensor<T> truncated_normal(Shape shape, Rng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.truncated_normal(0.02));
  return BasicTensor<T>(std::move(shape), std::move(v));
}

}  // namespace

template <typename T>
Linear<T> init_linear(std::size_t in, std::size_t out, Rng& rng, ParameterStore<T>& store, const std::string& name) {
  Linear<T> l;
  l.weight = store.add(name + ".weight", truncated_normal<T>({in, out}, rng));
  l.bias = store.add(name + ".bias", BasicTensor<T>::zeros({out}));
  return l;
}

template <typename T>
LayerNormParams<T> init_layer_norm(std::size_t width, ParameterStore<T>& store, const std::string& name) {
  LayerNormParams<T> p;
  p.gamma = store.add(name + ".gamma", BasicTensor<T>::full({width}, T(1)));
  p.beta = store.add(name + ".beta", BasicTensor<T>::zeros({width}));
  return p;
}

template <typename T>
EmbeddingTables<T> init_embeddings(const ModelConfig& config, Rng& rng, ParameterStore<T>& store) {
  config.validate();
  const std::size_t e = config.embedding_dim;
  EmbeddingTables<T> t;
  t.token = store.add("embeddings.token.weight", truncated_normal<T>({config.vocab_size, e}, rng));
  t.segment = store.add("embeddings.segment.weight", truncated_normal<T>({2, e}, rng));
  if (config.attention == AttentionKind::kAbsolute)
    t.position = store.add("embeddings.position.weight", truncated_normal<T>({config.max_len, e}, rng));
  else
    t.relative =
        store.add("embeddings.relative.weight", truncated_normal<T>({2 * config.max_relative_distance, e}, rng));
  return t;
}

template <typename T>
EncoderWeights<T> init_encoder(const ModelConfig& config, const EmbeddingTables<T>& embeddings, Rng& rng,
                               ParameterStore<T>& store, const std::string& prefix) {
  config.validate();
  const std::size_t H = config.hidden, F = config.ffn_inner;
  EncoderWeights<T> w;
  w.embeddings = embeddings;
  w.projection = init_linear<T>(config.embedding_dim, H, rng, store, prefix + ".projection");
  w.embedding_norm = init_layer_norm<T>(H, store, prefix + ".embedding_norm");
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    const std::string p = prefix + ".layer." + std::to_string(i);
    LayerWeights<T> l;
    l.query = init_linear<T>(H, H, rng, store, p + ".attention.query");
    l.key = init_linear<T>(H, H, rng, store, p + ".attention.key");
    l.value = init_linear<T>(H, H, rng, store, p + ".attention.value");
    l.output = init_linear<T>(H, H, rng, store, p + ".attention.output");
    if (config.attention == AttentionKind::kDisentangled) {
      l.position_query = init_linear<T>(H, H, rng, store, p + ".attention.position_query");
      l.position_key = init_linear<T>(H, H, rng, store, p + ".attention.position_key");
    }
    l.attention_norm = init_layer_norm<T>(H, store, p + ".attention_norm");
    l.ffn_in = init_linear<T>(H, F, rng, store, p + ".ffn.in");
    l.ffn_out = init_linear<T>(F, H, rng, store, p + ".ffn.out");
    l.ffn_norm = init_layer_norm<T>(H, store, p + ".ffn_norm");
    w.layers.push_back(std::move(l));
  }
  return w;
}

namespace {

template <typename T>
void check_hidden(const BasicTensor<T>& hidden, std::span<const std::uint8_t> pad_mask, std::size_t heads) {
  if (hidden.rank() != 3)
    throw DimensionError("attention: hidden states must be [B, L, H], got " + shape_str(hidden.shape()));
  if (heads == 0 || hidden.dim(2) % heads != 0)
    throw DimensionError("attention: hidden width " + std::to_string(hidden.dim(2)) + " not divisible into " +
                         std::to_string(heads) + " heads");
  if (pad_mask.size() != hidden.dim(0) * hidden.dim(1))
    throw DimensionError("attention: pad mask of " + std::to_string(pad_mask.size()) + " entries for hidden " +
                         shape_str(hidden.shape()));
}

// [B, L, H] -> [B, heads, L, d]
template <typename T>
BasicTensor<T> split_heads(const BasicTensor<T>& x, std::size_t heads) {
  const std::size_t B = x.dim(0), L = x.dim(1), d = x.dim(2) / heads;
  return permute(reshape(x, {B, L, heads, d}), {0, 2, 1, 3});
}

// [2k, H] -> [heads, 2k, d]
template <typename T>
BasicTensor<T> split_position_heads(const BasicTensor<T>& x, std::size_t heads) {
  const std::size_t R = x.dim(0), d = x.dim(1) / heads;
  return permute(reshape(x, {R, heads, d}), {1, 0, 2});
}

template <typename T>
BasicTensor<T> attend(const BasicTensor<T>& scores, const BasicTensor<T>& values, const LayerWeights<T>& layer,
                      std::span<const std::uint8_t> pad_mask, const DropoutContext& drop) {
  auto probs = drop.apply(masked_softmax(scores, pad_mask));
  auto ctx = matmul(probs, values);  // [B, h, L, d]
  const std::size_t B = ctx.dim(0), h = ctx.dim(1), L = ctx.dim(2), d = ctx.dim(3);
  return layer.output(reshape(permute(ctx, {0, 2, 1, 3}), {B, L, h * d}));
}

}  // namespace

template <typename T>
BasicTensor<T> absolute_attention(const BasicTensor<T>& hidden, const LayerWeights<T>& layer,
                                  std::span<const std::uint8_t> pad_mask, std::size_t heads,
                                  const DropoutContext& drop) {
  check_hidden(hidden, pad_mask, heads);
  const std::size_t d = hidden.dim(2) / heads;
  auto q = split_heads(layer.query(hidden), heads);
  auto k = split_heads(layer.key(hidden), heads);
  auto v = split_heads(layer.value(hidden), heads);
  auto scores = scale(matmul(q, transpose(k)), T(1) / std::sqrt(static_cast<T>(d)));
  return attend(scores, v, layer, pad_mask, drop);
}

template <typename T>
BasicTensor<T> disentangled_attention(const BasicTensor<T>& hidden, const BasicTensor<T>& relative,
                                      const LayerWeights<T>& layer, std::span<const std::uint8_t> pad_mask,
                                      std::size_t heads, std::size_t k, const DropoutContext& drop) {
  check_hidden(hidden, pad_mask, heads);
  if (relative.rank() != 2 || relative.dim(0) != 2 * k || relative.dim(1) != hidden.dim(2))
    throw DimensionError("disentangled attention: relative table " + shape_str(relative.shape()) +
                         " does not match [2k, H] = [" + std::to_string(2 * k) + ", " +
                         std::to_string(hidden.dim(2)) + "]");
  const std::size_t d = hidden.dim(2) / heads;
  auto qc = split_heads(layer.query(hidden), heads);
  auto kc = split_heads(layer.key(hidden), heads);
  auto vc = split_heads(layer.value(hidden), heads);
  auto qr = split_position_heads(layer.position_query(relative), heads);
  auto kr = split_position_heads(layer.position_key(relative), heads);

  auto c2c = matmul(qc, transpose(kc));
  auto c2p = relative_gather(matmul(qc, transpose(kr)), k, RelativeGather::kContentToPosition);
  auto p2c = relative_gather(matmul(kc, transpose(qr)), k, RelativeGather::kPositionToContent);
  auto scores = scale(add(add(c2c, c2p), p2c), T(1) / std::sqrt(static_cast<T>(3 * d)));
  return attend(scores, vc, layer, pad_mask, drop);
}

template <typename T>
BasicTensor<T> encoder_forward(const ModelConfig& config, const EncoderWeights<T>& weights,
                               const TokenBatch& batch, const DropoutContext& drop) {
  const std::size_t B = batch.batch, L = batch.length;
  if (batch.ids.size() != B * L) throw DimensionError("encoder_forward: malformed token batch");
  if (L > config.max_len)
    throw DimensionError("encoder_forward: sequence length " + std::to_string(L) + " exceeds max_len " +
                         std::to_string(config.max_len));
  for (auto id : batch.ids)
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size)
      throw std::out_of_range("encoder_forward: token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(config.vocab_size));
  const Shape index_shape{B, L};
  auto x = add(embedding(weights.embeddings.token, batch.ids, index_shape),
               embedding(weights.embeddings.segment, batch.segment_ids, index_shape));
  if (config.attention == AttentionKind::kAbsolute) {
    std::vector<std::int32_t> positions(B * L);
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<std::int32_t>(i % L);
    x = add(x, embedding(weights.embeddings.position, positions, index_shape));
  }
  const T eps = static_cast<T>(config.layer_norm_eps);
  x = layer_norm(weights.projection(x), weights.embedding_norm.gamma, weights.embedding_norm.beta, eps);
  x = drop.apply(x);

  BasicTensor<T> relative;
  if (config.attention == AttentionKind::kDisentangled) relative = weights.projection(weights.embeddings.relative);

  for (const auto& layer : weights.layers) {
    auto attn = config.attention == AttentionKind::kDisentangled
                    ? disentangled_attention(x, relative, layer, batch.pad_mask, config.heads,
                                             config.max_relative_distance, drop)
                    : absolute_attention(x, layer, batch.pad_mask, config.heads, drop);
    x = layer_norm(add(x, drop.apply(attn)), layer.attention_norm.gamma, layer.attention_norm.beta, eps);
    auto ffn = layer.ffn_out(gelu(layer.ffn_in(x)));
    x = layer_norm(add(x, drop.apply(ffn)), layer.ffn_norm.gamma, layer.ffn_norm.beta, eps);
  }
  return x;
}

namespace {

std::size_t linear_size(std::size_t in, std::size_t out) { return in * out + out; }

std::size_t stem_size(const ModelConfig& c) { return linear_size(c.embedding_dim, c.hidden) + 2 * c.hidden; }

std::size_t layer_size(const ModelConfig& c) {
  const std::size_t H = c.hidden, F = c.ffn_inner;
  std::size_t n = 4 * linear_size(H, H) + 2 * H + linear_size(H, F) + linear_size(F, H) + 2 * H;
  if (c.attention == AttentionKind::kDisentangled) n += 2 * linear_size(H, H);
  return n;
}

std::size_t mlm_head_size(const ModelConfig& c) {
  return linear_size(c.hidden, c.embedding_dim) + 2 * c.embedding_dim + c.vocab_size;
}

}  // namespace

ParameterCount count_parameters(const ModelConfig& config) {
  config.validate();
  ParameterCount p;
  const std::size_t e = config.embedding_dim;
  p.embeddings = config.vocab_size * e + 2 * e +
                 (config.attention == AttentionKind::kAbsolute ? config.max_len * e
                                                               : 2 * config.max_relative_distance * e);
  p.encoder_stem = stem_size(config);
  p.per_layer = layer_size(config);
  p.layers = p.per_layer * config.num_layers;
  p.head = config.objective == Objective::kElectra ? linear_size(config.hidden, config.hidden) + linear_size(config.hidden, 1)
                                                   : mlm_head_size(config);
  return p;
}

std::size_t count_parameters_total(const ModelConfig& config) { return count_parameters(config).total(); }

std::size_t count_generator_parameters(const ModelConfig& config) {
  if (config.objective != Objective::kElectra) return 0;
  const ModelConfig g = config.generator();
  return stem_size(g) + layer_size(g) * g.num_layers + mlm_head_size(g);
}

#define SMALLBENCH_INSTANTIATE_ENCODER(T)                                                                     \
  template class ParameterStore<T>;                                                                           \
  template Linear<T> init_linear(std::size_t, std::size_t, Rng&, ParameterStore<T>&, const std::string&);     \
  template LayerNormParams<T> init_layer_norm(std::size_t, ParameterStore<T>&, const std::string&);           \
  template EmbeddingTables<T> init_embeddings(const ModelConfig&, Rng&, ParameterStore<T>&);                  \
  template EncoderWeights<T> init_encoder(const ModelConfig&, const EmbeddingTables<T>&, Rng&,                \
                                          ParameterStore<T>&, const std::string&);                            \
  template BasicTensor<T> absolute_attention(const BasicTensor<T>&, const LayerWeights<T>&,                   \
                                             std::span<const std::uint8_t>, std::size_t, const DropoutContext&); \
  template BasicTensor<T> disentangled_attention(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                                 const LayerWeights<T>&, std::span<const std::uint8_t>,       \
                                                 std::size_t, std::size_t, const DropoutContext&);            \
  template BasicTensor<T> encoder_forward(const ModelConfig&, const EncoderWeights<T>&, const TokenBatch&,    \
                                          const DropoutContext&);

SMALLBENCH_INSTANTIATE_ENCODER(float)
SMALLBENCH_INSTANTIATE_ENCODER(double)

}  // namespace smallbench
