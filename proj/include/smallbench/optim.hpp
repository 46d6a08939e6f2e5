#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "smallbench/encoder.hpp"

namespace smallbench {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.01;
};

/// Per-parameter moments, index-aligned with a ParameterStore.
template <typename T>
struct OptimState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
  AdamWHyper hyper;

  /// Zero moments shaped like every parameter of the store.
  static OptimState for_store(const ParameterStore<T>& store, AdamWHyper hyper = {});
};

/// Linear warmup 0 -> peak_lr over warmup_steps, then linear decay to 0 at
/// total_steps.
struct Schedule {
  double peak_lr = 5e-4;
  std::size_t warmup_steps = 10000;
  std::size_t total_steps = 1000000;

  /// Fine-tuning form: warmup is round(fraction * total).
  static Schedule with_warmup_fraction(double peak_lr, std::size_t total_steps, double fraction);
  void validate() const;
};

/// Throws std::out_of_range when step > total_steps.
double lr_at_step(std::size_t step, const Schedule& schedule);

/// Layer-wise decayed rates for fine-tuning. The head and the top layer get
/// base_lr, each lower layer one more factor of `decay`, embeddings
/// base_lr * decay^num_layers.
struct LayerwiseRates {
  double head = 0.0;
  std::vector<double> layers;  // index i = encoder layer i (0 = bottom)
  double embeddings = 0.0;
};

LayerwiseRates layerwise_lrs(double base_lr, double decay, std::size_t num_layers);

/// Per-parameter multipliers of base_lr following the naming scheme of
/// PretrainModel / ClassifierModel: "*head*" -> 1, "encoder.layer.<i>.*" ->
/// decay^(N-1-i), everything else (embeddings, projection, embedding norm)
/// -> decay^N.
template <typename T>
std::vector<double> layerwise_scales(const ParameterStore<T>& store, double decay, std::size_t num_layers);

/// Biases, layer-norm parameters and output biases are not decayed.
bool applies_weight_decay(std::string_view parameter_name);

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One bias-corrected AdamW update of a single tensor with decoupled
/// decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p). `step` is the
/// 1-based update count after incrementing.
template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t step,
                  double lr, const AdamWHyper& hyper, bool decay);

/// Advances state.step and updates every parameter of the store. All grads
/// are checked first; a non-finite one aborts the step untouched with
/// NonFiniteGradient naming the parameter. Parameters without a grad are
/// treated as having zero grad. `lr_scale` (optional) multiplies lr per
/// parameter.
template <typename T>
void adamw_step(ParameterStore<T>& params, OptimState<T>& state, double lr, std::span<const double> lr_scale = {});

/// Global L2 norm over all grads (accumulated in double, fixed order).
template <typename T>
double global_grad_norm(const ParameterStore<T>& params);

/// Scales grads so the global norm is at most max_norm. Returns the norm
/// before clipping.
template <typename T>
double clip_grad_norm(ParameterStore<T>& params, double max_norm);

}  // namespace smallbench
