#include "smallbench/optim.hpp"

#include <cmath>
#include <string>

namespace smallbench {

template <typename T>
OptimState<T> OptimState<T>::for_store(const ParameterStore<T>& store, AdamWHyper hyper) {
  OptimState<T> s;
  s.hyper = hyper;
  for (const auto& [name, t] : store.entries()) {
    s.m.emplace_back(t.numel(), T(0));
    s.v.emplace_back(t.numel(), T(0));
  }
  return s;
}

Schedule Schedule::with_warmup_fraction(double peak_lr, std::size_t total_steps, double fraction) {
  Schedule s;
  s.peak_lr = peak_lr;
  s.total_steps = total_steps;
  s.warmup_steps = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(total_steps)));
  if (total_steps > 0 && s.warmup_steps >= total_steps) s.warmup_steps = total_steps - 1;
  return s;
}

void Schedule::validate() const {
  if (!(peak_lr > 0.0)) throw std::invalid_argument("schedule: peak learning rate must be positive");
  if (warmup_steps >= total_steps)
    throw std::invalid_argument("schedule: warmup (" + std::to_string(warmup_steps) + ") must be below total steps (" +
                                std::to_string(total_steps) + ")");
}

double lr_at_step(std::size_t step, const Schedule& schedule) {
  schedule.validate();
  if (step > schedule.total_steps)
    throw std::out_of_range("lr_at_step: step " + std::to_string(step) + " beyond total " +
                            std::to_string(schedule.total_steps));
  if (step < schedule.warmup_steps)
    return schedule.peak_lr * static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
  return schedule.peak_lr * static_cast<double>(schedule.total_steps - step) /
         static_cast<double>(schedule.total_steps - schedule.warmup_steps);
}

LayerwiseRates layerwise_lrs(double base_lr, double decay, std::size_t num_layers) {
  if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("layer-wise decay must lie in (0, 1]");
  LayerwiseRates r;
  r.head = base_lr;
  r.layers.resize(num_layers);
  double rate = base_lr;
  for (std::size_t i = num_layers; i-- > 0;) {
    r.layers[i] = rate;
    rate *= decay;
  }
  r.embeddings = rate;
  return r;
}

template <typename T>
std::vector<double> layerwise_scales(const ParameterStore<T>& store, double decay, std::size_t num_layers) {
  const LayerwiseRates rates = layerwise_lrs(1.0, decay, num_layers);
  std::vector<double> scales;
  scales.reserve(store.entries().size());
  static constexpr std::string_view kLayerPrefix = "encoder.layer.";
  for (const auto& [name, t] : store.entries()) {
    if (name.find("head") != std::string::npos) {
      scales.push_back(rates.head);
    } else if (name.starts_with(kLayerPrefix)) {
      const std::size_t i = std::stoul(name.substr(kLayerPrefix.size()));
      if (i >= num_layers) throw std::out_of_range("parameter '" + name + "' names a layer beyond the stack");
      scales.push_back(rates.layers[i]);
    } else {
      scales.push_back(rates.embeddings);
    }
  }
  return scales;
}

bool applies_weight_decay(std::string_view name) {
  return !(name.ends_with(".bias") || name.ends_with(".gamma") || name.ends_with(".beta") ||
           name.ends_with("output_bias"));
}

template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t step,
                  double lr, const AdamWHyper& hyper, bool decay) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
    throw DimensionError("adamw_update: parameter, grad and moment sizes differ");
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(hyper.beta1), b2 = static_cast<T>(hyper.beta2);
  const T step_size = static_cast<T>(lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(hyper.eps);
  const T wd = decay ? static_cast<T>(lr * hyper.weight_decay) : T(0);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    param[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps) + wd * param[i];
  }
}

template <typename T>
void adamw_step(ParameterStore<T>& params, OptimState<T>& state, double lr, std::span<const double> lr_scale) {
  auto& entries = params.entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size())
    throw DimensionError("adamw_step: optimizer state does not match the parameter set");
  if (!lr_scale.empty() && lr_scale.size() != entries.size())
    throw DimensionError("adamw_step: learning-rate scales do not match the parameter set");
  for (const auto& [name, t] : entries) {
    if (!t.has_grad()) continue;
    for (T g : t.grad())
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient in parameter '" + name + "'; step aborted");
  }
  ++state.step;
  std::vector<T> zeros;
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& [name, t] = entries[p];
    if (state.m[p].size() != t.numel()) throw DimensionError("adamw_step: moment shape mismatch for '" + name + "'");
    std::span<const T> grad;
    if (t.has_grad()) {
      grad = t.grad();
    } else {
      zeros.assign(t.numel(), T(0));
      grad = zeros;
    }
    const double rate = lr * (lr_scale.empty() ? 1.0 : lr_scale[p]);
    adamw_update<T>(t.mutable_data(), grad, state.m[p], state.v[p], state.step, rate, state.hyper,
                    applies_weight_decay(name));
  }
}

template <typename T>
double global_grad_norm(const ParameterStore<T>& params) {
  double total = 0.0;
  for (const auto& [name, t] : params.entries())
    if (t.has_grad())
      for (T g : t.grad()) total += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(total);
}

template <typename T>
double clip_grad_norm(ParameterStore<T>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (std::isfinite(norm) && norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& [name, t] : params.entries())
      if (t.has_grad())
        for (T& g : t.mutable_grad()) g *= factor;
  }
  return norm;
}

#define SMALLBENCH_INSTANTIATE_OPTIM(T)                                                                   \
  template struct OptimState<T>;                                                                          \
  template std::vector<double> layerwise_scales(const ParameterStore<T>&, double, std::size_t);           \
  template void adamw_update(std::span<T>, std::span<const T>, std::span<T>, std::span<T>, std::uint64_t, \
                             double, const AdamWHyper&, bool);                                            \
  template void adamw_step(ParameterStore<T>&, OptimState<T>&, double, std::span<const double>);          \
  template double global_grad_norm(const ParameterStore<T>&);                                             \
  template double clip_grad_norm(ParameterStore<T>&, double);

SMALLBENCH_INSTANTIATE_OPTIM(float)
SMALLBENCH_INSTANTIATE_OPTIM(double)

}  // namespace smallbench
