#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ssltsc/core/ops.hpp"
#include "ssltsc/core/random.hpp"
#include "ssltsc/errors.hpp"

namespace ssltsc::model {

using nn::Parameter;
using nn::Var;

enum class ModelKind { fcn, ladder, fcn_forecast };

inline std::string_view kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::fcn: return "fcn";
    case ModelKind::ladder: return "ladder";
    case ModelKind::fcn_forecast: return "fcn+forecast";
  }
  return "unknown";
}

inline ModelKind kind_from_name(std::string_view s) {
  if (s == "fcn") return ModelKind::fcn;
  if (s == "ladder") return ModelKind::ladder;
  if (s == "fcn+forecast") return ModelKind::fcn_forecast;
  throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

inline constexpr std::size_t kMinLength = 8;
inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

/// Shape descriptor. Everything about parameter shapes follows from it.
struct Architecture {
  ModelKind kind = ModelKind::fcn;
  std::size_t channels = 1;
  std::size_t length = kMinLength;
  std::size_t n_classes = 2;
  std::array<std::size_t, 3> filters{128, 256, 128};
  std::array<std::size_t, 3> kernels{8, 5, 3};
  double horizon = 0.0;    // forecast horizon as a fraction of length
  double noise_std = 0.0;  // Ladder corruption

  std::size_t features() const { return filters[2]; }
  std::size_t forecast_steps() const {
    return static_cast<std::size_t>(std::ceil(horizon * static_cast<double>(length) - 1e-9));
  }
  /// Channel count of activation layer l (0 = input).
  std::size_t layer_channels(std::size_t l) const { return l == 0 ? channels : filters[l - 1]; }

  void validate() const {
    if (channels < 1 || n_classes < 1) throw ConfigError("model: channels and n_classes must be >= 1");
    if (length < kMinLength) {
      throw ConfigError("model: series length " + std::to_string(length) + " is shorter than the largest kernel (8)");
    }
    for (auto f : filters) {
      if (f < 1) throw ConfigError("model: filter counts must be >= 1");
    }
    if (kind == ModelKind::fcn_forecast && forecast_steps() < 1) throw ConfigError("model: forecast horizon must cover >= 1 step");
    if (noise_std < 0) throw ConfigError("model: noise_std must be >= 0");
  }
};

template <typename T>
struct ConvBlock {
  Parameter<T> weight;  // (cout, cin, k)
  Parameter<T> bias;    // (cout)
  Parameter<T> gamma;   // (cout)
  Parameter<T> beta;    // (cout)
  std::vector<T> running_mean;
  std::vector<T> running_var;
};

template <typename T>
struct DecoderLayer {
  Parameter<T> weight;       // (c_l, c_{l+1}, k)
  Parameter<T> bias;         // (c_l)
};

/// Mirrored decoder: a top projection from class probabilities back to the
/// last encoder layer, then same-length convolutions down to the input.
template <typename T>
struct LadderDecoder {
  Parameter<T> top_weight;                     // (n_classes, c_3)
  Parameter<T> top_bias;                       // (c_3)
  std::array<DecoderLayer<T>, 3> layers;       // layers[l] produces activation layer l
  std::array<Parameter<T>, 4> combinators;     // (c_l, 10) per activation layer
};

template <typename T>
struct ForecastHead {
  Parameter<T> weight;  // (features, c * steps)
  Parameter<T> bias;    // (c * steps)
};

/// FCN classifier with optional Ladder decoder or forecasting head.
template <typename T>
struct Model {
  Architecture arch;
  std::array<ConvBlock<T>, 3> blocks;
  Parameter<T> head_weight;  // (features, n_classes)
  Parameter<T> head_bias;    // (n_classes)
  std::optional<LadderDecoder<T>> decoder;
  std::optional<ForecastHead<T>> forecast;

  /// Stable-order list of every trainable tensor.
  std::vector<std::pair<std::string, Parameter<T>*>> named_parameters() {
    std::vector<std::pair<std::string, Parameter<T>*>> out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "block" + std::to_string(i + 1) + ".";
      out.emplace_back(p + "weight", &blocks[i].weight);
      out.emplace_back(p + "bias", &blocks[i].bias);
      out.emplace_back(p + "gamma", &blocks[i].gamma);
      out.emplace_back(p + "beta", &blocks[i].beta);
    }
    out.emplace_back("head.weight", &head_weight);
    out.emplace_back("head.bias", &head_bias);
    if (decoder) {
      out.emplace_back("decoder.top.weight", &decoder->top_weight);
      out.emplace_back("decoder.top.bias", &decoder->top_bias);
      for (std::size_t l = 0; l < 3; ++l) {
        out.emplace_back("decoder.layer" + std::to_string(l) + ".weight", &decoder->layers[l].weight);
        out.emplace_back("decoder.layer" + std::to_string(l) + ".bias", &decoder->layers[l].bias);
      }
      for (std::size_t l = 0; l < 4; ++l) {
        out.emplace_back("decoder.combinator" + std::to_string(l), &decoder->combinators[l]);
      }
    }
    if (forecast) {
      out.emplace_back("forecast.weight", &forecast->weight);
      out.emplace_back("forecast.bias", &forecast->bias);
    }
    return out;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
};

namespace detail {

template <typename T>
Parameter<T> uniform_param(Shape shape, double bound, Rng& rng) {
  Tensor<T> v(std::move(shape));
  std::uniform_real_distribution<double> d(-bound, bound);
  for (auto& x : v.values()) x = static_cast<T>(d(rng));
  return Parameter<T>(std::move(v));
}

template <typename T>
Parameter<T> const_param(Shape shape, T value) {
  return Parameter<T>(Tensor<T>(std::move(shape), value));
}

/// Combinator parameters with v(u) = 1 and mu(u) = 0: the decoder output
/// starts as the lateral activation.
template <typename T>
Parameter<T> identity_combinator(std::size_t channels) {
  Tensor<T> a(Shape{channels, 10});
  for (std::size_t c = 0; c < channels; ++c) {
    a[c * 10 + 1] = T{1};  // a2
    a[c * 10 + 6] = T{1};  // a7
    a[c * 10 + 9] = T{1};  // a10
  }
  return Parameter<T>(std::move(a));
}

}  // namespace detail

/// Allocates and draws every tensor for `arch`: fan-in scaled uniform
/// weights and biases, BN scale 1 and shift 0, identity Ladder combinators.
template <typename U>
Model<U> build_model(const Architecture& arch, Rng& rng) {
  Model<U> m;
  m.arch = arch;
  for (std::size_t b = 0; b < 3; ++b) {
    const std::size_t cin = arch.layer_channels(b), cout = arch.filters[b], k = arch.kernels[b];
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k));
    m.blocks[b].weight = detail::uniform_param<U>(Shape{cout, cin, k}, bound, rng);
    m.blocks[b].bias = detail::uniform_param<U>(Shape{cout}, bound, rng);
    m.blocks[b].gamma = detail::const_param<U>(Shape{cout}, U{1});
    m.blocks[b].beta = detail::const_param<U>(Shape{cout}, U{0});
    m.blocks[b].running_mean.assign(cout, U{0});
    m.blocks[b].running_var.assign(cout, U{1});
  }
  const double hb = 1.0 / std::sqrt(static_cast<double>(arch.features()));
  m.head_weight = detail::uniform_param<U>(Shape{arch.features(), arch.n_classes}, hb, rng);
  m.head_bias = detail::uniform_param<U>(Shape{arch.n_classes}, hb, rng);
  if (arch.kind == ModelKind::ladder) {
    LadderDecoder<U> d;
    const double tb = 1.0 / std::sqrt(static_cast<double>(arch.n_classes));
    d.top_weight = detail::uniform_param<U>(Shape{arch.n_classes, arch.filters[2]}, tb, rng);
    d.top_bias = detail::uniform_param<U>(Shape{arch.filters[2]}, tb, rng);
    for (std::size_t l = 0; l < 3; ++l) {
      const std::size_t cin = arch.layer_channels(l + 1), cout = arch.layer_channels(l), k = arch.kernels[l];
      const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k));
      d.layers[l].weight = detail::uniform_param<U>(Shape{cout, cin, k}, bound, rng);
      d.layers[l].bias = detail::uniform_param<U>(Shape{cout}, bound, rng);
    }
    for (std::size_t l = 0; l < 4; ++l) d.combinators[l] = detail::identity_combinator<U>(arch.layer_channels(l));
    m.decoder = std::move(d);
  }
  if (arch.kind == ModelKind::fcn_forecast) {
    const std::size_t out = arch.channels * arch.forecast_steps();
    m.forecast = ForecastHead<U>{detail::uniform_param<U>(Shape{arch.features(), out}, hb, rng),
                                 detail::uniform_param<U>(Shape{out}, hb, rng)};
  }
  return m;
}

template <typename T>
Model<T> init_model(Architecture arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(derive_seed(seed, 0x1417));
  return build_model<T>(arch, rng);
}

/// Same model in another scalar type (e.g. float weights for a double
/// precision gradient check).
template <typename U, typename T>
Model<U> model_cast(Model<T> src) {
  Rng rng(0);
  Model<U> out = build_model<U>(src.arch, rng);
  auto from = src.named_parameters();
  auto to = out.named_parameters();
  for (std::size_t i = 0; i < from.size(); ++i) to[i].second->value() = from[i].second->value().template cast<U>();
  for (std::size_t b = 0; b < src.blocks.size(); ++b) {
    out.blocks[b].running_mean.assign(src.blocks[b].running_mean.begin(), src.blocks[b].running_mean.end());
    out.blocks[b].running_var.assign(src.blocks[b].running_var.begin(), src.blocks[b].running_var.end());
  }
  return out;
}

/// Convenience overload mirroring the (kind, c, t, n_classes, seed) signature.
template <typename T>
Model<T> init_model(ModelKind kind, std::size_t c, std::size_t t, std::size_t n_classes, std::uint64_t seed,
                    double horizon = 0.0, double noise_std = 0.0) {
  Architecture a;
  a.kind = kind;
  a.channels = c;
  a.length = t;
  a.n_classes = n_classes;
  a.horizon = horizon;
  a.noise_std = noise_std;
  return init_model<T>(a, seed);
}

enum class Mode { train, eval };

struct ForwardOptions {
  Mode mode = Mode::train;
  bool update_stats = true;  // running BN statistics, train mode only
  bool track_grads = true;   // false: parameters enter the graph as constants
};

template <typename T>
Var<T> param_var(const Parameter<T>& p, const ForwardOptions& o) {
  return o.track_grads ? p.var() : p.detached();
}

/// Per-layer intermediate values of one encoder pass.
template <typename T>
struct EncoderPass {
  std::vector<Var<T>> activations;  // [input, z_1, z_2, z_3]: normalized pre-activations (+ noise when noisy)
  Var<T> features;                  // (b, features) after global average pooling
  Var<T> logits;                    // (b, n_classes)
};

template <typename T>
Tensor<T> to_tensor(const Tensor<double>& x) {
  if constexpr (std::is_same_v<T, double>) {
    return x;
  } else {
    return x.template cast<T>();
  }
}

/// Encoder pass. When `noise_std > 0`, Gaussian noise is added to the input
/// and to every normalized pre-activation, before the BN affine and ReLU.
template <typename T>
EncoderPass<T> encode(Model<T>& m, const Var<T>& x, const ForwardOptions& o, double noise_std = 0.0,
                      Rng* rng = nullptr) {
  if (x.value().rank() != 3 || x.dim(0) == 0) throw EmptyBatchError("forward: empty batch");
  if (x.dim(1) != m.arch.channels) throw InternalError("forward: channel mismatch");
  auto corrupt = [&](const Var<T>& v) {
    if (noise_std <= 0.0 || !rng) return v;
    Tensor<T> noise(v.shape());
    std::normal_distribution<double> d(0.0, noise_std);
    for (auto& e : noise.values()) e = static_cast<T>(d(*rng));
    return nn::add_constant(v, noise);
  };

  EncoderPass<T> pass;
  Var<T> h = corrupt(x);
  pass.activations.push_back(h);
  for (auto& block : m.blocks) {
    Var<T> pre = nn::conv1d_same(h, param_var(block.weight, o), param_var(block.bias, o));
    Var<T> z;
    if (o.mode == Mode::train) {
      nn::ChannelStats<T> stats;
      z = nn::normalize_batch(pre, static_cast<T>(kBnEps), &stats);
      if (o.update_stats) {
        const T mom = static_cast<T>(kBnMomentum);
        const T unbias = stats.count > 1 ? static_cast<T>(stats.count) / static_cast<T>(stats.count - 1) : T{1};
        for (std::size_t c = 0; c < stats.mean.size(); ++c) {
          block.running_mean[c] = (T{1} - mom) * block.running_mean[c] + mom * stats.mean[c];
          block.running_var[c] = (T{1} - mom) * block.running_var[c] + mom * stats.var[c] * unbias;
        }
      }
    } else {
      z = nn::normalize_fixed<T>(pre, block.running_mean, block.running_var, static_cast<T>(kBnEps));
    }
    z = corrupt(z);
    pass.activations.push_back(z);
    h = nn::relu(nn::channel_affine(z, param_var(block.gamma, o), param_var(block.beta, o)));
  }
  pass.features = nn::global_avg_pool(h);
  pass.logits = nn::linear(pass.features, param_var(m.head_weight, o), param_var(m.head_bias, o));
  return pass;
}

/// Class logits (b, n_classes).
template <typename T>
Var<T> fcn_forward(Model<T>& m, const Var<T>& x, const ForwardOptions& o = {}) {
  return encode(m, x, o).logits;
}

template <typename T>
Var<T> fcn_forward(Model<T>& m, const Tensor<double>& x, const ForwardOptions& o = {}) {
  return fcn_forward(m, Var<T>::constant(to_tensor<T>(x)), o);
}

/// Eval-mode class probabilities for a (n, c, t) array, in chunks.
template <typename T>
Tensor<double> predict_proba(Model<T>& m, const Tensor<double>& x, std::size_t chunk = 256) {
  const std::size_t n = x.dim(0), k = m.arch.n_classes;
  Tensor<double> out(Shape{n, k});
  const ForwardOptions o{Mode::eval, false, false};
  for (std::size_t s = 0; s < n; s += chunk) {
    const std::size_t e = std::min(n, s + chunk);
    auto logits = fcn_forward(m, Var<T>::constant(to_tensor<T>(x.slice(s, e))), o);
    const auto p = nn::softmax_values(logits.value());
    for (std::size_t i = 0; i < p.size(); ++i) out[s * k + i] = static_cast<double>(p[i]);
  }
  return out;
}

template <typename T>
struct LadderPass {
  Var<T> logits;                          // noisy-path logits when noisy, else clean
  Var<T> clean_logits;
  std::vector<Var<T>> clean_activations;  // reconstruction targets
  std::vector<Var<T>> noisy_activations;  // lateral inputs to the decoder
};

/// Clean and (optionally) noisy encoder passes sharing weights. Running BN
/// statistics follow the clean pass only.
template <typename T>
LadderPass<T> ladder_forward(Model<T>& m, const Var<T>& x, bool noisy, Rng& rng, const ForwardOptions& o = {}) {
  LadderPass<T> out;
  auto clean = encode(m, x, o);
  out.clean_logits = clean.logits;
  out.clean_activations = clean.activations;
  if (noisy) {
    ForwardOptions no = o;
    no.update_stats = false;
    auto corrupted = encode(m, x, no, m.arch.noise_std, &rng);
    out.logits = corrupted.logits;
    out.noisy_activations = corrupted.activations;
  } else {
    out.logits = clean.logits;
    out.noisy_activations = clean.activations;
  }
  return out;
}

/// Top-down decoder pass producing one reconstruction per activation layer
/// (index 0 = input), each shaped like the matching clean activation.
template <typename T>
std::vector<Var<T>> ladder_decode(Model<T>& m, const LadderPass<T>& pass, const ForwardOptions& o = {}) {
  if (!m.decoder) throw InternalError("ladder_decode: model has no decoder");
  auto& d = *m.decoder;
  const auto& lateral = pass.noisy_activations;
  if (lateral.size() != 4) throw InternalError("ladder_decode: expected 4 activation layers");
  const std::size_t len = lateral[0].dim(2);
  const T eps = static_cast<T>(kBnEps);

  std::vector<Var<T>> recon(4);
  auto top = nn::linear(nn::softmax(pass.logits), param_var(d.top_weight, o), param_var(d.top_bias, o));
  Var<T> u = nn::normalize_batch(nn::broadcast_time(top, len), eps);
  for (std::size_t l = 4; l-- > 0;) {
    if (l < 3) {
      u = nn::normalize_batch(
          nn::conv1d_same(recon[l + 1], param_var(d.layers[l].weight, o), param_var(d.layers[l].bias, o)), eps);
    }
    if (u.shape() != lateral[l].shape()) {
      throw InternalError("ladder_decode: decoder layer " + std::to_string(l) + " shape " + shape_str(u.shape()) +
                          " does not match encoder activation " + shape_str(lateral[l].shape()));
    }
    recon[l] = nn::ladder_combinator(lateral[l], u, param_var(d.combinators[l], o));
  }
  return recon;
}

/// Forecast of the next `forecast_steps` values per channel from the pooled
/// features of an input window: (b, c * steps).
template <typename T>
Var<T> forecast_forward(Model<T>& m, const Var<T>& window, const ForwardOptions& o = {}) {
  if (!m.forecast) throw InternalError("forecast_forward: model has no forecast head");
  auto pass = encode(m, window, o);
  return nn::linear(pass.features, param_var(m.forecast->weight, o), param_var(m.forecast->bias, o));
}

}  // namespace ssltsc::model
