#pragma once

// Tiny pre-norm decoder-only transformer with hand-written backpropagation.
//
// Only single next-token outputs are ever needed, so the forward pass returns
// the logits at the final input position and the backward pass starts from a
// gradient on those logits. Everything is templated on the scalar type: float
// for training, double for finite-difference gradient checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prorank/common.hpp"

namespace prorank {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int d_ff = 256;
  int max_seq = 256;
  int vocab_size = 0;
  std::uint64_t init_seed = 0;

  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1) {
      throw usage_error("model config: layer, head and width counts must be positive");
    }
    if (d_model % n_heads != 0) {
      throw usage_error("model config: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                        std::to_string(n_heads));
    }
    if (max_seq < 8) throw usage_error("model config: max_seq must be >= 8");
    if (vocab_size < 6) throw usage_error("model config: vocab_size must cover reserved tokens plus \"0\" and \"1\"");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers}, {"n_heads", c.n_heads},       {"d_model", c.d_model},
                     {"d_ff", c.d_ff},         {"max_seq", c.max_seq},       {"vocab_size", c.vocab_size},
                     {"init_seed", c.init_seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_model = j.value("d_model", c.d_model);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.max_seq = j.value("max_seq", c.max_seq);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.init_seed = j.value("init_seed", c.init_seed);
}

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Offsets of every named tensor inside one flat parameter vector. Weight
// matrices are stored [in, out] row-major.
class ParamLayout {
 public:
  struct Layer {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_attn, b_attn;
    std::size_t ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
  };

  ParamLayout() = default;

  explicit ParamLayout(const ModelConfig& c) {
    const auto d = static_cast<std::size_t>(c.d_model);
    const auto f = static_cast<std::size_t>(c.d_ff);
    const auto v = static_cast<std::size_t>(c.vocab_size);
    tok_emb = add("tok_emb", {v, d});
    pos_emb = add("pos_emb", {static_cast<std::size_t>(c.max_seq), d});
    for (int l = 0; l < c.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      Layer L{};
      L.ln1_g = add(p + "ln1.gain", {d});
      L.ln1_b = add(p + "ln1.bias", {d});
      L.w_qkv = add(p + "attn.w_qkv", {d, 3 * d});
      L.b_qkv = add(p + "attn.b_qkv", {3 * d});
      L.w_attn = add(p + "attn.w_out", {d, d});
      L.b_attn = add(p + "attn.b_out", {d});
      L.ln2_g = add(p + "ln2.gain", {d});
      L.ln2_b = add(p + "ln2.bias", {d});
      L.w_fc = add(p + "mlp.w_fc", {d, f});
      L.b_fc = add(p + "mlp.b_fc", {f});
      L.w_proj = add(p + "mlp.w_proj", {f, d});
      L.b_proj = add(p + "mlp.b_proj", {d});
      layers.push_back(L);
    }
    lnf_g = add("ln_f.gain", {d});
    lnf_b = add("ln_f.bias", {d});
    lm_head = add("lm_head", {d, v});
  }

  const std::vector<TensorInfo>& tensors() const noexcept { return tensors_; }
  std::size_t total() const noexcept { return total_; }

  std::size_t tok_emb = 0, pos_emb = 0, lnf_g = 0, lnf_b = 0, lm_head = 0;
  std::vector<Layer> layers;

 private:
  std::size_t add(std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    tensors_.push_back({std::move(name), std::move(shape), total_, n});
    total_ += n;
    return total_ - n;
  }

  std::vector<TensorInfo> tensors_;
  std::size_t total_ = 0;
};

// All trainable parameters of the policy, flat.
template <class T>
struct PolicyState {
  ModelConfig config;
  ParamLayout layout;
  std::vector<T> params;

  std::size_t param_count() const noexcept { return params.size(); }

  // Content hash over the config and the raw parameter bytes.
  std::uint64_t fingerprint() const {
    Fnv1a64 h;
    h.update(nlohmann::json(config).dump());
    const std::uint32_t width = sizeof(T);
    h.update(&width, sizeof(width));
    h.update(params.data(), params.size() * sizeof(T));
    return h.digest();
  }

  template <class U>
  PolicyState<U> cast() const {
    return {config, layout, std::vector<U>(params.begin(), params.end())};
  }
};

template <class T>
using GradientSet = std::vector<T>;

inline constexpr double kInitStd = 0.02;

// Scaled normal weights (residual projections by 1/sqrt(2 * n_layers)), zero
// biases, unit layer-norm gains. Deterministic in init_seed.
template <class T>
PolicyState<T> init_model(const ModelConfig& config) {
  config.validate();
  PolicyState<T> p{config, ParamLayout(config), {}};
  p.params.assign(p.layout.total(), T(0));
  Rng rng(mix_seed(config.init_seed, 0));
  const double resid_std = kInitStd / std::sqrt(2.0 * config.n_layers);
  for (const auto& t : p.layout.tensors()) {
    const auto& n = t.name;
    auto ends_with = [&](std::string_view s) { return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0; };
    double std_dev = 0.0;
    T fill = T(0);
    if (ends_with("gain")) {
      fill = T(1);
    } else if (ends_with("bias") || ends_with("b_qkv") || ends_with("b_out") || ends_with("b_fc") ||
               ends_with("b_proj")) {
      fill = T(0);
    } else if (ends_with("w_out") || ends_with("w_proj")) {
      std_dev = resid_std;
    } else {
      std_dev = kInitStd;
    }
    for (std::size_t i = 0; i < t.size; ++i) {
      p.params[t.offset + i] = std_dev > 0.0 ? static_cast<T>(std_dev * normal01(rng)) : fill;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

// out[r, :] = bias + in[r, :] * W  for rows [r0, r1); W is [n_in, n_out].
template <class T>
void linear(const T* in, std::size_t n_in, const T* W, const T* bias, T* out, std::size_t n_out, std::size_t r0,
            std::size_t r1) {
  for (std::size_t r = r0; r < r1; ++r) {
    T* o = out + r * n_out;
    const T* x = in + r * n_in;
    if (bias) {
      std::copy(bias, bias + n_out, o);
    } else {
      std::fill(o, o + n_out, T(0));
    }
    for (std::size_t p = 0; p < n_in; ++p) {
      const T xp = x[p];
      const T* w = W + p * n_out;
      for (std::size_t j = 0; j < n_out; ++j) o[j] += xp * w[j];
    }
  }
}

// Backward of linear for rows [r0, r1): accumulates dW, dbias, and writes
// (not accumulates) d_in.
template <class T>
void linear_backward(const T* in, std::size_t n_in, const T* W, const T* d_out, std::size_t n_out, T* dW, T* dbias,
                     T* d_in, std::size_t r0, std::size_t r1) {
  for (std::size_t r = r0; r < r1; ++r) {
    const T* g = d_out + r * n_out;
    const T* x = in + r * n_in;
    if (dbias) {
      for (std::size_t j = 0; j < n_out; ++j) dbias[j] += g[j];
    }
    for (std::size_t p = 0; p < n_in; ++p) {
      const T xp = x[p];
      T* dw = dW + p * n_out;
      const T* w = W + p * n_out;
      T acc = T(0);
      for (std::size_t j = 0; j < n_out; ++j) {
        dw[j] += xp * g[j];
        acc += w[j] * g[j];
      }
      if (d_in) d_in[r * n_in + p] = acc;
    }
  }
}

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
void layer_norm(const T* x, const T* gain, const T* bias, T* out, T* mean, T* rstd, std::size_t d, std::size_t r0,
                std::size_t r1) {
  for (std::size_t r = r0; r < r1; ++r) {
    const T* xr = x + r * d;
    T m = T(0);
    for (std::size_t i = 0; i < d; ++i) m += xr[i];
    m /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - m) * (xr[i] - m);
    var /= static_cast<T>(d);
    const T s = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    mean[r] = m;
    rstd[r] = s;
    T* o = out + r * d;
    for (std::size_t i = 0; i < d; ++i) o[i] = (xr[i] - m) * s * gain[i] + bias[i];
  }
}

// Accumulates dgain/dbias and adds the input gradient into dx.
template <class T>
void layer_norm_backward(const T* x, const T* gain, const T* mean, const T* rstd, const T* d_out, T* dgain, T* dbias,
                         T* dx, std::size_t d, std::size_t r0, std::size_t r1) {
  for (std::size_t r = r0; r < r1; ++r) {
    const T* xr = x + r * d;
    const T* g = d_out + r * d;
    const T m = mean[r];
    const T s = rstd[r];
    T sum_dxhat = T(0);
    T sum_dxhat_xhat = T(0);
    for (std::size_t i = 0; i < d; ++i) {
      const T xhat = (xr[i] - m) * s;
      const T dxhat = g[i] * gain[i];
      dgain[i] += g[i] * xhat;
      dbias[i] += g[i];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
    }
    sum_dxhat /= static_cast<T>(d);
    sum_dxhat_xhat /= static_cast<T>(d);
    T* o = dx + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const T xhat = (xr[i] - m) * s;
      o[i] += s * (g[i] * gain[i] - sum_dxhat - xhat * sum_dxhat_xhat);
    }
  }
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

template <class T>
T gelu(T x) {
  const T u = static_cast<T>(kGeluC) * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <class T>
T gelu_grad(T x) {
  const T u = static_cast<T>(kGeluC) * (x + T(0.044715) * x * x * x);
  const T th = std::tanh(u);
  return T(0.5) * (T(1) + th) +
         T(0.5) * x * (T(1) - th * th) * static_cast<T>(kGeluC) * (T(1) + T(3) * T(0.044715) * x * x);
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Forward / backward

template <class T>
struct LayerCache {
  std::vector<T> x_in, ln1, ln1_mean, ln1_rstd, qkv, att, y, x_mid, ln2, ln2_mean, ln2_rstd, fc, act;
  std::size_t row0 = 0;  // rows before row0 only feed keys/values
};

// Activations of one forward pass, reused across calls to avoid reallocation.
template <class T>
struct ForwardCache {
  TokenIds ids;
  std::vector<LayerCache<T>> layers;
  std::vector<T> x_last, lnf, lnf_mean, lnf_rstd, logits;
};

inline void check_ids(const ModelConfig& c, std::span<const std::int32_t> ids) {
  if (ids.empty()) throw usage_error("model input is empty");
  if (ids.size() > static_cast<std::size_t>(c.max_seq)) {
    throw usage_error("sequence length " + std::to_string(ids.size()) + " exceeds max_seq " +
                      std::to_string(c.max_seq));
  }
  for (auto id : ids) {
    if (id < 0 || id >= c.vocab_size) throw usage_error("token id " + std::to_string(id) + " out of range");
  }
}

// Runs the model over `ids`, leaving the last-position logits in cache.logits.
template <class T>
void forward(const PolicyState<T>& policy, std::span<const std::int32_t> ids, ForwardCache<T>& cache) {
  const auto& c = policy.config;
  check_ids(c, ids);
  const auto& lay = policy.layout;
  const T* P = policy.params.data();
  const std::size_t L = ids.size();
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto f = static_cast<std::size_t>(c.d_ff);
  const auto H = static_cast<std::size_t>(c.n_heads);
  const auto hd = static_cast<std::size_t>(c.head_dim());
  const auto V = static_cast<std::size_t>(c.vocab_size);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  cache.ids.assign(ids.begin(), ids.end());
  cache.layers.resize(lay.layers.size());

  std::vector<T> x(L * d);
  for (std::size_t t = 0; t < L; ++t) {
    const T* te = P + lay.tok_emb + static_cast<std::size_t>(ids[t]) * d;
    const T* pe = P + lay.pos_emb + t * d;
    for (std::size_t i = 0; i < d; ++i) x[t * d + i] = te[i] + pe[i];
  }

  for (std::size_t l = 0; l < lay.layers.size(); ++l) {
    const auto& w = lay.layers[l];
    auto& lc = cache.layers[l];
    // The last layer only has to produce the final position.
    const std::size_t r0 = (l + 1 == lay.layers.size()) ? L - 1 : 0;
    lc.row0 = r0;
    lc.x_in = x;
    lc.ln1.assign(L * d, T(0));
    lc.ln1_mean.assign(L, T(0));
    lc.ln1_rstd.assign(L, T(0));
    lc.qkv.assign(L * 3 * d, T(0));
    lc.att.assign(H * L * L, T(0));
    lc.y.assign(L * d, T(0));
    lc.x_mid.assign(L * d, T(0));
    lc.ln2.assign(L * d, T(0));
    lc.ln2_mean.assign(L, T(0));
    lc.ln2_rstd.assign(L, T(0));
    lc.fc.assign(L * f, T(0));
    lc.act.assign(L * f, T(0));

    kernels::layer_norm(lc.x_in.data(), P + w.ln1_g, P + w.ln1_b, lc.ln1.data(), lc.ln1_mean.data(),
                        lc.ln1_rstd.data(), d, 0, L);
    kernels::linear(lc.ln1.data(), d, P + w.w_qkv, P + w.b_qkv, lc.qkv.data(), 3 * d, 0, L);

    for (std::size_t t = r0; t < L; ++t) {
      for (std::size_t h = 0; h < H; ++h) {
        const T* q = lc.qkv.data() + t * 3 * d + h * hd;
        T* a = lc.att.data() + (h * L + t) * L;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t s = 0; s <= t; ++s) {
          const T* k = lc.qkv.data() + s * 3 * d + d + h * hd;
          T dot = T(0);
          for (std::size_t i = 0; i < hd; ++i) dot += q[i] * k[i];
          a[s] = dot * scale;
          mx = std::max(mx, a[s]);
        }
        T sum = T(0);
        for (std::size_t s = 0; s <= t; ++s) {
          a[s] = std::exp(a[s] - mx);
          sum += a[s];
        }
        T* y = lc.y.data() + t * d + h * hd;
        for (std::size_t s = 0; s <= t; ++s) {
          a[s] /= sum;
          const T* v = lc.qkv.data() + s * 3 * d + 2 * d + h * hd;
          for (std::size_t i = 0; i < hd; ++i) y[i] += a[s] * v[i];
        }
      }
    }

    kernels::linear(lc.y.data(), d, P + w.w_attn, P + w.b_attn, lc.x_mid.data(), d, r0, L);
    for (std::size_t i = r0 * d; i < L * d; ++i) lc.x_mid[i] += lc.x_in[i];

    kernels::layer_norm(lc.x_mid.data(), P + w.ln2_g, P + w.ln2_b, lc.ln2.data(), lc.ln2_mean.data(),
                        lc.ln2_rstd.data(), d, r0, L);
    kernels::linear(lc.ln2.data(), d, P + w.w_fc, P + w.b_fc, lc.fc.data(), f, r0, L);
    for (std::size_t i = r0 * f; i < L * f; ++i) lc.act[i] = kernels::gelu(lc.fc[i]);
    std::fill(x.begin(), x.end(), T(0));
    kernels::linear(lc.act.data(), f, P + w.w_proj, P + w.b_proj, x.data(), d, r0, L);
    for (std::size_t i = r0 * d; i < L * d; ++i) x[i] += lc.x_mid[i];
  }

  cache.x_last.assign(x.begin() + static_cast<std::ptrdiff_t>((L - 1) * d), x.end());
  cache.lnf.assign(d, T(0));
  cache.lnf_mean.assign(1, T(0));
  cache.lnf_rstd.assign(1, T(0));
  kernels::layer_norm(cache.x_last.data(), P + lay.lnf_g, P + lay.lnf_b, cache.lnf.data(), cache.lnf_mean.data(),
                      cache.lnf_rstd.data(), d, 0, 1);
  cache.logits.assign(V, T(0));
  kernels::linear(cache.lnf.data(), d, P + lay.lm_head, static_cast<const T*>(nullptr), cache.logits.data(), V, 0, 1);
}

// Accumulates into `grads` the parameter gradient of a scalar whose gradient
// with respect to the last-position logits is `d_logits`.
template <class T>
void backward(const PolicyState<T>& policy, const ForwardCache<T>& cache, std::span<const T> d_logits,
              std::vector<T>& grads) {
  const auto& c = policy.config;
  const auto& lay = policy.layout;
  const T* P = policy.params.data();
  T* G = grads.data();
  const std::size_t L = cache.ids.size();
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto f = static_cast<std::size_t>(c.d_ff);
  const auto H = static_cast<std::size_t>(c.n_heads);
  const auto hd = static_cast<std::size_t>(c.head_dim());
  const auto V = static_cast<std::size_t>(c.vocab_size);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  std::vector<T> d_lnf(d, T(0));
  kernels::linear_backward(cache.lnf.data(), d, P + lay.lm_head, d_logits.data(), V, G + lay.lm_head,
                           static_cast<T*>(nullptr), d_lnf.data(), 0, 1);
  std::vector<T> dx(L * d, T(0));
  kernels::layer_norm_backward(cache.x_last.data(), P + lay.lnf_g, cache.lnf_mean.data(), cache.lnf_rstd.data(),
                               d_lnf.data(), G + lay.lnf_g, G + lay.lnf_b, dx.data() + (L - 1) * d, d, 0, 1);

  std::vector<T> d_act, d_ln2, d_mid, d_y, d_qkv, d_ln1, dp;
  for (std::size_t li = lay.layers.size(); li-- > 0;) {
    const auto& w = lay.layers[li];
    const auto& lc = cache.layers[li];
    const std::size_t r0 = lc.row0;

    // MLP block
    d_act.assign(L * f, T(0));
    kernels::linear_backward(lc.act.data(), f, P + w.w_proj, dx.data(), d, G + w.w_proj, G + w.b_proj,
                             d_act.data(), r0, L);
    for (std::size_t i = r0 * f; i < L * f; ++i) d_act[i] *= kernels::gelu_grad(lc.fc[i]);
    d_ln2.assign(L * d, T(0));
    kernels::linear_backward(lc.ln2.data(), d, P + w.w_fc, d_act.data(), f, G + w.w_fc, G + w.b_fc, d_ln2.data(),
                             r0, L);
    d_mid = dx;
    kernels::layer_norm_backward(lc.x_mid.data(), P + w.ln2_g, lc.ln2_mean.data(), lc.ln2_rstd.data(),
                                 d_ln2.data(), G + w.ln2_g, G + w.ln2_b, d_mid.data(), d, r0, L);

    // Attention block
    d_y.assign(L * d, T(0));
    kernels::linear_backward(lc.y.data(), d, P + w.w_attn, d_mid.data(), d, G + w.w_attn, G + w.b_attn,
                             d_y.data(), r0, L);
    d_qkv.assign(L * 3 * d, T(0));
    dp.resize(L);
    for (std::size_t t = r0; t < L; ++t) {
      for (std::size_t h = 0; h < H; ++h) {
        const T* a = lc.att.data() + (h * L + t) * L;
        const T* dy = d_y.data() + t * d + h * hd;
        T weighted = T(0);
        for (std::size_t s = 0; s <= t; ++s) {
          const T* v = lc.qkv.data() + s * 3 * d + 2 * d + h * hd;
          T* dv = d_qkv.data() + s * 3 * d + 2 * d + h * hd;
          T dot = T(0);
          for (std::size_t i = 0; i < hd; ++i) {
            dot += dy[i] * v[i];
            dv[i] += a[s] * dy[i];
          }
          dp[s] = dot;
          weighted += a[s] * dot;
        }
        const T* q = lc.qkv.data() + t * 3 * d + h * hd;
        T* dq = d_qkv.data() + t * 3 * d + h * hd;
        for (std::size_t s = 0; s <= t; ++s) {
          const T ds = a[s] * (dp[s] - weighted) * scale;
          const T* k = lc.qkv.data() + s * 3 * d + d + h * hd;
          T* dk = d_qkv.data() + s * 3 * d + d + h * hd;
          for (std::size_t i = 0; i < hd; ++i) {
            dq[i] += ds * k[i];
            dk[i] += ds * q[i];
          }
        }
      }
    }
    d_ln1.assign(L * d, T(0));
    kernels::linear_backward(lc.ln1.data(), d, P + w.w_qkv, d_qkv.data(), 3 * d, G + w.w_qkv, G + w.b_qkv,
                             d_ln1.data(), 0, L);
    dx = d_mid;
    kernels::layer_norm_backward(lc.x_in.data(), P + w.ln1_g, lc.ln1_mean.data(), lc.ln1_rstd.data(), d_ln1.data(),
                                 G + w.ln1_g, G + w.ln1_b, dx.data(), d, 0, L);
  }

  for (std::size_t t = 0; t < L; ++t) {
    T* te = G + lay.tok_emb + static_cast<std::size_t>(cache.ids[t]) * d;
    T* pe = G + lay.pos_emb + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      te[i] += dx[t * d + i];
      pe[i] += dx[t * d + i];
    }
  }
}

template <class T>
std::vector<T> forward_last_logits(const PolicyState<T>& policy, std::span<const std::int32_t> ids) {
  ForwardCache<T> cache;
  forward(policy, ids, cache);
  return std::move(cache.logits);
}

// Log-softmax in double precision.
template <class T>
std::vector<double> log_softmax(std::span<const T> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (auto v : logits) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (auto v : logits) sum += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

template <class T>
double logprob_from_logits(std::span<const T> logits, std::int32_t token) {
  if (token < 0 || static_cast<std::size_t>(token) >= logits.size()) {
    throw usage_error("token id " + std::to_string(token) + " out of range");
  }
  return log_softmax(logits)[static_cast<std::size_t>(token)];
}

template <class T>
double logprob_of(const PolicyState<T>& policy, std::span<const std::int32_t> ids, std::int32_t token) {
  const auto logits = forward_last_logits(policy, ids);
  return logprob_from_logits(std::span<const T>(logits), token);
}

struct SampledToken {
  std::int32_t token;
  double logprob;  // under the policy at temperature 1
};

inline constexpr double kGreedyTemperature = 1e-6;

// Draws from softmax(logits / temperature); below kGreedyTemperature returns
// the argmax with ties going to the lowest id.
template <class T>
SampledToken sample_from_logits(std::span<const T> logits, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw usage_error("sampling temperature must be positive");
  const auto logp = log_softmax(logits);
  std::size_t pick = 0;
  if (temperature < kGreedyTemperature) {
    for (std::size_t i = 1; i < logits.size(); ++i) {
      if (logits[i] > logits[pick]) pick = i;
    }
  } else {
    double mx = -std::numeric_limits<double>::infinity();
    for (auto v : logits) mx = std::max(mx, static_cast<double>(v) / temperature);
    std::vector<double> weights(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      weights[i] = std::exp(static_cast<double>(logits[i]) / temperature - mx);
      total += weights[i];
    }
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    pick = logits.size() - 1;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      acc += weights[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
  }
  return {static_cast<std::int32_t>(pick), logp[pick]};
}

template <class T>
SampledToken sample_next(const PolicyState<T>& policy, std::span<const std::int32_t> ids, double temperature,
                         Rng& rng) {
  const auto logits = forward_last_logits(policy, ids);
  return sample_from_logits(std::span<const T>(logits), temperature, rng);
}

template <class T>
struct LossAndGrads {
  double loss = 0.0;
  GradientSet<T> grads;
};

// Exact gradient of  sum_i head(i, logits_i)  over a batch of prompts, where
// logits_i are the last-position logits of prompt i. The head returns its
// loss contribution and writes d loss / d logits into a zeroed buffer.
template <class T, class Head>
LossAndGrads<T> loss_gradients(const PolicyState<T>& policy, std::span<const TokenIds> prompts, Head&& head) {
  LossAndGrads<T> out;
  out.grads.assign(policy.params.size(), T(0));
  ForwardCache<T> cache;
  std::vector<T> d_logits;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    forward(policy, std::span<const std::int32_t>(prompts[i]), cache);
    d_logits.assign(cache.logits.size(), T(0));
    const double loss = head(i, std::span<const T>(cache.logits), std::span<T>(d_logits));
    if (!std::isfinite(loss)) throw divergence_error("non-finite loss");
    out.loss += loss;
    bool any = false;
    for (auto g : d_logits) any = any || g != T(0);
    if (any) backward(policy, cache, std::span<const T>(d_logits), out.grads);
  }
  return out;
}

template <class T>
double l2_norm(const std::vector<T>& v) {
  double s = 0.0;
  for (auto x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

}  // namespace prorank
