#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sebvs/common.hpp"
#include "sebvs/event_frame.hpp"

namespace sebvs::vit {

enum class Modality : std::uint8_t { Rgb = 0, Event = 1, Fused = 2 };
enum class Head : std::uint8_t { Nav = 0, Arm = 1 };
enum class Activation : std::uint8_t { Gelu = 0, Relu = 1 };

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Rgb: return "rgb";
    case Modality::Event: return "event";
    default: return "fused";
  }
}
inline Modality parse_modality(const std::string& s) {
  if (s == "rgb") return Modality::Rgb;
  if (s == "event") return Modality::Event;
  if (s == "fused") return Modality::Fused;
  throw ConfigError("unknown modality '" + s + "' (expected rgb|event|fused)");
}
inline Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::Gelu;
  if (s == "relu") return Activation::Relu;
  throw ConfigError("unknown activation '" + s + "' (expected gelu|relu)");
}
inline const char* activation_name(Activation a) { return a == Activation::Gelu ? "gelu" : "relu"; }

struct PolicyConfig {
  int input_res = 128;
  int patch = 16;
  int embed_dim = 64;
  int heads = 4;
  int ffn_dim = 256;
  int depth = 1;
  double dropout_p = 0.1;
  Modality modality = Modality::Fused;
  Head head = Head::Nav;
  Activation activation = Activation::Gelu;
  std::uint64_t seed = 0;

  int channels() const {
    switch (modality) {
      case Modality::Rgb: return 3;
      case Modality::Event: return 2;
      default: return 5;
    }
  }
  int grid() const { return input_res / patch; }
  int patch_tokens() const { return grid() * grid(); }
  int tokens() const { return patch_tokens() + 1; }
  int patch_dim() const { return patch * patch * channels(); }
  int output_dim() const { return head == Head::Nav ? 2 : 6; }
  std::vector<int> head_widths() const {
    return head == Head::Nav ? std::vector<int>{embed_dim, 64, 2}
                             : std::vector<int>{embed_dim, 128, 64, 6};
  }

  void validate() const {
    if (patch <= 0 || input_res <= 0 || input_res % patch != 0)
      throw ConfigError("policy.input_res must be a positive multiple of policy.patch");
    if (embed_dim <= 0 || embed_dim % 2 != 0) throw ConfigError("policy.embed_dim must be positive and even");
    if (heads <= 0 || embed_dim % heads != 0) throw ConfigError("policy.embed_dim must be divisible by policy.heads");
    if (ffn_dim <= 0) throw ConfigError("policy.ffn_dim must be positive");
    if (depth < 1) throw ConfigError("policy.depth must be >= 1");
    if (!(dropout_p >= 0 && dropout_p < 1)) throw ConfigError("policy.dropout must be in [0,1)");
  }
  bool operator==(const PolicyConfig&) const = default;
};

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
struct BlockParams {
  Mat<S> ln1_g, ln1_b;
  Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Mat<S> ln2_g, ln2_b;
  Mat<S> w1, b1, w2, b2;
};

// All learned tensors. Biases and gains are 1 x n matrices so every tensor
// shares one type; visit() enumerates them in checkpoint order.
template <typename S>
struct PolicyParams {
  PolicyConfig cfg;
  Mat<S> patch_w, patch_b;
  Mat<S> cls;
  std::vector<BlockParams<S>> blocks;
  Mat<S> lnf_g, lnf_b;
  std::vector<Mat<S>> head_w, head_b;

  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Mat<S>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  /// Same shapes, all zeros (gradient accumulator).
  PolicyParams zeros_like() const {
    PolicyParams z = *this;
    z.visit([](const std::string&, Mat<S>& m) { m.setZero(); });
    return z;
  }

  template <typename T>
  PolicyParams<T> cast() const {
    PolicyParams<T> out;
    out.cfg = cfg;
    out.patch_w = patch_w.template cast<T>();
    out.patch_b = patch_b.template cast<T>();
    out.cls = cls.template cast<T>();
    for (const auto& b : blocks) {
      BlockParams<T> o;
      o.ln1_g = b.ln1_g.template cast<T>(); o.ln1_b = b.ln1_b.template cast<T>();
      o.wq = b.wq.template cast<T>(); o.bq = b.bq.template cast<T>();
      o.wk = b.wk.template cast<T>(); o.bk = b.bk.template cast<T>();
      o.wv = b.wv.template cast<T>(); o.bv = b.bv.template cast<T>();
      o.wo = b.wo.template cast<T>(); o.bo = b.bo.template cast<T>();
      o.ln2_g = b.ln2_g.template cast<T>(); o.ln2_b = b.ln2_b.template cast<T>();
      o.w1 = b.w1.template cast<T>(); o.b1 = b.b1.template cast<T>();
      o.w2 = b.w2.template cast<T>(); o.b2 = b.b2.template cast<T>();
      out.blocks.push_back(std::move(o));
    }
    out.lnf_g = lnf_g.template cast<T>();
    out.lnf_b = lnf_b.template cast<T>();
    for (const auto& w : head_w) out.head_w.push_back(w.template cast<T>());
    for (const auto& b : head_b) out.head_b.push_back(b.template cast<T>());
    return out;
  }

private:
  template <typename Self, typename F>
  static void visit_impl(Self& p, F& f) {
    f(std::string("patch_w"), p.patch_w);
    f(std::string("patch_b"), p.patch_b);
    f(std::string("cls"), p.cls);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
      auto& b = p.blocks[i];
      const std::string pre = "block" + std::to_string(i) + ".";
      f(pre + "ln1_g", b.ln1_g); f(pre + "ln1_b", b.ln1_b);
      f(pre + "wq", b.wq); f(pre + "bq", b.bq);
      f(pre + "wk", b.wk); f(pre + "bk", b.bk);
      f(pre + "wv", b.wv); f(pre + "bv", b.bv);
      f(pre + "wo", b.wo); f(pre + "bo", b.bo);
      f(pre + "ln2_g", b.ln2_g); f(pre + "ln2_b", b.ln2_b);
      f(pre + "w1", b.w1); f(pre + "b1", b.b1);
      f(pre + "w2", b.w2); f(pre + "b2", b.b2);
    }
    f(std::string("lnf_g"), p.lnf_g);
    f(std::string("lnf_b"), p.lnf_b);
    for (std::size_t i = 0; i < p.head_w.size(); ++i) {
      f("head" + std::to_string(i) + ".w", p.head_w[i]);
      f("head" + std::to_string(i) + ".b", p.head_b[i]);
    }
  }
};

/// Glorot-uniform weights, zero biases and class token, unit LayerNorm gains.
template <typename S>
PolicyParams<S> init_params(const PolicyConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  auto glorot = [&](int in, int out) {
    const double a = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-a, a);
    Mat<S> m(in, out);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(u(rng));
    return m;
  };
  auto zeros = [](int n) { return Mat<S>::Zero(1, n); };
  auto ones = [](int n) { return Mat<S>::Ones(1, n); };

  const int d = cfg.embed_dim;
  PolicyParams<S> p;
  p.cfg = cfg;
  p.patch_w = glorot(cfg.patch_dim(), d);
  p.patch_b = zeros(d);
  p.cls = zeros(d);
  for (int i = 0; i < cfg.depth; ++i) {
    BlockParams<S> b;
    b.ln1_g = ones(d); b.ln1_b = zeros(d);
    b.wq = glorot(d, d); b.bq = zeros(d);
    b.wk = glorot(d, d); b.bk = zeros(d);
    b.wv = glorot(d, d); b.bv = zeros(d);
    b.wo = glorot(d, d); b.bo = zeros(d);
    b.ln2_g = ones(d); b.ln2_b = zeros(d);
    b.w1 = glorot(d, cfg.ffn_dim); b.b1 = zeros(cfg.ffn_dim);
    b.w2 = glorot(cfg.ffn_dim, d); b.b2 = zeros(d);
    p.blocks.push_back(std::move(b));
  }
  p.lnf_g = ones(d);
  p.lnf_b = zeros(d);
  const auto widths = cfg.head_widths();
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    p.head_w.push_back(glorot(widths[i], widths[i + 1]));
    p.head_b.push_back(zeros(widths[i + 1]));
  }
  return p;
}

/// Fixed sinusoidal table: PE[pos,2i] = sin(pos / 10000^(2i/d)), PE[pos,2i+1] = cos(...).
template <typename S>
Mat<S> positional_encoding(int n_tokens, int d) {
  if (d % 2 != 0) throw ConfigError("positional encoding width must be even");
  Mat<S> pe(n_tokens, d);
  for (int pos = 0; pos < n_tokens; ++pos)
    for (int i = 0; i < d / 2; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * i / d);
      pe(pos, 2 * i) = static_cast<S>(std::sin(angle));
      pe(pos, 2 * i + 1) = static_cast<S>(std::cos(angle));
    }
  return pe;
}

/// Keeps the observation channels the modality consumes (RGB = 0..2, events = 3..4).
inline Observation select_channels(const Observation& obs5, Modality m) {
  if (m == Modality::Fused) return obs5;
  if (obs5.channels != 5) throw InputError("channel selection expects a 5-channel observation");
  const int first = m == Modality::Rgb ? 0 : 3;
  const int count = m == Modality::Rgb ? 3 : 2;
  Observation out(count, obs5.height, obs5.width);
  const std::size_t plane = std::size_t(obs5.height) * obs5.width;
  std::copy(obs5.data.begin() + first * plane, obs5.data.begin() + (first + count) * plane, out.data.begin());
  return out;
}

/// Rows are patches in row-major patch order; each row is the patch flattened
/// channel-major (c, then y, then x).
template <typename S>
Mat<S> extract_patches(const Observation& obs, int patch) {
  if (obs.width % patch != 0 || obs.height % patch != 0)
    throw InputError("observation dimensions must be divisible by the patch size");
  const int gx = obs.width / patch, gy = obs.height / patch;
  Mat<S> P(gx * gy, obs.channels * patch * patch);
  for (int py = 0; py < gy; ++py)
    for (int px = 0; px < gx; ++px) {
      const int row = py * gx + px;
      int col = 0;
      for (int c = 0; c < obs.channels; ++c)
        for (int y = 0; y < patch; ++y) {
          const float* src = &obs.data[(std::size_t(c) * obs.height + py * patch + y) * obs.width + px * patch];
          for (int x = 0; x < patch; ++x) P(row, col++) = static_cast<S>(src[x]);
        }
    }
  return P;
}

/// Patch embedding: one token per patch, projected to embed_dim.
template <typename S>
Mat<S> patchify(const Observation& obs, const Mat<S>& proj_w, const Mat<S>& proj_b, int patch) {
  const Mat<S> P = extract_patches<S>(obs, patch);
  if (P.cols() != proj_w.rows()) throw InputError("patch projection expects a different channel count");
  Mat<S> T = P * proj_w;
  T.rowwise() += proj_b.row(0);
  return T;
}

inline constexpr double kLayerNormEps = 1e-5;

template <typename S>
struct LayerNormCache {
  Mat<S> xhat;
  Eigen::Matrix<S, Eigen::Dynamic, 1> rstd;
};

template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, LayerNormCache<S>* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Mat<S> xhat(n, d);
  Eigen::Matrix<S, Eigen::Dynamic, 1> rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const S mean = x.row(i).mean();
    const S var = (x.row(i).array() - mean).square().mean();
    rstd(i) = S(1) / std::sqrt(var + static_cast<S>(kLayerNormEps));
    xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
  }
  Mat<S> y = (xhat.array().rowwise() * g.row(0).array()).matrix();
  y.rowwise() += b.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const LayerNormCache<S>& c, const Mat<S>& g, Mat<S>& dg,
                           Mat<S>& db) {
  dg.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  const Mat<S> dxhat = (dy.array().rowwise() * g.row(0).array()).matrix();
  Mat<S> dx(dy.rows(), dy.cols());
  const S inv_d = S(1) / static_cast<S>(dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const S m1 = dxhat.row(i).sum() * inv_d;
    const S m2 = dxhat.row(i).dot(c.xhat.row(i)) * inv_d;
    dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2).matrix();
  }
  return dx;
}

template <typename S>
S activate(S x, Activation a) {
  if (a == Activation::Relu) return x > S(0) ? x : S(0);
  return S(0.5) * x * (S(1) + std::erf(x / std::sqrt(S(2))));
}

template <typename S>
S activate_grad(S x, Activation a) {
  if (a == Activation::Relu) return x > S(0) ? S(1) : S(0);
  const S cdf = S(0.5) * (S(1) + std::erf(x / std::sqrt(S(2))));
  const S pdf = std::exp(S(-0.5) * x * x) / std::sqrt(S(2) * static_cast<S>(kPi));
  return cdf + x * pdf;
}

template <typename S>
Mat<S> activate(const Mat<S>& x, Activation a) {
  return x.unaryExpr([a](S v) { return activate(v, a); });
}

template <typename S>
void softmax_rows(Mat<S>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const S mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp().matrix();
    m.row(i) /= m.row(i).sum();
  }
}

// Deterministic inverted-dropout mask source.
class DropoutRng {
public:
  explicit DropoutRng(std::uint64_t seed) : rng_(seed) {}
  template <typename S>
  Mat<S> mask(Eigen::Index rows, Eigen::Index cols, double p) {
    Mat<S> m(rows, cols);
    const S keep = static_cast<S>(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
      m.data()[i] = u < p ? S(0) : keep;
    }
    return m;
  }

private:
  std::mt19937_64 rng_;
};

template <typename S>
struct BlockTrace {
  Mat<S> x_in;
  LayerNormCache<S> ln1;
  Mat<S> h1, q, k, v;
  std::vector<Mat<S>> attn;  // per head, tokens x tokens
  Mat<S> o;                  // concatenated head outputs
  Mat<S> mask1;              // empty when dropout is inactive
  Mat<S> x1;
  LayerNormCache<S> ln2;
  Mat<S> h2, f1, g;
  Mat<S> mask2;
};

// Everything backward() needs from one train-mode forward pass.
template <typename S>
struct ForwardTrace {
  bool valid = false;
  Mat<S> patches;
  std::vector<BlockTrace<S>> blocks;
  Mat<S> x_final;
  LayerNormCache<S> lnf;
  std::vector<Mat<S>> head_in;   // input of each head layer
  std::vector<Mat<S>> head_pre;  // pre-activation of each head layer
  Mat<S> output;
};

enum class Mode { Train, Eval };

namespace detail {

template <typename S>
void check_finite(const Mat<S>& m, const char* layer) {
  if (!m.allFinite()) throw NumericalFault(std::string("non-finite activation in layer '") + layer + "'");
}

}  // namespace detail

/// Pre-norm encoder block: x + Drop(MHSA(LN1(x))), then + Drop(FFN(LN2(.))).
/// `attn_out`, when given, receives the per-head attention matrices.
template <typename S>
Mat<S> encoder_block(const BlockParams<S>& b, const PolicyConfig& cfg, const Mat<S>& x,
                     DropoutRng* dropout, BlockTrace<S>* tr, std::vector<Mat<S>>* attn_out = nullptr) {
  const Eigen::Index n = x.rows();
  const int d = cfg.embed_dim, heads = cfg.heads, dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  LayerNormCache<S> ln1;
  Mat<S> h1 = layer_norm(x, b.ln1_g, b.ln1_b, &ln1);
  Mat<S> q = h1 * b.wq;
  q.rowwise() += b.bq.row(0);
  Mat<S> k = h1 * b.wk;
  k.rowwise() += b.bk.row(0);
  Mat<S> v = h1 * b.wv;
  v.rowwise() += b.bv.row(0);

  Mat<S> o(n, d);
  std::vector<Mat<S>> attn(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Mat<S> a = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
    softmax_rows(a);
    o.middleCols(h * dh, dh) = a * v.middleCols(h * dh, dh);
    attn[static_cast<std::size_t>(h)] = std::move(a);
  }
  Mat<S> m = o * b.wo;
  m.rowwise() += b.bo.row(0);
  detail::check_finite(m, "attention");

  Mat<S> mask1, mask2;
  if (dropout && cfg.dropout_p > 0) {
    mask1 = dropout->template mask<S>(n, d, cfg.dropout_p);
    m = (m.array() * mask1.array()).matrix();
  }
  Mat<S> x1 = x + m;

  LayerNormCache<S> ln2;
  Mat<S> h2 = layer_norm(x1, b.ln2_g, b.ln2_b, &ln2);
  Mat<S> f1 = h2 * b.w1;
  f1.rowwise() += b.b1.row(0);
  Mat<S> g = activate(f1, cfg.activation);
  Mat<S> f2 = g * b.w2;
  f2.rowwise() += b.b2.row(0);
  detail::check_finite(f2, "ffn");
  if (dropout && cfg.dropout_p > 0) {
    mask2 = dropout->template mask<S>(n, d, cfg.dropout_p);
    f2 = (f2.array() * mask2.array()).matrix();
  }
  Mat<S> out = x1 + f2;

  if (attn_out) *attn_out = attn;
  if (tr) {
    tr->x_in = x;
    tr->ln1 = std::move(ln1);
    tr->h1 = std::move(h1);
    tr->q = std::move(q);
    tr->k = std::move(k);
    tr->v = std::move(v);
    tr->attn = std::move(attn);
    tr->o = std::move(o);
    tr->mask1 = std::move(mask1);
    tr->x1 = std::move(x1);
    tr->ln2 = std::move(ln2);
    tr->h2 = std::move(h2);
    tr->f1 = std::move(f1);
    tr->g = std::move(g);
    tr->mask2 = std::move(mask2);
  }
  return out;
}

/// Full policy evaluation. Train mode samples dropout masks from
/// `dropout_seed`; eval mode is deterministic and dropout-free. When `trace`
/// is non-null the activations needed by backward() are recorded.
template <typename S>
Mat<S> forward(const PolicyParams<S>& p, const Observation& obs, Mode mode, std::uint64_t dropout_seed,
               ForwardTrace<S>* trace = nullptr) {
  const auto& cfg = p.cfg;
  if (obs.channels != cfg.channels())
    throw InputError("observation has " + std::to_string(obs.channels) + " channels, " +
                     modality_name(cfg.modality) + " policy expects " + std::to_string(cfg.channels()));
  if (obs.width != cfg.input_res || obs.height != cfg.input_res)
    throw InputError("observation is " + std::to_string(obs.width) + "x" + std::to_string(obs.height) +
                     ", policy expects " + std::to_string(cfg.input_res));

  Mat<S> P = extract_patches<S>(obs, cfg.patch);
  Mat<S> tokens = P * p.patch_w;
  tokens.rowwise() += p.patch_b.row(0);
  detail::check_finite(tokens, "patch_embed");

  const int n = cfg.tokens();
  Mat<S> x(n, cfg.embed_dim);
  x.row(0) = p.cls.row(0);
  x.bottomRows(n - 1) = tokens;
  x += positional_encoding<S>(n, cfg.embed_dim);

  DropoutRng rng(dropout_seed);
  DropoutRng* drop = mode == Mode::Train ? &rng : nullptr;
  if (trace) {
    trace->blocks.assign(p.blocks.size(), {});
    trace->patches = std::move(P);
  }
  for (std::size_t i = 0; i < p.blocks.size(); ++i)
    x = encoder_block(p.blocks[i], cfg, x, drop, trace ? &trace->blocks[i] : nullptr);

  LayerNormCache<S> lnf;
  Mat<S> a = layer_norm<S>(x.topRows(1), p.lnf_g, p.lnf_b, &lnf);
  std::vector<Mat<S>> head_in, head_pre;
  for (std::size_t l = 0; l < p.head_w.size(); ++l) {
    Mat<S> pre = a * p.head_w[l];
    pre.rowwise() += p.head_b[l].row(0);
    head_in.push_back(a);
    const bool last = l + 1 == p.head_w.size();
    if (!last) a = activate(pre, cfg.activation);
    else if (cfg.head == Head::Nav) a = pre.array().tanh().matrix();
    else a = pre;
    head_pre.push_back(std::move(pre));
  }
  detail::check_finite(a, "head");

  if (trace) {
    trace->x_final = std::move(x);
    trace->lnf = std::move(lnf);
    trace->head_in = std::move(head_in);
    trace->head_pre = std::move(head_pre);
    trace->output = a;
    trace->valid = true;
  }
  return a;
}

/// Reverse-mode pass for one sample: adds d(loss)/d(param) into `grads`
/// given d(loss)/d(output) (1 x output_dim).
template <typename S>
void accumulate_backward(const PolicyParams<S>& p, const ForwardTrace<S>& tr, const Mat<S>& dout,
                         PolicyParams<S>& grads) {
  if (!tr.valid) throw ContractViolation("backward requires a trace recorded by forward()");
  const auto& cfg = p.cfg;
  if (dout.rows() != 1 || dout.cols() != cfg.output_dim())
    throw ContractViolation("output gradient has the wrong shape");

  // Head.
  Mat<S> da = dout;
  for (std::size_t l = p.head_w.size(); l-- > 0;) {
    const bool last = l + 1 == p.head_w.size();
    Mat<S> dpre;
    if (last) {
      if (cfg.head == Head::Nav)
        dpre = (da.array() * (S(1) - tr.output.array().square())).matrix();
      else
        dpre = da;
    } else {
      dpre = (da.array() * tr.head_pre[l].unaryExpr([&](S v) { return activate_grad(v, cfg.activation); }).array())
                 .matrix();
    }
    grads.head_w[l].noalias() += tr.head_in[l].transpose() * dpre;
    grads.head_b[l] += dpre;
    da = dpre * p.head_w[l].transpose();
  }

  // Final LayerNorm on the class token only.
  Mat<S> dx = Mat<S>::Zero(cfg.tokens(), cfg.embed_dim);
  dx.topRows(1) = layer_norm_backward(da, tr.lnf, p.lnf_g, grads.lnf_g, grads.lnf_b);

  const int d = cfg.embed_dim, heads = cfg.heads, dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  for (std::size_t bi = p.blocks.size(); bi-- > 0;) {
    const auto& b = p.blocks[bi];
    const auto& t = tr.blocks[bi];
    auto& gb = grads.blocks[bi];

    // FFN sub-layer.
    Mat<S> dx1 = dx;
    Mat<S> df2 = t.mask2.size() ? Mat<S>((dx.array() * t.mask2.array()).matrix()) : dx;
    gb.w2.noalias() += t.g.transpose() * df2;
    gb.b2.row(0) += df2.colwise().sum();
    Mat<S> dg = df2 * b.w2.transpose();
    Mat<S> df1 = (dg.array() * t.f1.unaryExpr([&](S v) { return activate_grad(v, cfg.activation); }).array()).matrix();
    gb.w1.noalias() += t.h2.transpose() * df1;
    gb.b1.row(0) += df1.colwise().sum();
    Mat<S> dh2 = df1 * b.w1.transpose();
    dx1 += layer_norm_backward(dh2, t.ln2, b.ln2_g, gb.ln2_g, gb.ln2_b);

    // Attention sub-layer.
    Mat<S> dxin = dx1;
    Mat<S> dm = t.mask1.size() ? Mat<S>((dx1.array() * t.mask1.array()).matrix()) : dx1;
    gb.wo.noalias() += t.o.transpose() * dm;
    gb.bo.row(0) += dm.colwise().sum();
    Mat<S> dO = dm * b.wo.transpose();
    Mat<S> dq(dO.rows(), d), dk(dO.rows(), d), dv(dO.rows(), d);
    for (int h = 0; h < heads; ++h) {
      const Mat<S>& A = t.attn[static_cast<std::size_t>(h)];
      const auto dOh = dO.middleCols(h * dh, dh);
      Mat<S> dA = dOh * t.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = A.transpose() * dOh;
      Mat<S> dS(A.rows(), A.cols());
      for (Eigen::Index i = 0; i < A.rows(); ++i) {
        const S dot = dA.row(i).dot(A.row(i));
        dS.row(i) = (A.row(i).array() * (dA.row(i).array() - dot)).matrix();
      }
      dS *= scale;
      dq.middleCols(h * dh, dh) = dS * t.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = dS.transpose() * t.q.middleCols(h * dh, dh);
    }
    gb.wq.noalias() += t.h1.transpose() * dq;
    gb.bq.row(0) += dq.colwise().sum();
    gb.wk.noalias() += t.h1.transpose() * dk;
    gb.bk.row(0) += dk.colwise().sum();
    gb.wv.noalias() += t.h1.transpose() * dv;
    gb.bv.row(0) += dv.colwise().sum();
    Mat<S> dh1 = dq * b.wq.transpose() + dk * b.wk.transpose() + dv * b.wv.transpose();
    dxin += layer_norm_backward(dh1, t.ln1, b.ln1_g, gb.ln1_g, gb.ln1_b);
    dx = std::move(dxin);
  }

  // Class token and patch embedding (positional encodings are fixed).
  grads.cls.row(0) += dx.row(0);
  const auto dtok = dx.bottomRows(dx.rows() - 1);
  grads.patch_w.noalias() += tr.patches.transpose() * dtok;
  grads.patch_b.row(0) += dtok.colwise().sum();
}

template <typename S>
PolicyParams<S> backward(const PolicyParams<S>& p, const ForwardTrace<S>& tr, const Mat<S>& dout) {
  PolicyParams<S> g = p.zeros_like();
  accumulate_backward(p, tr, dout, g);
  return g;
}

// Checkpoint: "EBVP", u16 version, PolicyConfig, u32 tensor count, then per
// tensor (u32 name length, name, u32 rows, u32 cols, rows*cols f32), all LE.
inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename S>
std::vector<std::uint8_t> encode_checkpoint(const PolicyParams<S>& p) {
  std::vector<std::uint8_t> out;
  le::put_bytes(out, "EBVP", 4);
  le::put<std::uint16_t>(out, kCheckpointVersion);
  const auto& c = p.cfg;
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.input_res));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.patch));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.embed_dim));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.heads));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.ffn_dim));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.depth));
  le::put<double>(out, c.dropout_p);
  le::put<std::uint8_t>(out, static_cast<std::uint8_t>(c.modality));
  le::put<std::uint8_t>(out, static_cast<std::uint8_t>(c.head));
  le::put<std::uint8_t>(out, static_cast<std::uint8_t>(c.activation));
  le::put<std::uint8_t>(out, 0);
  le::put<std::uint64_t>(out, c.seed);
  std::uint32_t count = 0;
  p.visit([&](const std::string&, const Mat<S>&) { ++count; });
  le::put<std::uint32_t>(out, count);
  p.visit([&](const std::string& name, const Mat<S>& m) {
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    le::put_bytes(out, name.data(), name.size());
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) le::put<float>(out, static_cast<float>(m.data()[i]));
  });
  return out;
}

template <typename S>
PolicyParams<S> decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  le::Reader r(bytes.data(), bytes.size(), context);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::string(magic, 4) != "EBVP") throw FormatError(context + ": bad checkpoint magic");
  if (r.get<std::uint16_t>() != kCheckpointVersion) throw FormatError(context + ": unsupported checkpoint version");
  PolicyConfig c;
  c.input_res = static_cast<int>(r.get<std::uint32_t>());
  c.patch = static_cast<int>(r.get<std::uint32_t>());
  c.embed_dim = static_cast<int>(r.get<std::uint32_t>());
  c.heads = static_cast<int>(r.get<std::uint32_t>());
  c.ffn_dim = static_cast<int>(r.get<std::uint32_t>());
  c.depth = static_cast<int>(r.get<std::uint32_t>());
  c.dropout_p = r.get<double>();
  const auto mod = r.get<std::uint8_t>(), head = r.get<std::uint8_t>(), act = r.get<std::uint8_t>();
  r.get<std::uint8_t>();
  if (mod > 2 || head > 1 || act > 1) throw FormatError(context + ": invalid enum in checkpoint config");
  c.modality = static_cast<Modality>(mod);
  c.head = static_cast<Head>(head);
  c.activation = static_cast<Activation>(act);
  c.seed = r.get<std::uint64_t>();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(context + ": " + e.what());
  }

  PolicyParams<S> p = init_params<S>(c);
  std::uint32_t expected = 0;
  p.visit([&](const std::string&, const Mat<S>&) { ++expected; });
  const auto count = r.get<std::uint32_t>();
  if (count != expected)
    throw FormatError(context + ": checkpoint has " + std::to_string(count) + " tensors, expected " +
                      std::to_string(expected));
  p.visit([&](const std::string& name, Mat<S>& m) {
    const auto len = r.get<std::uint32_t>();
    if (len > r.remaining()) throw FormatError(context + ": truncated tensor name");
    std::string got(len, '\0');
    r.get_bytes(got.data(), len);
    const auto rows = r.get<std::uint32_t>(), cols = r.get<std::uint32_t>();
    if (got != name || rows != m.rows() || cols != m.cols())
      throw FormatError(context + ": tensor '" + got + "' " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " does not match manifest entry '" + name + "' " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(r.get<float>());
  });
  if (r.remaining() != 0) throw FormatError(context + ": trailing bytes after last tensor");
  return p;
}

template <typename S>
void save_checkpoint(const std::string& path, const PolicyParams<S>& p) {
  write_file_bytes(path, encode_checkpoint(p));
}

template <typename S>
PolicyParams<S> load_checkpoint(const std::string& path) {
  return decode_checkpoint<S>(read_file_bytes(path), path);
}

}  // namespace sebvs::vit
