#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sebvs/dataset.hpp"
#include "sebvs/event_frame.hpp"
#include "sebvs/parallel.hpp"
#include "sebvs/vit.hpp"

namespace sebvs::train {

using vit::Mat;

enum class LossKind { Mse, SmoothL1 };

inline LossKind parse_loss(const std::string& s) {
  if (s == "mse") return LossKind::Mse;
  if (s == "smooth_l1") return LossKind::SmoothL1;
  throw ConfigError("unknown loss '" + s + "' (expected mse|smooth_l1)");
}
inline const char* loss_name(LossKind k) { return k == LossKind::Mse ? "mse" : "smooth_l1"; }

template <typename S>
struct LossResult {
  double loss = 0.0;
  Mat<S> grad;  // d loss / d pred, same shape as pred
};

/// Mean over every element of the squared error.
template <typename S>
LossResult<S> mse_loss(const Mat<S>& pred, const Mat<S>& target) {
  if (pred.size() == 0) throw InputError("loss requires a non-empty batch");
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InputError("prediction and target shapes differ");
  const double n = static_cast<double>(pred.size());
  const Mat<S> e = pred - target;
  LossResult<S> r;
  r.loss = e.template cast<double>().squaredNorm() / n;
  r.grad = e * static_cast<S>(2.0 / n);
  return r;
}

/// Huber loss with unit transition, mean-reduced over every element.
template <typename S>
LossResult<S> smooth_l1_loss(const Mat<S>& pred, const Mat<S>& target) {
  if (pred.size() == 0) throw InputError("loss requires a non-empty batch");
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InputError("prediction and target shapes differ");
  const double n = static_cast<double>(pred.size());
  LossResult<S> r;
  r.grad.resize(pred.rows(), pred.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    const double a = std::abs(e);
    sum += a < 1.0 ? 0.5 * e * e : a - 0.5;
    const double g = a < 1.0 ? e : (e > 0 ? 1.0 : -1.0);
    r.grad.data()[i] = static_cast<S>(g / n);
  }
  r.loss = sum / n;
  return r;
}

template <typename S>
LossResult<S> compute_loss(LossKind kind, const Mat<S>& pred, const Mat<S>& target) {
  return kind == LossKind::Mse ? mse_loss(pred, target) : smooth_l1_loss(pred, target);
}

template <typename S>
struct AdamState {
  vit::PolicyParams<S> m;
  vit::PolicyParams<S> v;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(const vit::PolicyParams<S>& like) : m(like.zeros_like()), v(like.zeros_like()) {}
};

/// Adam with classic L2 weight decay folded into the gradient.
template <typename S>
void adam_step(vit::PolicyParams<S>& params, const vit::PolicyParams<S>& grads, AdamState<S>& st, double lr,
               double weight_decay) {
  std::vector<Mat<S>*> p_list, m_list, v_list;
  std::vector<const Mat<S>*> g_list;
  params.visit([&](const std::string&, Mat<S>& t) { p_list.push_back(&t); });
  st.m.visit([&](const std::string&, Mat<S>& t) { m_list.push_back(&t); });
  st.v.visit([&](const std::string&, Mat<S>& t) { v_list.push_back(&t); });
  grads.visit([&](const std::string& name, const Mat<S>& t) {
    if (!t.allFinite()) throw NumericalFault("non-finite gradient in '" + name + "'");
    g_list.push_back(&t);
  });
  if (p_list.size() != g_list.size()) throw ContractViolation("gradient structure does not match parameters");

  ++st.step_count;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  const S b1 = static_cast<S>(st.beta1), b2 = static_cast<S>(st.beta2);
  for (std::size_t k = 0; k < p_list.size(); ++k) {
    auto& p = *p_list[k];
    const auto& g0 = *g_list[k];
    if (p.rows() != g0.rows() || p.cols() != g0.cols())
      throw ContractViolation("gradient shape mismatch at tensor " + std::to_string(k));
    auto& m = *m_list[k];
    auto& v = *v_list[k];
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const S g = g0.data()[i] + static_cast<S>(weight_decay) * p.data()[i];
      m.data()[i] = b1 * m.data()[i] + (S(1) - b1) * g;
      v.data()[i] = b2 * v.data()[i] + (S(1) - b2) * g * g;
      const double mhat = m.data()[i] / bc1;
      const double vhat = v.data()[i] / bc2;
      p.data()[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
}

// Stops after `patience` consecutive epochs without a strictly lower val loss.
class EarlyStopping {
public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  /// Returns true when this value is a new best.
  bool update(double val) {
    if (val < best_) {
      best_ = val;
      bad_ = 0;
      return true;
    }
    ++bad_;
    return false;
  }
  bool should_stop() const { return bad_ >= patience_; }
  double best() const { return best_; }

private:
  int patience_;
  int bad_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

// Multiplies the learning rate by `factor` once the val loss has failed to
// improve by at least `threshold` (absolute) for `patience` epochs.
class PlateauScheduler {
public:
  PlateauScheduler(double factor, double threshold, int patience)
      : factor_(factor), threshold_(threshold), patience_(patience) {}
  double step(double val, double lr) {
    if (val < best_ - threshold_) {
      best_ = val;
      bad_ = 0;
      return lr;
    }
    if (++bad_ >= patience_) {
      bad_ = 0;
      return lr * factor_;
    }
    return lr;
  }

private:
  double factor_;
  double threshold_;
  int patience_;
  int bad_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct TrainConfig {
  double lr = 2e-4;
  double weight_decay = 1e-4;
  int batch = 32;
  int epochs = 10;
  int patience_early = 2;
  LossKind loss = LossKind::Mse;
  bool plateau = false;
  double plateau_factor = 0.5;
  double plateau_threshold = 1e-4;
  int plateau_patience = 2;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  static TrainConfig nav_defaults() { return {}; }
  static TrainConfig arm_defaults() {
    TrainConfig c;
    c.lr = 1e-4;
    c.loss = LossKind::SmoothL1;
    c.plateau = true;
    return c;
  }

  void validate() const {
    if (!(lr > 0)) throw ConfigError("train.lr must be > 0");
    if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be >= 0");
    if (batch < 1) throw ConfigError("train.batch must be >= 1");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (patience_early < 1) throw ConfigError("train.patience must be >= 1");
    if (!(plateau_factor > 0 && plateau_factor < 1)) throw ConfigError("train.plateau_factor must be in (0,1)");
    if (!(plateau_threshold >= 0)) throw ConfigError("train.plateau_threshold must be >= 0");
    if (plateau_patience < 1) throw ConfigError("train.plateau_patience must be >= 1");
    if (!(val_fraction > 0 && val_fraction <= 0.5)) throw ConfigError("train.val_fraction must be in (0, 0.5]");
  }
};

// Random-access source of (observation, normalized target) pairs.
class SampleSource {
public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::size_t episode_of(std::size_t i) const = 0;
  virtual void load(std::size_t i, Observation& obs, std::vector<float>& target) const = 0;
};

class MemorySamples : public SampleSource {
public:
  void add(Observation obs, std::vector<float> target, std::size_t episode = 0) {
    obs_.push_back(std::move(obs));
    targets_.push_back(std::move(target));
    episodes_.push_back(episode);
  }
  std::size_t size() const override { return obs_.size(); }
  std::size_t episode_of(std::size_t i) const override { return episodes_.at(i); }
  void load(std::size_t i, Observation& obs, std::vector<float>& target) const override {
    obs = obs_.at(i);
    target = targets_.at(i);
  }

private:
  std::vector<Observation> obs_;
  std::vector<std::vector<float>> targets_;
  std::vector<std::size_t> episodes_;
};

// Builds policy inputs on demand from a loaded dataset. `stride` keeps every
// stride-th step of each episode (1 = all steps).
class StoreSamples : public SampleSource {
public:
  StoreSamples(const data::SampleStore& store, vit::Modality modality, data::ActionNormalizer norm, int clip,
               int stride = 1)
      : store_(store), modality_(modality), norm_(std::move(norm)), clip_(clip) {
    if (stride < 1) throw ConfigError("sample stride must be >= 1");
    if (norm_.dim() != store.header().action_dim)
      throw IncompatibleError("action normalizer dimension differs from dataset action_dim");
    for (std::size_t e = 0; e < store.episode_count(); ++e) {
      const std::size_t start = store.boundaries()[e];
      const std::size_t n = store.episode(e).records.size();
      for (std::size_t k = 0; k < n; k += static_cast<std::size_t>(stride)) {
        index_.push_back(start + k);
        episode_.push_back(e);
      }
    }
  }
  std::size_t size() const override { return index_.size(); }
  std::size_t episode_of(std::size_t i) const override { return episode_.at(i); }
  void load(std::size_t i, Observation& obs, std::vector<float>& target) const override {
    const auto& r = store_[index_.at(i)];
    obs = vit::select_channels(to_observation(r.rgb, r.ev_on, r.ev_off, r.rgb.width, r.rgb.height, clip_), modality_);
    auto norm = norm_;
    const auto n = norm.normalize(std::vector<double>(r.action.begin(), r.action.end()));
    target.assign(n.begin(), n.end());
  }

private:
  const data::SampleStore& store_;
  vit::Modality modality_;
  data::ActionNormalizer norm_;
  int clip_;
  std::vector<std::size_t> index_;
  std::vector<std::size_t> episode_;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int stop_epoch = 0;
  int best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  double wall_time_s = 0.0;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(9);
    os << "epoch,train_loss,val_loss,lr\n";
    for (const auto& e : epochs) os << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.lr << "\n";
    return os.str();
  }
};

template <typename S>
struct TrainResult {
  vit::PolicyParams<S> params;
  TrainReport report;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// One optimizer step on the given samples. Per-sample gradients are computed
/// independently (possibly in parallel) and summed in sample order.
template <typename S>
double train_step(vit::PolicyParams<S>& params, AdamState<S>& adam, const SampleSource& src,
                  const std::vector<std::size_t>& batch, LossKind loss, double lr, double weight_decay,
                  std::uint64_t step_seed) {
  const std::size_t b = batch.size();
  const int out_dim = params.cfg.output_dim();
  std::vector<vit::ForwardTrace<S>> traces(b);
  Mat<S> pred(b, out_dim), target(b, out_dim);
  parallel_for(b, [&](std::size_t i) {
    Observation obs;
    std::vector<float> t;
    src.load(batch[i], obs, t);
    if (static_cast<int>(t.size()) != out_dim) throw IncompatibleError("target dimension differs from policy head");
    pred.row(static_cast<Eigen::Index>(i)) =
        vit::forward(params, obs, vit::Mode::Train, mix_seed(step_seed, batch[i]), &traces[i]);
    for (int k = 0; k < out_dim; ++k) target(static_cast<Eigen::Index>(i), k) = static_cast<S>(t[k]);
  });
  const LossResult<S> lr_ = compute_loss(loss, pred, target);
  std::vector<vit::PolicyParams<S>> per_sample(b);
  parallel_for(b, [&](std::size_t i) {
    per_sample[i] = vit::backward(params, traces[i], Mat<S>(lr_.grad.row(static_cast<Eigen::Index>(i))));
    traces[i] = {};
  });
  vit::PolicyParams<S> grads = std::move(per_sample[0]);
  for (std::size_t i = 1; i < b; ++i) {
    std::vector<Mat<S>*> dst;
    grads.visit([&](const std::string&, Mat<S>& m) { dst.push_back(&m); });
    std::size_t k = 0;
    per_sample[i].visit([&](const std::string&, const Mat<S>& m) { *dst[k++] += m; });
  }
  adam_step(params, grads, adam, lr, weight_decay);
  return lr_.loss;
}

/// Eval-mode predictions for the given samples, one row each.
template <typename S>
Mat<S> predict(const vit::PolicyParams<S>& params, const SampleSource& src, const std::vector<std::size_t>& idx,
               Mat<S>* targets = nullptr) {
  const int out_dim = params.cfg.output_dim();
  Mat<S> pred(idx.size(), out_dim);
  if (targets) targets->resize(static_cast<Eigen::Index>(idx.size()), out_dim);
  parallel_for(idx.size(), [&](std::size_t i) {
    Observation obs;
    std::vector<float> t;
    src.load(idx[i], obs, t);
    pred.row(static_cast<Eigen::Index>(i)) = vit::forward(params, obs, vit::Mode::Eval, 0);
    if (targets)
      for (int k = 0; k < out_dim; ++k) (*targets)(static_cast<Eigen::Index>(i), k) = static_cast<S>(t.at(k));
  });
  return pred;
}

template <typename S>
double evaluate_loss(const vit::PolicyParams<S>& params, const SampleSource& src, const std::vector<std::size_t>& idx,
                     LossKind loss) {
  if (idx.empty()) throw ConfigError("cannot evaluate an empty split");
  Mat<S> targets;
  const Mat<S> pred = predict(params, src, idx, &targets);
  return compute_loss(loss, pred, targets).loss;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Holds out whole episodes: round(val_fraction * episodes), at least one.
inline Split split_by_episode(const SampleSource& src, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> episodes;
  for (std::size_t i = 0; i < src.size(); ++i) episodes.push_back(src.episode_of(i));
  std::sort(episodes.begin(), episodes.end());
  episodes.erase(std::unique(episodes.begin(), episodes.end()), episodes.end());
  if (episodes.size() < 2)
    throw ConfigError("per-episode split needs at least 2 episodes, dataset has " + std::to_string(episodes.size()));
  std::mt19937_64 rng(mix_seed(seed, 0x5eed));
  std::shuffle(episodes.begin(), episodes.end(), rng);
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(episodes.size()))), 1,
      episodes.size() - 1);
  std::vector<bool> is_val(*std::max_element(episodes.begin(), episodes.end()) + 1, false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[episodes[i]] = true;
  Split s;
  for (std::size_t i = 0; i < src.size(); ++i) (is_val[src.episode_of(i)] ? s.val : s.train).push_back(i);
  if (s.train.empty() || s.val.empty()) throw ConfigError("train/val split produced an empty side");
  return s;
}

/// Behavior-cloning loop: seeded shuffles, end-of-epoch validation, early
/// stopping on val loss, optional plateau LR halving. Returns the best-val params.
template <typename S>
TrainResult<S> train_on_split(const vit::PolicyConfig& pcfg, const TrainConfig& tcfg, const SampleSource& src,
                              const Split& split) {
  tcfg.validate();
  if (split.train.empty() || split.val.empty()) throw ConfigError("train/val split produced an empty side");
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult<S> res{vit::init_params<S>(pcfg), {}};
  vit::PolicyParams<S> params = res.params;
  AdamState<S> adam(params);
  EarlyStopping stopper(tcfg.patience_early);
  PlateauScheduler plateau(tcfg.plateau_factor, tcfg.plateau_threshold, tcfg.plateau_patience);
  std::mt19937_64 shuffle_rng(mix_seed(tcfg.seed, 0xba7c));
  double lr = tcfg.lr;
  std::uint64_t step = 0;
  std::vector<std::size_t> order = split.train;

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tcfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch));
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      loss_sum += train_step(params, adam, src, batch, tcfg.loss, lr, tcfg.weight_decay, mix_seed(tcfg.seed, step++));
      ++batches;
    }
    const double val = evaluate_loss(params, src, split.val, tcfg.loss);
    res.report.epochs.push_back({epoch, loss_sum / static_cast<double>(batches), val, lr});
    res.report.stop_epoch = epoch;
    if (stopper.update(val)) {
      res.params = params;
      res.report.best_epoch = epoch;
      res.report.best_val = val;
    }
    if (tcfg.plateau) lr = plateau.step(val, lr);
    if (stopper.should_stop()) break;
  }
  res.report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

template <typename S>
TrainResult<S> train(const vit::PolicyConfig& pcfg, const TrainConfig& tcfg, const SampleSource& src) {
  if (src.size() == 0) throw ConfigError("training dataset is empty");
  return train_on_split<S>(pcfg, tcfg, src, split_by_episode(src, tcfg.val_fraction, tcfg.seed));
}

}  // namespace sebvs::train
