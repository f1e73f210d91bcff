#include <gtest/gtest.h>

#include <random>

#include "sebvs/vit.hpp"

using namespace sebvs;
using namespace sebvs::vit;

namespace {

PolicyConfig tiny(Modality m = Modality::Fused, Head h = Head::Nav) {
  PolicyConfig c;
  c.input_res = 32;
  c.patch = 16;
  c.embed_dim = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.modality = m;
  c.head = h;
  c.seed = 3;
  return c;
}

Observation random_obs(int channels, int res, std::uint64_t seed) {
  Observation o(channels, res, res);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : o.data) v = u(rng);
  return o;
}

// Perturb every parameter so zero-initialised biases and tokens carry signal.
template <typename S>
void jitter(PolicyParams<S>& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.2);
  p.visit([&](const std::string&, Mat<S>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += static_cast<S>(n(rng));
  });
}

using Rows = std::vector<std::vector<double>>;

Rows to_rows(const Mat<double>& m) {
  Rows r(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

Rows naive_ln(const Rows& x, const Mat<double>& g, const Mat<double>& b) {
  Rows y = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mean = 0, var = 0;
    for (double v : x[i]) mean += v;
    mean /= x[i].size();
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= x[i].size();
    for (std::size_t j = 0; j < x[i].size(); ++j)
      y[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-5) * g(0, j) + b(0, j);
  }
  return y;
}

Rows naive_affine(const Rows& x, const Mat<double>& w, const Mat<double>& b) {
  Rows y(x.size(), std::vector<double>(w.cols(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double acc = b(0, j);
      for (Eigen::Index k = 0; k < w.rows(); ++k) acc += x[i][k] * w(k, j);
      y[i][j] = acc;
    }
  return y;
}

}  // namespace

TEST(PolicyConfig, ShapesAndValidation) {
  PolicyConfig c;
  EXPECT_EQ(c.tokens(), 65);
  EXPECT_EQ(c.patch_dim(), 16 * 16 * 5);
  c.modality = Modality::Event;
  EXPECT_EQ(c.channels(), 2);
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.input_res = 100;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_modality("event"), Modality::Event);
  EXPECT_THROW(parse_modality("depth"), ConfigError);
}

TEST(PositionalEncoding, ClosedFormValues) {
  const auto pe = positional_encoding<double>(65, 64);
  EXPECT_DOUBLE_EQ(pe(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(pe(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(pe(1, 0), std::sin(1.0));
  EXPECT_DOUBLE_EQ(pe(1, 1), std::cos(1.0));
  EXPECT_NEAR(pe(3, 2), std::sin(3.0 / std::pow(10000.0, 2.0 / 64)), 1e-15);
  EXPECT_NEAR(pe(64, 63), std::cos(64.0 / std::pow(10000.0, 62.0 / 64)), 1e-15);
  for (int pos = 0; pos < 65; ++pos)
    for (int i = 0; i < 32; ++i)
      EXPECT_NEAR(pe(pos, 2 * i) * pe(pos, 2 * i) + pe(pos, 2 * i + 1) * pe(pos, 2 * i + 1), 1.0, 1e-12);
}

TEST(LayerNorm, NormalizedRows) {
  Mat<double> x = Mat<double>::Random(5, 16) * 3.0;
  x.array() += 2.0;
  const Mat<double> g = Mat<double>::Ones(1, 16), b = Mat<double>::Zero(1, 16);
  const auto y = layer_norm<double>(x, g, b, nullptr);
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(y.row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR((y.row(i).array() - y.row(i).mean()).square().mean(), 1.0, 1e-4);
  }
  // shift and scale invariance
  const Mat<double> x2 = (x.array() * 7.0 + 3.0).matrix();
  EXPECT_LT((layer_norm<double>(x2, g, b, nullptr) - y).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Patches, ChannelMajorLayout) {
  Observation o(2, 4, 4);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) o.at(c, y, x) = static_cast<float>(100 * c + 10 * y + x);
  const auto P = extract_patches<double>(o, 2);
  ASSERT_EQ(P.rows(), 4);
  ASSERT_EQ(P.cols(), 8);
  // patch (1,0): x 2..3, y 0..1
  EXPECT_EQ(P(1, 0), 2);
  EXPECT_EQ(P(1, 3), 13);
  EXPECT_EQ(P(1, 4), 102);
  // patch (0,1): y 2..3
  EXPECT_EQ(P(2, 0), 20);
  EXPECT_THROW(extract_patches<double>(o, 3), InputError);
}

TEST(Attention, MatchesBruteForce) {
  auto cfg = tiny();
  cfg.dropout_p = 0.0;
  auto p = init_params<double>(cfg);
  jitter(p, 11);
  const auto& b = p.blocks[0];
  Mat<double> x = Mat<double>::Random(cfg.tokens(), cfg.embed_dim);
  std::vector<Mat<double>> attn;
  const auto out = encoder_block<double>(b, cfg, x, nullptr, nullptr, &attn);

  const Rows h1 = naive_ln(to_rows(x), b.ln1_g, b.ln1_b);
  const Rows q = naive_affine(h1, b.wq, b.bq), k = naive_affine(h1, b.wk, b.bk), v = naive_affine(h1, b.wv, b.bv);
  const int n = cfg.tokens(), dh = cfg.embed_dim / cfg.heads;
  Rows o(n, std::vector<double>(cfg.embed_dim, 0.0));
  for (int h = 0; h < cfg.heads; ++h)
    for (int i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double mx = -1e300, z = 0;
      for (int j = 0; j < n; ++j) {
        double dot = 0;
        for (int t = 0; t < dh; ++t) dot += q[i][h * dh + t] * k[j][h * dh + t];
        s[j] = dot / std::sqrt(double(dh));
        mx = std::max(mx, s[j]);
      }
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (int j = 0; j < n; ++j) {
        s[j] /= z;
        EXPECT_NEAR(attn[h](i, j), s[j], 1e-12);
        for (int t = 0; t < dh; ++t) o[i][h * dh + t] += s[j] * v[j][h * dh + t];
      }
    }
  Rows x1 = naive_affine(o, b.wo, b.bo);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cfg.embed_dim; ++j) x1[i][j] += x(i, j);
  const Rows h2 = naive_ln(x1, b.ln2_g, b.ln2_b);
  Rows f = naive_affine(h2, b.w1, b.b1);
  for (auto& r : f)
    for (auto& e : r) e = 0.5 * e * (1 + std::erf(e / std::sqrt(2.0)));
  const Rows f2 = naive_affine(f, b.w2, b.b2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cfg.embed_dim; ++j) EXPECT_NEAR(out(i, j), x1[i][j] + f2[i][j], 1e-10);
  for (const auto& a : attn)
    for (int i = 0; i < n; ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
}

TEST(Forward, OutputRangeAndModes) {
  auto p = init_params<double>(tiny());
  jitter(p, 1);
  const auto obs = random_obs(5, 32, 2);
  const auto e1 = forward(p, obs, Mode::Eval, 1), e2 = forward(p, obs, Mode::Eval, 99);
  EXPECT_EQ(e1, e2);
  const auto t1 = forward(p, obs, Mode::Train, 1), t1b = forward(p, obs, Mode::Train, 1);
  const auto t2 = forward(p, obs, Mode::Train, 2);
  EXPECT_EQ(t1, t1b);
  EXPECT_NE(t1, t2);
  EXPECT_LE(e1.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_THROW(forward(p, random_obs(3, 32, 1), Mode::Eval, 0), InputError);
  EXPECT_THROW(forward(p, random_obs(5, 48, 1), Mode::Eval, 0), InputError);
}

TEST(Forward, FusedWithZeroEventWeightsEqualsRgb) {
  auto fused = init_params<double>(tiny(Modality::Fused));
  jitter(fused, 5);
  const int rgb_rows = 3 * 16 * 16;
  fused.patch_w.bottomRows(fused.patch_w.rows() - rgb_rows).setZero();
  auto rgb = init_params<double>(tiny(Modality::Rgb));
  rgb = [&] {
    auto r = fused;
    r.cfg = tiny(Modality::Rgb);
    r.patch_w = fused.patch_w.topRows(rgb_rows);
    return r;
  }();
  const auto obs = random_obs(5, 32, 7);
  const auto a = forward(fused, obs, Mode::Eval, 0);
  const auto b = forward(rgb, select_channels(obs, Modality::Rgb), Mode::Eval, 0);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SelectChannels, PicksPlanes) {
  const auto obs = random_obs(5, 16, 1);
  const auto ev = select_channels(obs, Modality::Event);
  EXPECT_EQ(ev.channels, 2);
  EXPECT_EQ(ev.at(0, 3, 4), obs.at(3, 3, 4));
  EXPECT_EQ(ev.at(1, 5, 6), obs.at(4, 5, 6));
  EXPECT_EQ(select_channels(obs, Modality::Rgb).at(2, 1, 1), obs.at(2, 1, 1));
}

class GradCheck : public ::testing::TestWithParam<std::tuple<Head, Activation>> {};

TEST_P(GradCheck, AnalyticMatchesCentralDifferences) {
  auto cfg = tiny(Modality::Fused, std::get<0>(GetParam()));
  cfg.activation = std::get<1>(GetParam());
  cfg.depth = 2;
  auto p = init_params<double>(cfg);
  jitter(p, 21);
  const auto obs = random_obs(5, 32, 4);
  Mat<double> w = Mat<double>::Random(1, cfg.output_dim());
  auto loss = [&](const PolicyParams<double>& q) { return (forward(q, obs, Mode::Train, 8).array() * w.array()).sum(); };

  ForwardTrace<double> tr;
  forward(p, obs, Mode::Train, 8, &tr);
  const auto g = backward(p, tr, w);

  std::vector<std::pair<std::string, const Mat<double>*>> analytic;
  g.visit([&](const std::string& name, const Mat<double>& m) { analytic.push_back({name, &m}); });
  std::size_t idx = 0;
  p.visit([&](const std::string& name, Mat<double>& m) {
    const Mat<double>& ga = *analytic[idx++].second;
    double num_sq = 0, diff_sq = 0, ana_sq = 0;
    const Eigen::Index stride = std::max<Eigen::Index>(1, m.size() / 40);
    for (Eigen::Index i = 0; i < m.size(); i += stride) {
      const double keep = m.data()[i];
      const double h = 1e-5;
      m.data()[i] = keep + h;
      const double lp = loss(p);
      m.data()[i] = keep - h;
      const double lm = loss(p);
      m.data()[i] = keep;
      const double num = (lp - lm) / (2 * h);
      num_sq += num * num;
      ana_sq += ga.data()[i] * ga.data()[i];
      diff_sq += (num - ga.data()[i]) * (num - ga.data()[i]);
    }
    // Key bias gradients are identically zero (softmax is shift invariant per
    // row); those are compared against an absolute floor above the
    // finite-difference noise.
    const double scale = std::max({std::sqrt(num_sq), std::sqrt(ana_sq), 1e-4});
    EXPECT_LT(std::sqrt(diff_sq) / scale, 1e-5) << name;
  });
}

INSTANTIATE_TEST_SUITE_P(Heads, GradCheck,
                         ::testing::Combine(::testing::Values(Head::Nav, Head::Arm),
                                            ::testing::Values(Activation::Gelu, Activation::Relu)));

TEST(Checkpoint, RoundTripIsFloatExact) {
  auto p = init_params<double>(tiny(Modality::Event, Head::Arm));
  jitter(p, 9);
  const auto bytes = encode_checkpoint(p);
  const auto q = decode_checkpoint<double>(bytes, "mem");
  EXPECT_EQ(q.cfg, p.cfg);
  std::vector<Mat<double>> a, b;
  p.visit([&](const std::string&, const Mat<double>& m) { a.push_back(m.cast<float>().cast<double>()); });
  q.visit([&](const std::string&, const Mat<double>& m) { b.push_back(m); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_EQ(encode_checkpoint(q), bytes);

  auto trunc = bytes;
  trunc.pop_back();
  EXPECT_THROW(decode_checkpoint<double>(trunc, "t"), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint<double>(extra, "x"), FormatError);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint<double>(bad, "m"), FormatError);
}

TEST(Checkpoint, ParameterCountOfDefaultNav) {
  PolicyConfig c;
  const auto p = init_params<float>(c);
  const std::size_t d = 64, f = 256;
  const std::size_t expect = (1280 * d + d) + d + (2 * d + 4 * (d * d + d) + 2 * d + d * f + f + f * d + d) +
                             2 * d + (d * 64 + 64) + (64 * 2 + 2);
  EXPECT_EQ(p.parameter_count(), expect);
}
