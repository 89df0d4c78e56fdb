#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace gaitcnn;
using testutil::naive_conv;

namespace {

ConvParams conv_with(std::size_t out, std::size_t in, std::vector<double> kernels, std::vector<double> biases) {
  ConvParams p(out, in, kernels.size() / (out * in));
  p.kernels = std::move(kernels);
  p.biases = std::move(biases);
  return p;
}

}  // namespace

TEST(Conv1d, CenteredDeltaIsIdentity) {
  const Series x(1, 4, std::vector<double>{1, 2, 3, 4});
  const auto y = conv1d_forward(x, conv_with(1, 1, {0, 1, 0}, {0}));
  EXPECT_EQ(y.data(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Conv1d, SlidingWindowWithCenteredPadding) {
  const Series x(1, 4, std::vector<double>{1, 0, 0, 0});
  const auto p = conv_with(1, 1, {1, 2, 3}, {0});
  EXPECT_EQ(conv1d_forward(x, p).data(), (std::vector<double>{2, 1, 0, 0}));
  EXPECT_EQ(naive_conv(x, p).data(), (std::vector<double>{2, 1, 0, 0}));
}

TEST(Conv1d, EvenKernelPutsExtraPaddingAfter) {
  ConvParams p(1, 1, 30);
  EXPECT_EQ(p.pad_left(), 14u);
  p.kernels[14] = 1.0;
  std::mt19937_64 rng(3);
  auto x = testutil::random_series(1, 40, rng);
  for (auto& v : x.values()) v = std::abs(v);
  EXPECT_EQ(conv1d_forward(x, p).data(), x.data());
}

TEST(Conv1d, FirstLayerShape) {
  std::mt19937_64 rng(1);
  ConvParams p(32, 6, 30);
  p.kernels = testutil::uniform(p.kernels.size(), rng);
  const auto y = conv1d_forward(testutil::random_series(6, 256, rng), p);
  EXPECT_EQ(y.channels(), 32u);
  EXPECT_EQ(y.length(), 256u);
}

TEST(Conv1d, MatchesNaiveLoopExactly) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t in = 1 + rng() % 6, out = 1 + rng() % 5, K = 1 + rng() % 9, L = 4 + rng() % 40;
    ConvParams p(out, in, K);
    p.kernels = testutil::uniform(p.kernels.size(), rng);
    p.biases = testutil::uniform(out, rng, -0.3, 0.3);
    const auto x = testutil::random_series(in, L, rng);
    ASSERT_EQ(conv1d_forward(x, p).data(), naive_conv(x, p).data()) << "instance " << rep;
  }
}

TEST(Conv1d, RejectsChannelMismatch) {
  ConvParams p(2, 3, 3);
  EXPECT_THROW(conv1d_forward(Series(2, 8), p), DimensionError);
}

TEST(Conv1dBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(5);
  ConvParams p(3, 2, 3);
  p.kernels = testutil::uniform(p.kernels.size(), rng);
  const auto x = testutil::random_series(2, 8, rng);
  const auto g = conv1d_backward(Series(3, 8), x, p);
  for (double v : g.grad_input.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.grad_kernels) EXPECT_EQ(v, 0.0);
  for (double v : g.grad_biases) EXPECT_EQ(v, 0.0);
}

TEST(Conv1dBackward, KernelLengthOneMatchesDense) {
  std::mt19937_64 rng(8);
  const std::size_t in = 4, out = 3;
  ConvParams cp(out, in, 1);
  cp.kernels = testutil::uniform(cp.kernels.size(), rng);
  cp.biases = testutil::uniform(out, rng, 0.1, 0.3);
  DenseParams dp(in, out);
  for (std::size_t k = 0; k < out; ++k)
    for (std::size_t j = 0; j < in; ++j) dp.weight(j, k) = cp.kernel(k, j, 0);
  dp.biases = cp.biases;
  const auto xv = testutil::uniform(in, rng);
  const auto up = testutil::uniform(out, rng);
  const auto gc = conv1d_backward(Series(out, 1, up), Series(in, 1, xv), cp);
  const auto gd = dense_backward(up, xv, dp, Activation::relu);
  for (std::size_t j = 0; j < in; ++j) EXPECT_NEAR(gc.grad_input.values()[j], gd.grad_input[j], 1e-14);
  for (std::size_t k = 0; k < out; ++k) {
    EXPECT_NEAR(gc.grad_biases[k], gd.grad_biases[k], 1e-14);
    for (std::size_t j = 0; j < in; ++j) EXPECT_NEAR(gc.grad_kernels[k * in + j], gd.grad_weights[j * out + k], 1e-14);
  }
}

TEST(Conv1dBackward, FiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = gradcheck::conv_layer(seed);
    EXPECT_TRUE(r.ok()) << "seed " << seed << " max rel " << r.max_rel << " checked " << r.checked;
  }
}

TEST(MaxPool, PicksWindowMaximum) {
  const auto [y, rec] = maxpool_forward(Series(1, 4, std::vector<double>{1, 3, 2, 2}), 2);
  EXPECT_EQ(y.data(), (std::vector<double>{3, 2}));
  EXPECT_EQ(rec.argmax_indices, (std::vector<std::size_t>{1, 2}));
}

TEST(MaxPool, TiesGoToFirstIndex) {
  const auto [y, rec] = maxpool_forward(Series(1, 4, std::vector<double>{5, 5, 5, 5}), 2);
  EXPECT_EQ(y.data(), (std::vector<double>{5, 5}));
  EXPECT_EQ(rec.argmax_indices, (std::vector<std::size_t>{0, 2}));
}

TEST(MaxPool, HalvesLengthAndMatchesNaive) {
  std::mt19937_64 rng(2);
  const auto x = testutil::random_series(4, 256, rng);
  const auto [y, rec] = maxpool_forward(x, 2);
  EXPECT_EQ(y.length(), 128u);
  const auto [ny, narg] = testutil::naive_pool(x, 2);
  EXPECT_EQ(y.data(), ny.data());
  // record holds within-channel sample indices
  EXPECT_EQ(rec.argmax_indices, narg);
}

TEST(MaxPool, RejectsNonDividingWindow) { EXPECT_THROW(maxpool_forward(Series(1, 5), 2), ValidationError); }

TEST(MaxPoolBackward, RoutesToArgmax) {
  const auto [y, rec] = maxpool_forward(Series(1, 4, std::vector<double>{1, 3, 2, 2}), 2);
  const auto g = maxpool_backward(Series(1, 2, std::vector<double>{7, 9}), rec);
  EXPECT_EQ(g.data(), (std::vector<double>{0, 7, 9, 0}));
  const auto z = maxpool_backward(Series(1, 2), rec);
  EXPECT_EQ(z.data(), (std::vector<double>{0, 0, 0, 0}));
}

TEST(MaxPoolBackward, FiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = gradcheck::pool_layer(seed);
    EXPECT_TRUE(r.ok()) << "seed " << seed << " max rel " << r.max_rel;
  }
}

TEST(Dense, IdentityWeightsWithRelu) {
  DenseParams p(2, 2);
  p.weight(0, 0) = p.weight(1, 1) = 1.0;
  EXPECT_EQ(dense_forward(std::vector<double>{1, -2}, p, Activation::relu), (std::vector<double>{1, 0}));
  EXPECT_EQ(dense_forward(std::vector<double>{1, -2}, p, Activation::identity), (std::vector<double>{1, -2}));
}

TEST(Dense, ReadoutIsIdentity) {
  const auto net = build_model_b_member(CnnTarget::stride_length);
  const auto& last = std::get<DenseLayer>(net.layers().back());
  EXPECT_EQ(last.activation, Activation::identity);
}

TEST(Dense, MatchesNaiveMatmulExactly) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    DenseParams p(4, 3);
    p.weights = testutil::uniform(12, rng);
    p.biases = testutil::uniform(3, rng);
    const auto x = testutil::uniform(4, rng);
    for (auto act : {Activation::relu, Activation::identity})
      ASSERT_EQ(dense_forward(x, p, act), testutil::naive_dense(x, p, act));
  }
}

TEST(DenseBackward, ZeroUpstreamAndScalarCase) {
  DenseParams p(1, 1);
  p.weights = {0.7};
  const auto g0 = dense_backward(std::vector<double>{0.0}, std::vector<double>{2.5}, p, Activation::identity);
  EXPECT_EQ(g0.grad_weights[0], 0.0);
  EXPECT_EQ(g0.grad_input[0], 0.0);
  const auto g1 = dense_backward(std::vector<double>{1.0}, std::vector<double>{2.5}, p, Activation::identity);
  EXPECT_EQ(g1.grad_weights[0], 2.5);
  EXPECT_EQ(g1.grad_biases[0], 1.0);
  EXPECT_EQ(g1.grad_input[0], 0.7);
}

TEST(DenseBackward, FiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed)
    for (auto act : {Activation::relu, Activation::identity}) {
      const auto r = gradcheck::dense_layer(seed, act);
      EXPECT_TRUE(r.ok()) << "seed " << seed << " max rel " << r.max_rel;
    }
}

TEST(Dropout, ZeroProbabilityKeepsEverything) {
  std::mt19937_64 rng(1);
  const auto m = dropout_sample(100, 0.0, rng);
  EXPECT_EQ(std::count(m.keep_flags.begin(), m.keep_flags.end(), true), 100);
  EXPECT_EQ(m.scale(), 1.0);
}

TEST(Dropout, HalfProbabilityDropsAboutHalf) {
  std::mt19937_64 rng(9);
  const auto m = dropout_sample(10000, 0.5, rng);
  const double dropped = 1.0 - static_cast<double>(std::count(m.keep_flags.begin(), m.keep_flags.end(), true)) / 1e4;
  EXPECT_NEAR(dropped, 0.5, 0.02);
  EXPECT_EQ(m.scale(), 2.0);
}

TEST(Dropout, RejectsProbabilityOutsideRange) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(dropout_sample(4, 1.0, rng), ValidationError);
  EXPECT_THROW(dropout_sample(4, -0.1, rng), ValidationError);
}

TEST(Dropout, InvertedScalingPreservesExpectation) {
  std::mt19937_64 rng(12);
  const std::vector<double> ones(20000, 1.0);
  const auto y = dropout_apply(ones, dropout_sample(ones.size(), 0.75, rng));
  double s = 0.0;
  for (double v : y) s += v;
  EXPECT_NEAR(s / 20000.0, 1.0, 0.05);
}

TEST(Dropout, ModelBHiddenLayerDropsHalf) {
  const auto net = build_model_b_member(CnnTarget::stride_width);
  std::vector<double> ps;
  for (const auto& l : net.layers())
    if (const auto* d = std::get_if<DropoutLayer>(&l)) ps.push_back(d->drop_probability);
  EXPECT_EQ(ps, (std::vector<double>{0.5}));
}

TEST(Dropout, FiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) EXPECT_TRUE(gradcheck::dropout_layer(seed).ok());
}

TEST(Network, BatchedForwardMatchesSingleSampleLayers) {
  std::mt19937_64 rng(21);
  ArchitectureSpec s;
  s.input = {3, 16};
  s.conv_kernels = {4, 5};
  s.kernel_lengths = {5, 2};
  s.dense_widths = {6};
  s.dropout = {0.0};
  s.outputs = 2;
  Network net = build_network(s);
  for (auto& p : net.parameters()) {
    auto v = testutil::uniform(p.values.size(), rng, -0.5, 0.5);
    std::copy(v.begin(), v.end(), p.values.begin());
  }
  Batch x(3, s.input);
  {
    auto v = testutil::uniform(3 * s.input.size(), rng);
    std::copy(v.begin(), v.end(), x.data());
  }
  const Batch y = net.predict(x);
  for (std::size_t b = 0; b < 3; ++b) {
    Series cur(3, 16, std::vector<double>(x.sample(b).begin(), x.sample(b).end()));
    for (const auto& l : net.layers()) {
      if (const auto* c = std::get_if<ConvLayer>(&l)) cur = naive_conv(cur, c->params);
      if (const auto* p = std::get_if<PoolLayer>(&l)) cur = testutil::naive_pool(cur, p->window).first;
      if (std::holds_alternative<FlattenLayer>(l)) cur = Series(1, cur.values().size(), cur.data());
      if (const auto* d = std::get_if<DenseLayer>(&l)) {
        auto v = testutil::naive_dense(cur.data(), d->params, d->activation);
        const std::size_t n = v.size();
        cur = Series(1, n, std::move(v));
      }
    }
    for (std::size_t i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(y.sample(b)[i], cur.values()[i]);
  }
}

TEST(Network, ModelAShapes) {
  const auto net = build_model_a();
  EXPECT_EQ(model_a_spec().flatten_width(), 4096u);
  EXPECT_EQ(net.output_width(), 5u);
  EXPECT_EQ(net.layer_shape(0), (Shape{32, 256}));
  EXPECT_EQ(net.layer_shape(1), (Shape{32, 128}));
}

TEST(Network, RejectsWrongInputShape) {
  const auto net = build_model_b_member(CnnTarget::foot_angle, Preset::desk);
  EXPECT_THROW(net.predict(Batch(1, Shape{6, 128})), DimensionError);
}

TEST(Network, TrainModeWithDropoutNeedsRng) {
  const auto net = build_model_b_member(CnnTarget::foot_angle, Preset::desk);
  Trace t;
  EXPECT_THROW(net.forward(Batch(1, kStrideShape), t, Mode::train), StateError);
}
