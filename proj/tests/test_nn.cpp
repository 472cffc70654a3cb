#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "picd/nn.hpp"
#include "picd/rng.hpp"
#include "picd/tensor.hpp"

using namespace picd;
using nn::Cache;

namespace {

Tensor<double> randu(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

template <typename F>
double fd_at(double* p, double eps, F&& f) {
  const double keep = *p;
  *p = keep + eps;
  const double hi = f();
  *p = keep - eps;
  const double lo = f();
  *p = keep;
  return (hi - lo) / (2.0 * eps);
}

void expect_close(double got, double want, double tol) {
  CHECK(std::abs(got - want) <= tol * std::max(1.0, std::max(std::abs(got), std::abs(want))));
}

// Checks d(sum w*f(x))/d(input) and, through the collected refs, every
// parameter gradient against central differences.
template <typename Fwd, typename Bwd>
void gradcheck(Rng& rng, Tensor<double>& x, nn::ParamRefs<double> refs, Fwd&& fwd,
               Bwd&& bwd, double tol = 1e-6) {
  const Tensor<double> y0 = fwd(Cache::kNone);
  Tensor<double> w = randu(rng, y0.shape());
  auto objective = [&]() { return double((fwd(Cache::kNone).flat() * w.flat()).sum()); };

  for (auto& r : refs) Eigen::Map<EArray<double>>(r.g, r.size).setZero();
  fwd(Cache::kFull);
  const Tensor<double> gx = bwd(w);

  REQUIRE(gx.shape() == x.shape());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    expect_close(gx[i], fd_at(&x[i], 1e-6, objective), tol);
  for (auto& r : refs)
    for (Eigen::Index i = 0; i < r.size; ++i)
      expect_close(r.g[i], fd_at(r.w + i, 1e-6, objective), tol);
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(101);

  SUBCASE("3x3 stride 1") {
    nn::Conv2d<double> conv(3, 4, 3, 1, 1, rng);
    Tensor<double> x = randu(rng, {2, 3, 5, 6});
    nn::ParamRefs<double> refs;
    conv.collect("c", refs);
    gradcheck(
        rng, x, refs, [&](Cache m) { return conv.forward(x, m); },
        [&](const Tensor<double>& w) { return conv.backward(w); });
  }
  SUBCASE("1x1") {
    nn::Conv2d<double> conv(5, 2, 1, 1, 0, rng);
    Tensor<double> x = randu(rng, {1, 5, 4, 4});
    nn::ParamRefs<double> refs;
    conv.collect("c", refs);
    gradcheck(
        rng, x, refs, [&](Cache m) { return conv.forward(x, m); },
        [&](const Tensor<double>& w) { return conv.backward(w); });
  }
  SUBCASE("3x3 stride 2") {
    nn::Conv2d<double> conv(2, 3, 3, 2, 1, rng);
    Tensor<double> x = randu(rng, {1, 2, 8, 8});
    const Tensor<double> y = conv.forward(x, Cache::kNone);
    CHECK(y.dim(2) == 4);
    CHECK(y.dim(3) == 4);
    nn::ParamRefs<double> refs;
    conv.collect("c", refs);
    gradcheck(
        rng, x, refs, [&](Cache m) { return conv.forward(x, m); },
        [&](const Tensor<double>& w) { return conv.backward(w); });
  }
}

TEST_CASE("conv2d guards its preconditions") {
  Rng rng(7);
  nn::Conv2d<double> conv(3, 4, 3, 1, 1, rng);
  Tensor<double> wrong = randu(rng, {1, 2, 5, 5});
  CHECK_THROWS_WITH_AS(conv.forward(wrong, Cache::kNone), "Conv2d: channel mismatch",
                       std::runtime_error);
  nn::Conv2d<double> fresh(1, 1, 1, 1, 0, rng);
  Tensor<double> g = randu(rng, {1, 1, 2, 2});
  CHECK_THROWS_WITH_AS(fresh.backward(g), "Conv2d: backward without cached forward",
                       std::runtime_error);
}

TEST_CASE("zero-initialized convolutions start silent") {
  auto conv = nn::Conv2d<double>::zero_init(3, 5, 3, 1, 1);
  Rng rng(8);
  Tensor<double> x = randu(rng, {2, 3, 4, 4});
  const Tensor<double> y = conv.forward(x, Cache::kFull);
  CHECK(y.flat().cwiseAbs().maxCoeff() == 0.0);
  const Tensor<double> gx = conv.backward(randu(rng, y.shape()));
  CHECK(gx.flat().cwiseAbs().maxCoeff() == 0.0);
  // The weight gradient is live even though the output is not.
  CHECK(conv.gW.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("lora starts as an exact identity and trains its own factors") {
  Rng rng(55);
  nn::Conv2d<double> conv(3, 4, 3, 1, 1, rng);
  Tensor<double> x = randu(rng, {1, 3, 6, 6});
  const Tensor<double> base = conv.forward(x, Cache::kNone);

  conv.add_lora(2, 0.7, rng);
  CHECK(all_equal(conv.forward(x, Cache::kNone), base));

  // With B nonzero the residual engages; gradients flow only to A and B
  // once the base is frozen.
  for (Eigen::Index i = 0; i < conv.lora_B.size(); ++i)
    conv.lora_B.data()[i] = rng.normal() * 0.1;
  CHECK_FALSE(all_equal(conv.forward(x, Cache::kNone), base));

  conv.train_base = false;
  nn::ParamRefs<double> refs;
  conv.collect("c", refs);
  REQUIRE(refs.size() == 4);
  CHECK_FALSE(refs[0].trainable);  // W
  CHECK_FALSE(refs[1].trainable);  // b
  CHECK(refs[2].trainable);        // lora_A
  CHECK(refs[3].trainable);        // lora_B

  nn::ParamRefs<double> lora_only = {refs[2], refs[3]};
  gradcheck(
      rng, x, lora_only, [&](Cache m) { return conv.forward(x, m); },
      [&](const Tensor<double>& w) { return conv.backward(w); });
  CHECK(conv.gW.cwiseAbs().maxCoeff() == 0.0);

  // Merging folds the residual into W without changing the function (up
  // to summation-order rounding).
  const Tensor<double> before = conv.forward(x, Cache::kNone);
  conv.merge_lora();
  CHECK_FALSE(conv.lora_active);
  CHECK(max_abs_diff(conv.forward(x, Cache::kNone), before) <= 1e-14);
}

TEST_CASE("group norm normalizes per group and backpropagates exactly") {
  Rng rng(202);
  nn::GroupNorm<double> gn(4, 8);
  Tensor<double> x = randu(rng, {2, 8, 3, 3}, -2.0, 2.0);

  const Tensor<double> y = gn.forward(x, Cache::kNone);
  for (int n = 0; n < 2; ++n)
    for (int g = 0; g < 4; ++g) {
      const auto seg = y.flat().segment((Eigen::Index(n) * 8 + g * 2) * 9, 18);
      CHECK(std::abs(seg.mean()) <= 1e-12);
      CHECK(std::abs((seg - seg.mean()).square().mean() - 1.0) <= 1e-4);
    }

  for (Eigen::Index c = 0; c < 8; ++c) {
    gn.gamma[c] = rng.uniform(0.5, 1.5);
    gn.beta[c] = rng.uniform(-0.5, 0.5);
  }
  nn::ParamRefs<double> refs;
  gn.collect("g", refs);
  gradcheck(
      rng, x, refs, [&](Cache m) { return gn.forward(x, m); },
      [&](const Tensor<double>& w) { return gn.backward(w); }, 1e-5);

  CHECK_THROWS_WITH_AS(nn::GroupNorm<double>(3, 8), "GroupNorm: channels not divisible",
                       std::runtime_error);
}

TEST_CASE("silu and linear gradients match finite differences") {
  Rng rng(303);

  nn::SiLU<double> act;
  Tensor<double> x = randu(rng, {1, 2, 3, 4}, -3.0, 3.0);
  gradcheck(
      rng, x, {}, [&](Cache m) { return act.forward(x, m); },
      [&](const Tensor<double>& w) { return act.backward(w); });

  nn::Linear<double> lin(5, 4, rng);
  Tensor<double> z = randu(rng, {3, 5});
  nn::ParamRefs<double> refs;
  lin.collect("l", refs);
  gradcheck(
      rng, z, refs, [&](Cache m) { return lin.forward(z, m); },
      [&](const Tensor<double>& w) { return lin.backward(w); });
}

TEST_CASE("pooling and upsampling are exact adjoints") {
  Rng rng(404);

  nn::AvgPool2<double> pool;
  Tensor<double> p({1, 1, 2, 2});
  p[0] = 1.0;
  p[1] = 2.0;
  p[2] = 3.0;
  p[3] = 4.0;
  const Tensor<double> pooled = pool.forward(p);
  REQUIRE(pooled.size() == 1);
  CHECK(pooled[0] == 2.5);

  nn::UpsampleNearest2<double> up;
  Tensor<double> u({1, 1, 1, 2});
  u[0] = 5.0;
  u[1] = 7.0;
  const Tensor<double> upped = up.forward(u);
  REQUIRE(upped.shape() == std::vector<int>{1, 1, 2, 4});
  for (int h = 0; h < 2; ++h) {
    CHECK(upped(0, 0, h, 0) == 5.0);
    CHECK(upped(0, 0, h, 1) == 5.0);
    CHECK(upped(0, 0, h, 2) == 7.0);
    CHECK(upped(0, 0, h, 3) == 7.0);
  }

  // <w, A x> == <A^T w, x> for both linear maps.
  Tensor<double> x = randu(rng, {2, 3, 6, 8});
  Tensor<double> wp = randu(rng, {2, 3, 3, 4});
  const double lhs_p = (pool.forward(x).flat() * wp.flat()).sum();
  const double rhs_p = (pool.backward(wp).flat() * x.flat()).sum();
  CHECK(std::abs(lhs_p - rhs_p) <= 1e-12 * std::abs(lhs_p));

  Tensor<double> wu = randu(rng, {2, 3, 12, 16});
  const double lhs_u = (up.forward(x).flat() * wu.flat()).sum();
  const double rhs_u = (up.backward(wu).flat() * x.flat()).sum();
  CHECK(std::abs(lhs_u - rhs_u) <= 1e-12 * std::abs(lhs_u));
}

TEST_CASE("pixel unshuffle lays out blocks channel-first") {
  Tensor<double> x({1, 1, 2, 2});
  x[0] = 1.0;
  x[1] = 2.0;
  x[2] = 3.0;
  x[3] = 4.0;
  const Tensor<double> y = nn::pixel_unshuffle(x, 2);
  REQUIRE(y.shape() == std::vector<int>{1, 4, 1, 1});
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2.0);
  CHECK(y[2] == 3.0);
  CHECK(y[3] == 4.0);

  Rng rng(505);
  Tensor<double> img = randu(rng, {1, 3, 64, 64});
  const Tensor<double> z = nn::pixel_unshuffle(img, 4);
  REQUIRE(z.shape() == std::vector<int>{1, 48, 16, 16});
  for (int trial = 0; trial < 200; ++trial) {
    const int c = int(rng.uniform_int(0, 2)), h = int(rng.uniform_int(0, 63)),
              w = int(rng.uniform_int(0, 63));
    CHECK(z(0, (c * 4 + h % 4) * 4 + w % 4, h / 4, w / 4) == img(0, c, h, w));
  }
}

TEST_CASE("pixel unshuffle inverts exactly on every tested shape") {
  Rng rng(606);
  struct Case {
    std::vector<int> shape;
    int r;
  };
  const Case cases[] = {{{1, 1, 2, 2}, 2}, {{2, 3, 8, 12}, 2}, {{1, 3, 64, 64}, 4},
                        {{3, 2, 6, 6}, 3}, {{1, 4, 16, 16}, 4}};
  for (const Case& c : cases) {
    Tensor<double> x = randu(rng, c.shape);
    const Tensor<double> y = nn::pixel_unshuffle(x, c.r);
    CHECK(y.dim(1) == c.shape[1] * c.r * c.r);
    const Tensor<double> back =
        nn::pixel_unshuffle_backward(y, c.r, c.shape[1], c.shape[2], c.shape[3]);
    REQUIRE(back.shape() == x.shape());
    CHECK(all_equal(back, x));
  }
  Tensor<double> odd = randu(rng, {1, 1, 3, 4});
  CHECK_THROWS_WITH_AS(nn::pixel_unshuffle(odd, 2),
                       "pixel_unshuffle: size not divisible by block",
                       std::runtime_error);
}

TEST_CASE("channel concat and split are inverses") {
  Rng rng(707);
  Tensor<double> a = randu(rng, {2, 3, 4, 5});
  Tensor<double> b = randu(rng, {2, 2, 4, 5});
  const Tensor<double> y = nn::concat_channels(a, b);
  REQUIRE(y.shape() == std::vector<int>{2, 5, 4, 5});
  CHECK(y(1, 2, 3, 4) == a(1, 2, 3, 4));
  CHECK(y(1, 3, 3, 4) == b(1, 0, 3, 4));

  Tensor<double> ga, gb;
  nn::split_channels(y, ga, gb, 3);
  CHECK(all_equal(ga, a));
  CHECK(all_equal(gb, b));

  Tensor<double> wrong = randu(rng, {2, 2, 3, 5});
  CHECK_THROWS_WITH_AS(nn::concat_channels(a, wrong), "concat_channels: shape mismatch",
                       std::runtime_error);
}

TEST_CASE("adam descends, respects frozen slots, and pins the param list") {
  EVector<double> w(8), g(8), frozen(4), gfrozen(4);
  Rng rng(808);
  for (int i = 0; i < 8; ++i) w[i] = rng.uniform(-2.0, 2.0);
  for (int i = 0; i < 4; ++i) {
    frozen[i] = rng.uniform(-2.0, 2.0);
    gfrozen[i] = 123.0;  // would wreck the values if applied
  }
  const EVector<double> frozen_before = frozen;

  nn::ParamRefs<double> refs;
  nn::add_param(refs, "w", w, g, true);
  nn::add_param(refs, "frozen", frozen, gfrozen, false);

  nn::Adam<double> opt(0.05);
  const double f0 = w.squaredNorm();
  for (int step = 0; step < 300; ++step) {
    g = 2.0 * w;
    opt.step(refs);
  }
  CHECK(w.squaredNorm() < 1e-4 * f0);
  CHECK(frozen == frozen_before);

  nn::ParamRefs<double> grown = refs;
  EVector<double> extra(2), gextra(2);
  nn::add_param(grown, "late", extra, gextra, true);
  CHECK_THROWS_WITH_AS(opt.step(grown), "Adam: parameter list changed between steps",
                       std::runtime_error);
}

TEST_CASE("mse and its gradient agree with the definition") {
  Tensor<double> a({2});
  a[0] = 1.0;
  a[1] = 2.0;
  Tensor<double> b({2});
  CHECK(nn::mse(a, b) == 2.5);
  const Tensor<double> g = nn::mse_grad(a, b);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 2.0);

  Rng rng(909);
  Tensor<double> x = randu(rng, {3, 4});
  Tensor<double> t = randu(rng, {3, 4});
  Tensor<double> gx = nn::mse_grad(x, t);
  auto objective = [&]() { return nn::mse(x, t); };
  for (Eigen::Index i = 0; i < x.size(); ++i)
    expect_close(gx[i], fd_at(&x[i], 1e-6, objective), 1e-7);
}
