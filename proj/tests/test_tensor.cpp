#include <cmath>
#include <random>

#include "doctest.h"
#include "getnet/gradcheck.hpp"
#include "getnet/ops.hpp"
#include "getnet/verify.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace getnet;
using testutil::error_code_of;
using T32 = Tensor<float>;
using T64 = Tensor<double>;

namespace {

T64 randn(std::mt19937_64& rng, Shape shape, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = nd(rng);
  return T64::from(std::move(shape), std::move(v));
}

// Random linear functional of op(x) so every output entry contributes.
GradCheckReport check_unary(std::mt19937_64& rng, const std::function<T64(const T64&)>& op,
                            T64 x, const std::string& name) {
  const auto probe = randn(rng, op(x).shape());
  auto r = finite_diff_check<double>([&] { return ops::sum(ops::mul(op(x), probe)); }, x, {}, name);
  if (!r.passed) MESSAGE(name << " shape " << shape_str(x.shape()) << " err " << r.max_rel_error << " checked " << r.checked);
  return r;
}

}  // namespace

TEST_CASE("tensor basics") {
  CHECK(error_code_of([] { T32::from({2, 2}, {1, 2, 3}); }) == ErrorCode::ShapeMismatch);
  CHECK(error_code_of([] { T32::zeros({2}).item(); }) == ErrorCode::NotScalar);
  CHECK(T32::scalar(3.5f).item() == 3.5f);
  auto a = T32::from({2}, {1, 2}, true);
  auto d = a.detach();
  CHECK_FALSE(d.requires_grad());
  d.mutable_data()[0] = 9;
  CHECK(a[0] == 1);
  CHECK(shape_str({2, 3}) == "[2x3]");
}

TEST_CASE("matmul examples") {
  const auto a = T32::from({2, 2}, {1, 2, 3, 4});
  const auto eye = T32::from({2, 2}, {1, 0, 0, 1});
  CHECK(ops::matmul(a, eye).vec() == a.vec());
  const auto ones = T32::from({2, 1}, {1, 1});
  const auto r = ops::matmul(a, ones);
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r.vec() == std::vector<float>{3, 7});
  CHECK(error_code_of([&] { ops::matmul(a, T32::zeros({3, 1})); }) == ErrorCode::ShapeMismatch);
  CHECK(ops::matmul(a, a, true, false).vec() == std::vector<float>{10, 14, 14, 20});
}

TEST_CASE("softmax examples") {
  const auto u = ops::softmax_lastdim(T64::from({1, 4}, {2, 2, 2, 2}));
  for (double v : u.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  const auto s = ops::softmax_lastdim(T64::from({2}, {0.0, std::log(3.0)}));
  CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-12));
  std::mt19937_64 rng(1);
  const auto r = ops::softmax_lastdim(Tensor<float>::from({50, 7}, [&] {
    std::vector<float> v(350);
    std::normal_distribution<float> nd(0, 5);
    for (auto& x : v) x = nd(rng);
    return v;
  }()));
  for (std::size_t row = 0; row < 50; ++row) {
    double total = 0;
    for (std::size_t c = 0; c < 7; ++c) total += r[row * 7 + c];
    CHECK(std::abs(total - 1.0) <= 1e-6);
  }
  const auto n = ops::softmax_lastdim(T32::from({2}, {NAN, 1.0f}));
  CHECK(std::isnan(n[0]));
  const auto masked = ops::softmax_lastdim(T64::from({3}, {1.0, -INFINITY, 1.0}));
  CHECK(masked[1] == 0.0);
  CHECK(masked[0] == doctest::Approx(0.5));
}

TEST_CASE("layer norm examples") {
  const auto g = T64::from({4}, {2, 3, 4, 5});
  const auto b = T64::from({4}, {0.5, -1, 0, 7});
  const auto c = ops::layer_norm(T64::full({3, 4}, 6.0), g, b);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 4; ++k) CHECK(c[r * 4 + k] == b[k]);
  std::mt19937_64 rng(2);
  const auto x = randn(rng, {20, 16}, 3.0);
  const auto y = ops::layer_norm(x, T64::full({16}, 1.0), T64::zeros({16}));
  for (std::size_t r = 0; r < 20; ++r) {
    double mean = 0, var = 0;
    for (std::size_t k = 0; k < 16; ++k) mean += y[r * 16 + k];
    mean /= 16;
    for (std::size_t k = 0; k < 16; ++k) var += (y[r * 16 + k] - mean) * (y[r * 16 + k] - mean);
    var /= 16;
    CHECK(std::abs(mean) <= 1e-5);
    CHECK(std::abs(var - 1.0) <= 1e-5);
  }
  CHECK(error_code_of([&] { ops::layer_norm(x, T64::zeros({3}), T64::zeros({16})); }) ==
        ErrorCode::ShapeMismatch);
}

TEST_CASE("grouped conv examples") {
  SUBCASE("identity kernel, depthwise") {
    std::mt19937_64 rng(3);
    const auto x = randn(rng, {3, 4, 5});
    std::vector<double> w(3 * 9, 0.0);
    for (int c = 0; c < 3; ++c) w[c * 9 + 4] = 1.0;
    const auto y = ops::grouped_conv2d(x, T64::from({3, 1, 3, 3}, w), T64::zeros({3}), 3);
    CHECK(y.vec() == x.vec());
  }
  SUBCASE("all-ones kernel on all-ones 5x5") {
    const auto y = ops::grouped_conv2d(T32::full({1, 5, 5}, 1), T32::full({1, 1, 3, 3}, 1),
                                       T32::zeros({1}), 1);
    CHECK(y[0] == 4);
    CHECK(y[2] == 6);
    CHECK(y[2 * 5 + 2] == 9);
    CHECK(y[24] == 4);
  }
  SUBCASE("equals dense conv with block-diagonal weights") {
    std::mt19937_64 rng(4);
    const std::size_t groups = 3, cin = 6, cout = 9, h = 5, w = 4;
    const auto x = randn(rng, {cin, h, w});
    const auto k = randn(rng, {cout, cin / groups, 3, 3});
    const auto b = randn(rng, {cout});
    const auto y = ops::grouped_conv2d(x, k, b, groups);
    std::vector<double> dense(cout * cin * 9, 0.0);
    for (std::size_t o = 0; o < cout; ++o) {
      const std::size_t g = o / (cout / groups);
      for (std::size_t i = 0; i < cin / groups; ++i)
        for (std::size_t t = 0; t < 9; ++t)
          dense[(o * cin + g * (cin / groups) + i) * 9 + t] = k[(o * (cin / groups) + i) * 9 + t];
    }
    const auto ref = oracle::dense_conv3x3(x.vec(), cin, h, w, dense, cout, b.vec());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-5);
  }
  SUBCASE("group mismatch") {
    CHECK(error_code_of([] {
            ops::grouped_conv2d(T32::zeros({5, 3, 3}), T32::zeros({4, 2, 3, 3}), T32::zeros({4}), 2);
          }) == ErrorCode::GroupMismatch);
    CHECK(error_code_of([] {
            ops::grouped_conv2d(T32::zeros({4, 3, 3}), T32::zeros({4, 3, 3, 3}), T32::zeros({4}), 2);
          }) == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("channel window conv reads zeros past the input") {
  // Two output groups with window 2, stride 1 on a 2-channel input: group 1
  // reads channels [1, 3), and channel 2 does not exist.
  std::mt19937_64 rng(5);
  const auto x = randn(rng, {2, 3, 3});
  const auto w = randn(rng, {2, 2, 3, 3});
  const auto y = ops::channel_window_conv2d(x, w, T64::zeros({2}), 2, 1, 1);
  std::vector<double> dense(2 * 2 * 9, 0.0);
  for (std::size_t t = 0; t < 18; ++t) dense[t] = w[t];      // group 0: channels 0, 1
  for (std::size_t t = 0; t < 9; ++t) dense[27 + t] = w[18 + t];  // group 1: channel 1 only
  const auto ref = oracle::dense_conv3x3(x.vec(), 2, 3, 3, dense, 2, {0.0, 0.0});
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]));
}

TEST_CASE("maxpool examples") {
  const auto c = ops::maxpool2d(T32::full({2, 6, 6}, 3.0f));
  CHECK(c.shape() == Shape{2, 3, 3});
  CHECK(std::all_of(c.data().begin(), c.data().end(), [](float v) { return v == 3.0f; }));
  std::vector<float> ramp(16);
  std::iota(ramp.begin(), ramp.end(), 0.0f);
  const auto m = ops::maxpool2d(T32::from({1, 4, 4}, ramp));
  CHECK(m.vec() == std::vector<float>{5, 7, 13, 15});
  CHECK(ops::maxpool2d(T32::zeros({1, 5, 3})).shape() == Shape{1, 3, 2});

  SUBCASE("gradient is one-hot per window") {
    auto x = T64::from({1, 4, 4}, std::vector<double>(ramp.begin(), ramp.end()), true);
    backward(ops::sum(ops::maxpool2d(x)));
    std::vector<double> want(16, 0.0);
    want[5] = want[7] = want[13] = want[15] = 1.0;
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == want);
  }
  SUBCASE("ties go to the first index in scan order") {
    auto x = T64::full({1, 2, 2}, 1.0, true);
    backward(ops::sum(ops::maxpool2d(x)));
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) ==
          std::vector<double>{1, 0, 0, 0});
  }
}

TEST_CASE("backward examples") {
  auto x = T64::scalar(3.0, true);
  backward(x);
  CHECK(x.grad()[0] == 1.0);

  auto v = T64::from({3}, {1, -2, 5}, true);
  backward(ops::sum(ops::mul(v, v)));
  CHECK(std::vector<double>(v.grad().begin(), v.grad().end()) == std::vector<double>{2, -4, 10});

  SUBCASE("fan-out sums and repeated calls accumulate") {
    auto y = T64::from({2}, {1, 1}, true);
    const auto loss = ops::sum(ops::add(y, ops::scale(y, 2.0)));
    backward(loss);
    CHECK(y.grad()[0] == 3.0);
    backward(loss);
    CHECK(y.grad()[0] == 6.0);
  }
  SUBCASE("non-scalar loss") {
    auto y = T64::from({2}, {1, 1}, true);
    CHECK(error_code_of([&] { backward(ops::scale(y, 2.0)); }) == ErrorCode::NotScalar);
  }
  SUBCASE("constants record no history") {
    const auto a = T64::from({2}, {1, 2});
    const auto r = ops::add(a, a);
    CHECK(r.node()->parents.empty());
  }
  SUBCASE("deep chains do not overflow the stack") {
    auto z = T64::scalar(1.0, true);
    T64 acc = z;
    for (int i = 0; i < 200000; ++i) acc = ops::scale(acc, 1.0);
    backward(acc);
    CHECK(z.grad()[0] == 1.0);
  }
}

TEST_CASE("other ops: values") {
  const auto x = T32::from({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(ops::gather_rows(x, {2, -1, 0}).vec() == std::vector<float>{5, 6, 0, 0, 1, 2});
  CHECK(error_code_of([&] { ops::gather_rows(x, {3}); }) == ErrorCode::IndexOutOfRange);
  CHECK(ops::mean_rows(x).vec() == std::vector<float>{3, 4});
  CHECK(ops::sum(x).item() == 21);
  CHECK(ops::transpose_last2(x).vec() == std::vector<float>{1, 3, 5, 2, 4, 6});
  CHECK(ops::chw_to_tokens(ops::tokens_to_chw(x, 1, 3)).vec() == x.vec());
  CHECK(ops::gelu(T64::from({3}, {0.0, 1.0, -1.0})).vec()[1] ==
        doctest::Approx(0.8413447460685429));
  const auto ce = ops::cross_entropy(T64::from({2, 2}, {0.0, 0.0, 0.0, std::log(3.0)}), {0, 1});
  CHECK(ce.item() == doctest::Approx((std::log(2.0) + std::log(4.0 / 3.0)) / 2));
  CHECK(ops::add_broadcast(x, T32::from({2}, {10, 20})).vec() ==
        std::vector<float>{11, 22, 13, 24, 15, 26});
  const auto gl = ops::grouped_linear(T32::from({1, 4}, {1, 2, 3, 4}),
                                      T32::from({2, 2, 1}, {1, 1, 1, -1}), T32::from({2, 1}, {0, 5}));
  CHECK(gl.vec() == std::vector<float>{3, 4});
  CHECK(error_code_of([&] { ops::add(x, T32::zeros({2, 3})); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("finite differences: every op passes the ops suite") {
  const auto reports = gradcheck_ops(0);
  REQUIRE(reports.size() >= 60);
  for (const auto& r : reports) {
    CAPTURE(r.name);
    CAPTURE(r.max_rel_error);
    CHECK(r.passed);
  }
}

TEST_CASE("finite differences: ten random shapes per core op") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    CAPTURE(trial);
    const auto b = randn(rng, {k, n});
    CHECK(check_unary(rng, [&](const T64& a) { return ops::matmul(a, b); }, randn(rng, {m, k}),
                      "matmul")
              .passed);
    CHECK(check_unary(rng, [](const T64& a) { return ops::softmax_lastdim(a); },
                      randn(rng, {m, n + 1}), "softmax")
              .passed);
    const auto g = randn(rng, {n + 1}), be = randn(rng, {n + 1});
    CHECK(check_unary(rng, [&](const T64& a) { return ops::layer_norm(a, g, be); },
                      randn(rng, {m, n + 1}), "layer_norm")
              .passed);
    CHECK(check_unary(rng, [](const T64& a) { return ops::gelu(a); }, randn(rng, {m, n}), "gelu")
              .passed);
    const auto w = randn(rng, {2 * k, 1, 3, 3});
    const auto bias = randn(rng, {2 * k});
    CHECK(check_unary(rng, [&](const T64& a) { return ops::grouped_conv2d(a, w, bias, k); },
                      randn(rng, {k, m + 1, n + 1}), "grouped_conv2d")
              .passed);
    const auto mp = check_unary(rng, [](const T64& a) { return ops::maxpool2d(a); },
                                randn(rng, {k, m + 1, n + 1}), "maxpool2d");
    CHECK(mp.passed);
  }
}

TEST_CASE("finite differences: a corrupted backward is caught") {
  // y = 3x with a backward that reports 3.3x.
  auto bad_scale = [](const T64& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 3.0 * x[i];
    return detail::make_result<double>(x.shape(), std::move(out), {x},
                                       [x](detail::Node<double>& self) {
                                         auto& g = x.node()->ensure_grad();
                                         for (std::size_t i = 0; i < g.size(); ++i)
                                           g[i] += 3.3 * self.grad[i];
                                       });
  };
  std::mt19937_64 rng(6);
  auto x = randn(rng, {4});
  const auto report =
      finite_diff_check<double>([&] { return ops::sum(ops::mul(bad_scale(x), x)); }, x);
  CHECK_FALSE(report.passed);
  CHECK(report.max_rel_error > 1e-2);
}

TEST_CASE("forward passes are deterministic") {
  std::mt19937_64 rng(12);
  const auto x = randn(rng, {6, 5, 5});
  const auto w = randn(rng, {6, 2, 3, 3});
  const auto b = randn(rng, {6});
  const auto a1 = ops::maxpool2d(ops::grouped_conv2d(x, w, b, 3));
  const auto a2 = ops::maxpool2d(ops::grouped_conv2d(x, w, b, 3));
  CHECK(a1.vec() == a2.vec());
}
