// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/verify.hpp"

#include <random>

#include "getnet/error.hpp"
#include "getnet/ops.hpp"

namespace getnet {

GradScope parse_grad_scope(std::string_view name) {
  if (name == "ops") return GradScope::Ops;
  if (name == "block") return GradScope::Block;
  if (name == "model") return GradScope::Model;
  throw Error(ErrorCode::ConfigError, "unknown gradcheck scope '" + std::string(name) + "'");
}

std::string_view to_string(GradScope scope) {
  switch (scope) {
    case GradScope::Ops: return "ops";
    case GradScope::Block: return "block";
    case GradScope::Model: return "model";
  }
  return "unknown";
}

double grad_scope_tolerance(GradScope scope) { return scope == GradScope::Model ? 1e-3 : 1e-4; }

namespace {

using D = Tensor<double>;
using Inputs = std::vector<std::pair<std::string, D>>;

class Suite {
 public:
  Suite(std::uint64_t seed, double tol) : rng_(seed) { opts_.tol = tol; }

  D rand(Shape shape, double stddev = 1.0) {
    std::normal_distribution<double> n(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = n(rng_);
    return D::from(std::move(shape), std::move(v));
  }

  /// Checks a random linear functional of fwd() against every input.
  void check(const std::string& name, const std::function<D()>& fwd, Inputs inputs) {
    const D probe = rand(fwd().shape());
    const std::function<D()> f = [&] { return ops::sum(ops::mul(fwd(), probe)); };
    for (auto& r : finite_diff_check_all(f, inputs, opts_)) {
      r.name = name + "/" + r.name;
      reports_.push_back(std::move(r));
    }
  }

  std::mt19937_64& rng() { return rng_; }
  std::vector<GradCheckReport> take() { return std::move(reports_); }

 private:
  std::mt19937_64 rng_;
  GradCheckOptions opts_;
  std::vector<GradCheckReport> reports_;
};

}  // namespace

std::vector<GradCheckReport> gradcheck_ops(std::uint64_t seed) {
  Suite s(seed, grad_scope_tolerance(GradScope::Ops));
  {
    D ma = s.rand({4, 5}), mb = s.rand({5, 3});
    s.check("matmul_4x5_5x3", [&] { return ops::matmul(ma, mb); }, {{"a", ma}, {"b", mb}});
    D a = s.rand({3, 4}), b = s.rand({3, 4});
    s.check("add", [&] { return ops::add(a, b); }, {{"a", a}, {"b", b}});
    s.check("sub", [&] { return ops::sub(a, b); }, {{"a", a}, {"b", b}});
    s.check("mul", [&] { return ops::mul(a, b); }, {{"a", a}, {"b", b}});
    s.check("scale", [&] { return ops::scale(a, -1.7); }, {{"a", a}});
    D bias = s.rand({4});
    s.check("add_broadcast", [&] { return ops::add_broadcast(a, bias); },
            {{"a", a}, {"b", bias}});
  }
  for (int ta = 0; ta < 2; ++ta) {
    for (int tb = 0; tb < 2; ++tb) {
      D a = ta ? s.rand({4, 3}) : s.rand({3, 4});
      D b = tb ? s.rand({5, 4}) : s.rand({4, 5});
      const std::string tag = std::string(ta ? "T" : "N") + (tb ? "T" : "N");
      s.check("matmul_" + tag, [&] { return ops::matmul(a, b, ta, tb); },
              {{"a", a}, {"b", b}});
      D ba = ta ? s.rand({2, 4, 3}) : s.rand({2, 3, 4});
      D bb = tb ? s.rand({2, 5, 4}) : s.rand({2, 4, 5});
      s.check("bmm_" + tag, [&] { return ops::bmm(ba, bb, ta, tb); }, {{"a", ba}, {"b", bb}});
      s.check("bmm_shared_b_" + tag, [&] { return ops::bmm(ba, b, ta, tb); },
              {{"a", ba}, {"b", b}});
      s.check("bmm_shared_a_" + tag, [&] { return ops::bmm(a, bb, ta, tb); },
              {{"a", a}, {"b", bb}});
    }
  }
  {
    D x = s.rand({2, 3, 4});
    s.check("transpose_last2", [&] { return ops::transpose_last2(x); }, {{"x", x}});
    s.check("reshape", [&] { return ops::reshape(x, {6, 4}); }, {{"x", x}});
    s.check("softmax_lastdim", [&] { return ops::softmax_lastdim(x); }, {{"x", x}});
    std::vector<double> m(24, 0.0);
    m[3] = m[7] = m[22] = -INFINITY;
    D mask = D::from({2, 3, 4}, m);
    s.check("softmax_masked", [&] { return ops::softmax_lastdim(ops::add(x, mask)); },
            {{"x", x}});
    D g = s.rand({4}), b = s.rand({4});
    s.check("layer_norm", [&] { return ops::layer_norm(x, g, b); },
            {{"x", x}, {"gamma", g}, {"beta", b}});
    s.check("gelu", [&] { return ops::gelu(x); }, {{"x", x}});
  }
  {
    D x = s.rand({5, 6}), w = s.rand({6, 3}), b = s.rand({3});
    s.check("linear", [&] { return ops::linear(x, w, b); }, {{"x", x}, {"w", w}, {"b", b}});
    D gw = s.rand({3, 2, 4}), gb = s.rand({3, 4});
    s.check("grouped_linear", [&] { return ops::grouped_linear(x, gw, gb); },
            {{"x", x}, {"w", gw}, {"b", gb}});
  }
  {
    // Output group 2 reads channels [4, 7) of a 6-channel input.
    D x = s.rand({6, 4, 5}), w = s.rand({6, 3, 3, 3}), b = s.rand({6});
    s.check("channel_window_conv2d",
            [&] { return ops::channel_window_conv2d(x, w, b, 3, 2, 1); },
            {{"x", x}, {"w", w}, {"b", b}});
    D gw = s.rand({4, 3, 3, 3}), gb = s.rand({4});
    s.check("grouped_conv2d", [&] { return ops::grouped_conv2d(x, gw, gb, 2, 1); },
            {{"x", x}, {"w", gw}, {"b", gb}});
    s.check("maxpool2d", [&] { return ops::maxpool2d(x); }, {{"x", x}});
  }
  {
    D x = s.rand({4, 3});
    s.check("gather_rows", [&] { return ops::gather_rows(x, {2, -1, 0, 2, 3}); }, {{"x", x}});
    s.check("mean_rows", [&] { return ops::mean_rows(x); }, {{"x", x}});
    s.check("sum", [&] { return ops::sum(x); }, {{"x", x}});
    s.check("cross_entropy_batch", [&] { return ops::cross_entropy(x, {0, 2, 1, 2}); },
            {{"logits", x}});
    D v = s.rand({5});
    s.check("cross_entropy_single", [&] { return ops::cross_entropy(v, {3}); },
            {{"logits", v}});
    D t = s.rand({6, 4});
    s.check("tokens_to_chw", [&] { return ops::tokens_to_chw(t, 2, 3); }, {{"x", t}});
    D c = s.rand({4, 2, 3});
    s.check("chw_to_tokens", [&] { return ops::chw_to_tokens(c); }, {{"x", c}});
  }
  return s.take();
}

namespace {

template <typename Params>
Inputs randomize_into(Suite& s, Params& p, double stddev) {
  Inputs inputs;
  visit_parameters(p, [&](const std::string& name, D& t) {
    auto fresh = s.rand(t.shape(), stddev);
    t = fresh;
    inputs.emplace_back(name, t);
  });
  return inputs;
}

}  // namespace

std::vector<GradCheckReport> gradcheck_block(std::uint64_t seed) {
  Suite s(seed, grad_scope_tolerance(GradScope::Block));
  {
    const WindowShape win{2, 3};
    D table = s.rand({(2 * win.h - 1) * (2 * win.w - 1)});
    s.check("relative_position_bias", [&] { return build_relative_position_bias(table, win); },
            {{"table", table}});
    D gtable = s.rand({5});
    s.check("relative_group_bias", [&] { return build_relative_group_bias(gtable, 3, 2); },
            {{"table", gtable}});
    const auto layout = make_window_layout(3, 5, win);
    D x = s.rand({15, 4});
    s.check("window_partition", [&] { return window_partition(x, layout); }, {{"x", x}});
    D y = s.rand({layout.windows, layout.slots(), 4});
    s.check("window_reverse", [&] { return window_reverse(y, layout); }, {{"x", y}});
  }
  {
    // Two groups of two channels, 2x2 windows over a padded 3x3 grid.
    const WindowShape win{2, 2};
    const auto layout = make_window_layout(3, 3, win);
    auto p = zero_edsa_params<double>(2, 2, win);
    Inputs params = randomize_into(s, p, 0.5);
    D x = s.rand({layout.windows, win.area(), 4});
    const D mask = key_padding_mask<double>(layout);
    Inputs ssa_in = {{"x", x},
                     {"w_q", p.w_q},
                     {"w_k", p.w_k},
                     {"w_v", p.w_v},
                     {"rpb_table", p.rpb_table}};
    s.check("ssa",
            [&] {
              return spatial_self_attention(x, p, build_relative_position_bias(p.rpb_table, win),
                                            mask);
            },
            ssa_in);
    Inputs gsa_in = {{"x", x},
                     {"w_qg", p.w_qg},
                     {"w_kg", p.w_kg},
                     {"w_vg", p.w_vg},
                     {"rgb_table", p.rgb_table}};
    s.check("gsa",
            [&] { return group_self_attention(x, p, build_relative_group_bias(p.rgb_table, 2, 2)); },
            gsa_in);

    for (auto variant : {BlockVariant::Edsa, BlockVariant::SsaOnly, BlockVariant::Parallel,
                         BlockVariant::SeriesGsaFirst, BlockVariant::SeriesSsaFirst}) {
      D fs = s.rand({9, 4}), fg = s.rand({9, 4}, 0.5);
      Inputs in = params;
      in.emplace_back("f_s", fs);
      in.emplace_back("f_g", fg);
      s.check("block_" + std::string(to_string(variant)),
              [&] {
                auto out = edsa_block_forward<double>({fs, fg}, p, layout, 2, variant);
                return ops::add(out.spatial, ops::scale(out.group, 0.5));
              },
              in);
    }
  }
  {
    // Unpadded 4x4 grid under one 4x4 window.
    const WindowShape win{4, 4};
    const auto layout = make_window_layout(4, 4, win);
    auto p = zero_edsa_params<double>(2, 2, win);
    Inputs in = randomize_into(s, p, 0.5);
    D fs = s.rand({16, 4}), fg = s.rand({16, 4}, 0.5);
    in.emplace_back("f_s", fs);
    in.emplace_back("f_g", fg);
    s.check("block_edsa_4x4",
            [&] {
              auto out = edsa_block_forward<double>({fs, fg}, p, layout, 2);
              return ops::add(out.spatial, ops::scale(out.group, 0.5));
            },
            in);
  }
  {
    const auto geom = gta_geometry(4, 2);
    auto p = zero_gta_params<double>(geom);
    Inputs in = randomize_into(s, p, 0.5);
    D x = s.rand({6 * 6, 8});
    in.emplace_back("x", x);
    s.check("gta", [&] { return gta_forward(x, 6, 6, p, geom).tokens; }, in);
  }
  {
    GteConfig cfg;
    cfg.K = 2;
    cfg.P = 2;
    cfg.G = 2;
    cfg.C = 3;
    auto p = zero_gte_params<double>(cfg);
    Inputs in = randomize_into(s, p, 0.3);
    D rep = s.rand({3 * 4, cfg.rep_channels()});
    in.emplace_back("rep", rep);
    s.check("group_token_embed", [&] { return group_token_embed(rep, 3, 4, p, cfg); }, in);
  }
  return s.take();
}

template <typename T>
void randomize_parameters(ModelParams<T>& params, std::uint64_t seed, double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, stddev);
  visit_parameters(params, [&](const std::string&, Tensor<T>& t) {
    for (auto& v : t.mutable_data()) v = static_cast<T>(n(rng));
  });
}

template void randomize_parameters(ModelParams<float>&, std::uint64_t, double);
template void randomize_parameters(ModelParams<double>&, std::uint64_t, double);

std::vector<GradCheckReport> gradcheck_model(std::uint64_t seed) {
  GetConfig cfg;
  cfg.width = 16;
  cfg.height = 16;
  cfg.P = 4;
  cfg.K = 2;
  cfg.G = 4;
  cfg.embed_dim = 8;
  cfg.stages = {1, 1};
  cfg.window = {2, 2};
  cfg.num_classes = 3;
  cfg.seed = seed;
  auto params = build_model<double>(cfg);
  randomize_parameters(params, seed + 1, 0.3);
  const auto stream =
      generate_synthetic_stream(seed + 2, 300, 16, 16, 10000, MotionModel::MovingBar);
  const auto rep = representation_tensor<double>(encode_for_model(stream, cfg), cfg.gte());
  const std::function<D()> f = [&] {
    return ops::cross_entropy(model_head(model_features(rep, params, cfg), params), {1});
  };
  auto named = named_parameters(params);
  GradCheckOptions opts;
  opts.tol = grad_scope_tolerance(GradScope::Model);
  auto reports = finite_diff_check_all(f, named, opts);
  for (auto& r : reports) r.name = "model/" + r.name;
  return reports;
}

std::vector<GradCheckReport> run_gradcheck(GradScope scope, std::uint64_t seed) {
  switch (scope) {
    case GradScope::Ops: return gradcheck_ops(seed);
    case GradScope::Block: return gradcheck_block(seed);
    case GradScope::Model: return gradcheck_model(seed);
  }
  return {};
}

}  // namespace getnet
