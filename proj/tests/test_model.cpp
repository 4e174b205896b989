#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "getnet/model.hpp"
#include "getnet/ops.hpp"
#include "getnet/trainer.hpp"
#include "getnet/verify.hpp"
#include "test_helpers.hpp"

using namespace getnet;
using testutil::error_code_of;

namespace {

GetConfig micro() { return micro_config(); }

EventStream bar_stream(const GetConfig& cfg, std::size_t n = 600, std::uint64_t seed = 7) {
  return generate_synthetic_stream(seed, n, cfg.width, cfg.height, 100000, MotionModel::MovingBar);
}

EventStream empty_stream(const GetConfig& cfg) {
  EventStream s;
  s.width = cfg.width;
  s.height = cfg.height;
  return s;
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, double(std::abs(a[i] - b[i])));
  return m;
}

}  // namespace

TEST_CASE("config text") {
  SUBCASE("round trip") {
    GetConfig c;
    c.stages = {1, 3};
    c.window = {2, 4};
    c.block_variant = BlockVariant::Parallel;
    c.init_std = 0.0123456789;
    c.time_weights = false;
    c.seed = 99;
    CHECK(config_from_text(config_to_text(c)) == c);
    CHECK(config_from_text(config_to_text(GetConfig{})) == GetConfig{});
  }
  SUBCASE("comments, blanks and defaults") {
    const auto c = config_from_text("# micro\n\n  G = 4 \nembed_dim=8\nwindow=3\n");
    CHECK(c.G == 4);
    CHECK(c.embed_dim == 8);
    CHECK(c.window.h == 3);
    CHECK(c.window.w == 3);
    CHECK(c.K == GetConfig{}.K);
  }
  SUBCASE("errors") {
    CHECK(error_code_of([] { config_from_text("depth=3\n"); }) == ErrorCode::ConfigError);
    CHECK(error_code_of([] { config_from_text("K=twelve\n"); }) == ErrorCode::ConfigError);
    CHECK(error_code_of([] { config_from_text("stages=2,,8\n"); }) == ErrorCode::ConfigError);
    CHECK(error_code_of([] { load_config(testutil::scratch_dir() / "missing.cfg"); }) ==
          ErrorCode::IoError);
    GetConfig c;
    c.G = 5;  // 48 % 5 != 0
    CHECK(error_code_of([&] { c.validate(); }) == ErrorCode::ConfigError);
    CHECK(error_code_of([&] { build_model<float>(c); }) == ErrorCode::ConfigError);
  }
}

TEST_CASE("stage arithmetic") {
  SUBCASE("default config") {
    const auto shapes = stage_shapes(GetConfig{});
    REQUIRE(shapes.size() == 3);
    const std::size_t widths[] = {48, 96, 192}, grids[] = {32, 16, 8}, groups[] = {12, 6, 3},
                      blocks[] = {2, 2, 8};
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(shapes[s].width() == widths[s]);
      CHECK(shapes[s].rows == grids[s]);
      CHECK(shapes[s].cols == grids[s]);
      CHECK(shapes[s].groups == groups[s]);
      CHECK(shapes[s].blocks == blocks[s]);
    }
  }
  SUBCASE("tokens quarter, width doubles, groups halve") {
    for (std::uint32_t G : {4u, 12u, 24u})
      for (std::size_t n = 2; n <= 4; ++n) {
        GetConfig c;
        c.width = c.height = 256;
        c.G = G;
        c.K = G;
        c.embed_dim = 2 * G;
        c.stages.assign(n, 1);
        CAPTURE(G);
        CAPTURE(n);
        std::size_t g = G;
        for (std::size_t s = 1; s < n; ++s) g /= 2;
        if (g < 1) {
          CHECK(error_code_of([&] { stage_shapes(c); }) == ErrorCode::ConfigError);
          continue;
        }
        const auto shapes = stage_shapes(c);
        REQUIRE(shapes.size() == n);
        for (std::size_t s = 1; s < n; ++s) {
          CHECK(shapes[s].tokens() * 4 == shapes[s - 1].tokens());
          CHECK(shapes[s].width() == 2 * shapes[s - 1].width());
          CHECK(shapes[s].groups == shapes[s - 1].groups / 2);
        }
      }
  }
  SUBCASE("four-stage config at embed 72") {
    GetConfig c;
    c.embed_dim = 72;
    c.stages = {2, 2, 6, 2};
    const auto shapes = stage_shapes(c);
    REQUIRE(shapes.size() == 4);
    CHECK(shapes[3].width() == 576);
    CHECK(shapes[3].groups == 1);
  }
}

TEST_CASE("parameter counts") {
  SUBCASE("default config") {
    auto m = build_model<float>(GetConfig{});
    const auto n = count_parameters(m);
    MESSAGE("default parameter count: " << n);
    CHECK(n >= 3'400'000);
    CHECK(n <= 5'600'000);
  }
  SUBCASE("micro config equals the hand sum") {
    // C=2, 4x4 grid, 128 representation channels, 2x2 windows.
    const std::size_t gte = 8 * 32 * 9 + 8 + 4 * 2 * 4 + 4 * 4 + 4 * 4 * 2 + 4 * 2;
    auto block = [](std::size_t D, std::size_t S, std::size_t G) {
      return 3 * D * D + 3 * S * S + 9 + (2 * G - 1) + (D * 4 * D + 4 * D) + (4 * D * D + D) + 4 * D;
    };
    const std::size_t gta = 16 * 6 * 9 + 16 + 2 * 16;
    const std::size_t head = 2 * 16 + 16 * 2 + 2;
    const std::size_t expected = gte + block(8, 4, 4) + gta + block(16, 4, 2) + head;
    CHECK(expected == 7238);
    auto m = build_model<float>(micro());
    CHECK(count_parameters(m) == expected);
  }
  SUBCASE("zero-stage config is head only") {
    GetConfig c;
    c.stages.clear();
    c.embed_dim = 6;
    c.num_classes = 3;
    auto m = build_model<float>(c);
    CHECK(count_parameters(m) == 6 + 6 + 6 * 3 + 3);
    std::vector<std::string> names;
    visit_parameters(m, [&](const std::string& name, Tensor<float>&) { names.push_back(name); });
    CHECK(names == std::vector<std::string>{"head.ln_g", "head.ln_b", "head.w", "head.b"});
  }
}

TEST_CASE("initialization") {
  auto a = build_model<float>(micro());
  auto b = build_model<float>(micro());
  auto pa = named_parameters(a), pb = named_parameters(b);
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second.vec() == pb[i].second.vec());

  auto cfg = micro();
  cfg.seed = 1;
  auto c = build_model<float>(cfg);
  CHECK(named_parameters(c)[0].second.vec() != pa[0].second.vec());

  for (auto& [name, t] : pa) {
    CAPTURE(name);
    const std::string leaf = name.substr(name.rfind('.') + 1);
    for (float v : t.data()) {
      if (leaf == "ln_g" || leaf == "ln1_g" || leaf == "ln2_g")
        CHECK(v == 1.0f);
      else if (leaf.ends_with("_b") || leaf == "b" || leaf.ends_with("table") || leaf.starts_with("mlp_b"))
        CHECK(v == 0.0f);
      else
        CHECK(std::abs(v) <= 2 * micro().init_std + 1e-7);
    }
  }
}

TEST_CASE("forward") {
  const auto cfg = micro();
  auto m = build_model<float>(cfg);
  randomize_parameters(m, 3, 0.2);
  SUBCASE("empty stream runs the all-zero representation") {
    const auto logits = model_forward(empty_stream(cfg), m, cfg);
    CHECK(logits.shape() == Shape{cfg.num_classes});
    for (float v : logits.data()) CHECK(std::isfinite(v));
    GroupRepresentation zero = encode_for_model(empty_stream(cfg), cfg);
    std::fill(zero.data.begin(), zero.data.end(), 0.0f);
    CHECK(model_forward_rep(zero, m, cfg).vec() == logits.vec());
    CHECK(model_forward(empty_stream(cfg), m, cfg).vec() == logits.vec());
  }
  SUBCASE("logits shape across configs") {
    for (std::size_t classes : {1, 2, 7}) {
      auto c = cfg;
      c.num_classes = classes;
      for (auto v : {BlockVariant::Edsa, BlockVariant::SsaOnly, BlockVariant::Parallel}) {
        c.block_variant = v;
        auto p = build_model<float>(c);
        CHECK(model_forward(bar_stream(c, 200), p, c).shape() == Shape{classes});
      }
    }
  }
  SUBCASE("bit-exact determinism") {
    const auto s = bar_stream(cfg);
    CHECK(model_forward(s, m, cfg).vec() == model_forward(s, m, cfg).vec());
  }
  SUBCASE("geometry mismatch") {
    auto s = bar_stream(cfg);
    s.width = 32;
    CHECK(error_code_of([&] { model_forward(s, m, cfg); }) == ErrorCode::ConfigError);
  }
}

TEST_CASE("temporal information reaches the features") {
  SUBCASE("time bins make reversal visible") {
    const auto cfg = micro();
    auto m = build_model<float>(cfg);
    randomize_parameters(m, 4, 0.2);
    const auto s = bar_stream(cfg, 2000);
    const auto a = model_features(representation_tensor<float>(encode_for_model(s, cfg), cfg.gte()), m, cfg);
    const auto r = time_reversed(s);
    const auto b = model_features(representation_tensor<float>(encode_for_model(r, cfg), cfg.gte()), m, cfg);
    CHECK(max_abs_diff(a, b) > 1e-3);
  }
  SUBCASE("a purely spatial encoder is reversal invariant") {
    auto cfg = micro();
    cfg.K = 1;
    cfg.G = 1;
    cfg.embed_dim = 4;
    cfg.stages = {1};
    cfg.time_weights = false;
    auto m = build_model<float>(cfg);
    randomize_parameters(m, 4, 0.2);
    const auto s = bar_stream(cfg, 2000);
    const auto a = model_features(representation_tensor<float>(encode_for_model(s, cfg), cfg.gte()), m, cfg);
    const auto b = model_features(
        representation_tensor<float>(encode_for_model(time_reversed(s), cfg), cfg.gte()), m, cfg);
    CHECK(max_abs_diff(a, b) == 0.0);
  }
}

TEST_CASE("classification") {
  const float equal[] = {0.5f, 0.5f, 0.5f};
  const auto c = classify_logits(equal);
  CHECK(c.label == 0);
  for (double p : c.probabilities) CHECK(p == doctest::Approx(1.0 / 3));
  const float spread[] = {-3.0f, 80.0f, 80.0f, 2.0f};
  const auto d = classify_logits(spread);
  CHECK(d.label == 1);
  double total = 0;
  for (double p : d.probabilities) total += p;
  CHECK(std::abs(total - 1.0) <= 1e-6);

  const auto cfg = micro();
  auto m = build_model<float>(cfg);
  randomize_parameters(m, 5, 0.2);
  const auto r = classify(bar_stream(cfg), m, cfg);
  CHECK(r.probabilities.size() == cfg.num_classes);
  total = 0;
  for (double p : r.probabilities) total += p;
  CHECK(std::abs(total - 1.0) <= 1e-6);
}

TEST_CASE("checkpoints") {
  const auto dir = testutil::scratch_dir();
  auto cfg = micro();
  cfg.init_std = 0.05;
  auto m = build_model<float>(cfg);
  randomize_parameters(m, 6, 0.3);
  const auto path = dir / "micro.getw";
  save_checkpoint(path, cfg, m);

  SUBCASE("round trip is exact") {
    auto ck = load_checkpoint(path);
    CHECK(ck.config == cfg);
    auto a = named_parameters(m), b = named_parameters(ck.params);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(a[i].second.shape() == b[i].second.shape());
      CHECK(a[i].second.vec() == b[i].second.vec());
    }
    const auto s = bar_stream(cfg);
    CHECK(model_forward(s, ck.params, ck.config).vec() == model_forward(s, m, cfg).vec());
  }
  SUBCASE("header layout") {
    std::ifstream in(path, std::ios::binary);
    std::string head(8, '\0');
    in.read(head.data(), 8);
    CHECK(head.substr(0, 4) == "GETW");
    CHECK(head[4] == 1);
  }
  SUBCASE("truncation and bad magic") {
    std::ifstream in(path, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), {});
    for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
      const auto p = testutil::write_file("cut.getw", bytes.substr(0, cut));
      CAPTURE(cut);
      CHECK(error_code_of([&] { load_checkpoint(p); }) == ErrorCode::IoError);
    }
    auto bad = bytes;
    bad[0] = 'X';
    const auto p = testutil::write_file("bad.getw", bad);
    CHECK(error_code_of([&] { load_checkpoint(p); }) == ErrorCode::IoError);
    CHECK(error_code_of([&] { load_checkpoint(dir / "absent.getw"); }) == ErrorCode::IoError);
  }
  SUBCASE("parameters that do not fit the stored config") {
    auto other = cfg;
    other.num_classes = 3;
    auto wrong = build_model<float>(other);
    const auto p = dir / "mismatch.getw";
    save_checkpoint(p, cfg, wrong);
    CHECK(error_code_of([&] { load_checkpoint(p); }) == ErrorCode::ConfigError);

    auto fewer = cfg;
    fewer.stages = {1};
    auto short_model = build_model<float>(fewer);
    save_checkpoint(p, cfg, short_model);
    CHECK(error_code_of([&] { load_checkpoint(p); }) == ErrorCode::ConfigError);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    // One more well-formed record: name "x", rank 1, dim 1, value 0.
    bytes += std::string("\x01\0\0\0x\x01\0\0\0\x01\0\0\0\0\0\0\0", 17);
    const auto extra = testutil::write_file("extra.getw", bytes);
    CHECK(error_code_of([&] { load_checkpoint(extra); }) == ErrorCode::ConfigError);
  }
}
