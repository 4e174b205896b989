#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "getnet/group_token.hpp"
#include "getnet/ops.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace getnet;
using testutil::error_code_of;

namespace {

GteConfig gte(std::uint32_t K, std::uint32_t P, std::uint32_t G, std::uint32_t C = 2) {
  GteConfig c;
  c.K = K;
  c.P = P;
  c.G = G;
  c.C = C;
  return c;
}

EventStream stream_of(std::uint32_t w, std::uint32_t h,
                      std::initializer_list<std::array<std::int64_t, 4>> rows) {
  EventStream s;
  s.width = w;
  s.height = h;
  for (const auto& r : rows) {
    s.push_back(r[0], static_cast<std::uint8_t>(r[1]), static_cast<std::uint16_t>(r[2]),
                static_cast<std::uint16_t>(r[3]));
  }
  return s;
}

// Counts exact, time sums within rel 1e-6 (absolute floor 1e-6 at zero).
void require_matches_oracle(const GroupRepresentation& rep, const oracle::Representation& ref,
                            std::uint32_t P) {
  REQUIRE(rep.tokens() == ref.tokens);
  REQUIRE(rep.channels == ref.channels);
  const std::size_t pp = std::size_t{P} * P;
  for (std::size_t tok = 0; tok < ref.tokens; ++tok) {
    for (std::size_t ch = 0; ch < ref.channels; ++ch) {
      const double want = ref.data[tok * ref.channels + ch];
      const double got = rep.at(tok, ch);
      if ((ch / pp) % 2 == 0) {
        REQUIRE(got == want);
      } else {
        REQUIRE(std::abs(got - want) <= 1e-6 * std::max(1.0, std::abs(want)));
      }
    }
  }
}

GroupRepresentation pipeline(const EventStream& s, const GteConfig& cfg, unsigned threads = 1) {
  const auto grid = patch_grid(s.width, s.height, cfg.P);
  const auto disc = discretize_events(s, cfg);
  const auto l = linear_event_index(s.p, disc, cfg, grid);
  const auto bins = dual_bincount(l, s, bin_count(cfg, grid), threads);
  return build_group_representation(bins, cfg, grid);
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(gte(12, 4, 24).validate());
  CHECK_NOTHROW(gte(12, 4, 12).validate());
  CHECK_NOTHROW(gte(1, 4, 1).validate());
  CHECK(error_code_of([] { gte(3, 4, 3).validate(); }) == ErrorCode::ConfigError);
  CHECK(error_code_of([] { gte(4, 4, 3).validate(); }) == ErrorCode::ConfigError);
  CHECK(error_code_of([] { gte(0, 4, 0).validate(); }) == ErrorCode::ConfigError);
  CHECK(error_code_of([] { gte(2, 0, 4).validate(); }) == ErrorCode::ConfigError);
}

TEST_CASE("discretize: scalar examples") {
  SUBCASE("t = t0 gives bin 0") {
    const auto s = stream_of(4, 4, {{7, 0, 0, 0}, {7, 1, 1, 1}, {20, 0, 0, 0}});
    const auto d = discretize_events(s, gte(5, 2, 10));
    CHECK(d.d_t[0] == 0);
    CHECK(d.d_t[1] == 0);
  }
  SUBCASE("K=4, t0=0, t_end=999, t=999 -> 3") {
    const auto s = stream_of(4, 4, {{0, 0, 0, 0}, {999, 0, 0, 0}});
    CHECK(discretize_events(s, gte(4, 2, 8)).d_t[1] == 3);
  }
  SUBCASE("P=2, W=4: (3,2) -> pr 1, pos 3") {
    const auto s = stream_of(4, 4, {{0, 0, 3, 2}});
    const auto d = discretize_events(s, gte(2, 2, 4));
    CHECK(d.pr[0] == 1);
    CHECK(d.pos[0] == 3);
  }
  SUBCASE("bins stay in [0, K) for huge time ranges") {
    const auto s = stream_of(4, 4, {{-(std::int64_t{1} << 62), 0, 0, 0},
                                    {0, 0, 0, 0},
                                    {(std::int64_t{1} << 62), 0, 0, 0}});
    const auto d = discretize_events(s, gte(12, 2, 24));
    CHECK(d.d_t[0] == 0);
    CHECK(d.d_t[1] == 5);  // floor(12 · 2^62 / (2^63 + 1))
    CHECK(d.d_t[2] == 11);
  }
}

TEST_CASE("linear index: examples and bijection") {
  const auto cfg = gte(2, 2, 4);
  const auto grid = patch_grid(4, 4, 2);
  SUBCASE("all zero") {
    DiscretizedEvents d{{0}, {0}, {0}};
    const std::vector<std::uint8_t> p{0};
    CHECK(linear_event_index(p, d, cfg, grid)[0] == 0);
  }
  SUBCASE("p=1, d_t=1, pr=1, pos=3 -> 55") {
    DiscretizedEvents d{{1}, {1}, {3}};
    const std::vector<std::uint8_t> p{1};
    CHECK(linear_event_index(p, d, cfg, grid)[0] == 55);
  }
  SUBCASE("every index combination hits [0, 2KHW) exactly once") {
    DiscretizedEvents d;
    std::vector<std::uint8_t> p;
    for (std::uint32_t pol = 0; pol < 2; ++pol)
      for (std::uint32_t dt = 0; dt < 2; ++dt)
        for (std::uint32_t pr = 0; pr < 4; ++pr)
          for (std::uint32_t pos = 0; pos < 4; ++pos) {
            p.push_back(static_cast<std::uint8_t>(pol));
            d.d_t.push_back(dt);
            d.pr.push_back(pr);
            d.pos.push_back(pos);
          }
    const auto l = linear_event_index(p, d, cfg, grid);
    const std::set<std::uint64_t> uniq(l.begin(), l.end());
    CHECK(uniq.size() == 64);
    CHECK(*uniq.begin() == 0);
    CHECK(*uniq.rbegin() == 2 * 2 * 4 * 4 - 1);
    CHECK(l.back() == 63);
  }
}

TEST_CASE("dual bincount") {
  SUBCASE("hand-traced example") {
    const auto s = stream_of(4, 4, {{0, 0, 0, 0}, {5, 0, 0, 0}, {9, 0, 0, 0}});
    const std::vector<std::uint64_t> l{0, 55, 55};
    const auto b = dual_bincount(l, s, 64);
    CHECK(b.counts[0] == 1);
    CHECK(b.counts[55] == 2);
    CHECK(b.time_sums[0] == 0.0);
    CHECK(b.time_sums[55] == doctest::Approx(14.0 / 9.0).epsilon(1e-12));
    std::uint64_t total = 0;
    for (auto c : b.counts) total += c;
    CHECK(total == 3);
  }
  SUBCASE("empty stream") {
    EventStream s;
    s.width = s.height = 4;
    const auto b = dual_bincount({}, s, 64);
    CHECK(b.counts == std::vector<std::uint32_t>(64, 0));
    CHECK(b.time_sums == std::vector<double>(64, 0.0));
  }
  SUBCASE("single event: one count, zero time weight") {
    const auto s = stream_of(4, 4, {{42, 1, 2, 2}});
    const std::vector<std::uint64_t> l{17};
    const auto b = dual_bincount(l, s, 64);
    CHECK(b.counts[17] == 1);
    CHECK(std::count(b.counts.begin(), b.counts.end(), 0u) == 63);
    CHECK(std::all_of(b.time_sums.begin(), b.time_sums.end(), [](double v) { return v == 0; }));
  }
  SUBCASE("out of range index") {
    const auto s = stream_of(4, 4, {{0, 0, 0, 0}, {1, 0, 0, 0}});
    const std::vector<std::uint64_t> l{3, 64};
    try {
      dual_bincount(l, s, 64);
      FAIL("expected IndexOutOfRange");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IndexOutOfRange);
      CHECK(e.index() == std::optional<std::size_t>(1));
    }
  }
  SUBCASE("event order and worker count do not change counts") {
    std::mt19937_64 rng(11);
    const auto s = oracle::random_stream(rng, 16, 16, 50000, 1'000'000);
    const auto cfg = gte(4, 4, 8);
    const auto grid = patch_grid(16, 16, 4);
    const auto l = linear_event_index(s.p, discretize_events(s, cfg), cfg, grid);
    const auto ref = dual_bincount(l, s, bin_count(cfg, grid), 1);
    // Shuffle the interior events; the first and last stay put so t0 and
    // t_end are unchanged.
    std::vector<std::size_t> perm(s.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin() + 1, perm.end() - 1, rng);
    EventStream shuf;
    shuf.width = s.width;
    shuf.height = s.height;
    std::vector<std::uint64_t> lshuf;
    for (std::size_t i : perm) {
      shuf.push_back(s.t[i], s.p[i], s.x[i], s.y[i]);
      lshuf.push_back(l[i]);
    }
    const auto b = dual_bincount(lshuf, shuf, bin_count(cfg, grid), 1);
    CHECK(b.counts == ref.counts);
    for (std::size_t i = 0; i < b.time_sums.size(); ++i)
      REQUIRE(std::abs(b.time_sums[i] - ref.time_sums[i]) <= 1e-6 * std::max(1.0, ref.time_sums[i]));
    for (unsigned threads : {2u, 3u, 4u}) {
      const auto bt = dual_bincount(l, s, bin_count(cfg, grid), threads);
      CHECK(bt.counts == ref.counts);
      for (std::size_t i = 0; i < bt.time_sums.size(); ++i)
        REQUIRE(std::abs(bt.time_sums[i] - ref.time_sums[i]) <= 1e-6 * std::max(1.0, ref.time_sums[i]));
    }
  }
}

TEST_CASE("representation layout") {
  const auto cfg = gte(2, 2, 4);
  SUBCASE("zero bins give a zero representation") {
    DualBinCount b{std::vector<std::uint32_t>(64, 0), std::vector<double>(64, 0.0)};
    const auto rep = build_group_representation(b, cfg, patch_grid(4, 4, 2));
    CHECK(rep.tokens() == 4);
    CHECK(rep.channels == 32);
    CHECK(std::all_of(rep.data.begin(), rep.data.end(), [](float v) { return v == 0.0f; }));
  }
  SUBCASE("event (p=1, d_t=1, x=3, y=2) lands at token 3, channel 25") {
    const auto s = stream_of(4, 4, {{0, 0, 0, 0}, {9, 1, 3, 2}});
    for (const auto& rep : {pipeline(s, cfg), encode_group_tokens(s, cfg)}) {
      CHECK(rep.at(3, 25) == 1.0f);
      CHECK(rep.at(3, 29) == 1.0f);  // time plane: (9 - 0) / 9
      CHECK(rep.at(0, 0) == 1.0f);
      float total = 0;
      for (float v : rep.data) total += v;
      CHECK(total == 3.0f);
    }
  }
  SUBCASE("per-token count planes sum to events per patch") {
    std::mt19937_64 rng(5);
    const auto s = oracle::random_stream(rng, 12, 8, 700, 5000);
    const auto c3 = gte(3, 4, 6);
    const auto rep = encode_group_tokens(s, c3);
    std::vector<double> per_patch(rep.tokens(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) per_patch[s.x[i] / 4 + (s.y[i] / 4) * 3] += 1;
    for (std::size_t tok = 0; tok < rep.tokens(); ++tok) {
      double sum = 0;
      for (std::size_t ch = 0; ch < rep.channels; ++ch)
        if ((ch / 16) % 2 == 0) sum += rep.at(tok, ch);
      CHECK(sum == per_patch[tok]);
    }
  }
  SUBCASE("sensor padded up to whole patches") {
    const auto s = stream_of(5, 3, {{0, 1, 4, 2}, {10, 0, 0, 0}});
    const auto rep = encode_group_tokens(s, cfg);
    CHECK(rep.cols == 3);
    CHECK(rep.rows == 2);
    // (4, 2): pos = 2 + 1·3 = 5, pr = 0, p=1, d_t=0 -> channel (2)·8
    CHECK(rep.at(5, 16) == 1.0f);
  }
}

TEST_CASE("encoder matches per-event oracle on 200 random streams") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint32_t W = 1 + rng() % 16, H = 1 + rng() % 16;
    const std::uint32_t K = 1 + rng() % 4;
    const std::uint32_t P = 1 + rng() % 4;
    const std::size_t n = rng() % 1001;
    const std::int64_t max_t = (trial % 5 == 0) ? 0 : std::int64_t(1 + rng() % 100000);
    const auto s = oracle::random_stream(rng, W, H, n, max_t);
    const auto cfg = gte(K, P, 2 * K);
    const auto ref = oracle::group_representation(s, K, P);
    CAPTURE(trial);
    require_matches_oracle(pipeline(s, cfg), ref, P);
    require_matches_oracle(encode_group_tokens(s, cfg), ref, P);
  }
}

TEST_CASE("fused encoder: multi-worker results and invariants") {
  std::mt19937_64 rng(77);
  const auto s = oracle::random_stream(rng, 64, 48, 200000, 10'000'000);
  const auto cfg = gte(6, 4, 12);
  const auto ref = oracle::group_representation(s, 6, 4);
  for (unsigned threads : {1u, 2u, 4u}) {
    const auto rep = encode_group_tokens(s, cfg, threads);
    require_matches_oracle(rep, ref, 4);
    CHECK(rep.data == encode_group_tokens(s, cfg, threads).data);  // repeatable
  }
  const auto rep = encode_group_tokens(s, cfg);
  double total = 0;
  for (std::size_t tok = 0; tok < rep.tokens(); ++tok)
    for (std::size_t ch = 0; ch < rep.channels; ++ch) {
      const bool count_plane = (ch / 16) % 2 == 0;
      const float v = rep.at(tok, ch);
      if (count_plane) {
        CHECK(v >= 0.0f);
        total += v;
      } else {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= rep.at(tok, ch - 16) + 1e-4f);
      }
    }
  CHECK(total == static_cast<double>(s.size()));
}

TEST_CASE("fused encoder: chunking of packed counters") {
  std::mt19937_64 rng(91);
  SUBCASE("wide offset spans shrink chunks") {
    for (std::int64_t max_t : {std::int64_t{1} << 41, std::int64_t{1} << 45}) {
      const auto s = oracle::random_stream(rng, 4, 4, 5000, max_t);
      CAPTURE(max_t);
      for (std::uint32_t K : {1u, 3u})
        require_matches_oracle(encode_group_tokens(s, gte(K, 2, 2 * K)), oracle::group_representation(s, K, 2), 2);
    }
  }
  SUBCASE("more events in one bin than a packed count holds") {
    const auto s = oracle::random_stream(rng, 2, 2, (std::size_t{1} << 20) + 4099, 1'000'000);
    require_matches_oracle(encode_group_tokens(s, gte(1, 2, 2)), oracle::group_representation(s, 1, 2), 2);
    require_matches_oracle(encode_group_tokens(s, gte(1, 2, 2), 3), oracle::group_representation(s, 1, 2), 2);
  }
}

TEST_CASE("fused encoder: wide time ranges take the floating accumulator") {
  const auto s = stream_of(4, 4, {{0, 0, 0, 0},
                                  {std::int64_t{1} << 61, 1, 1, 1},
                                  {std::int64_t{1} << 62, 1, 3, 3},
                                  {(std::int64_t{1} << 62) + 5, 0, 2, 2}});
  const auto cfg = gte(3, 2, 6);
  require_matches_oracle(encode_group_tokens(s, cfg), oracle::group_representation(s, 3, 2), 2);
}

TEST_CASE("embedding") {
  SUBCASE("zero representation and parameters give zero tokens") {
    const auto cfg = gte(2, 2, 4, 3);
    const auto p = zero_gte_params<float>(cfg);
    const auto rep = Tensor<float>::zeros({6, cfg.rep_channels()});
    const auto out = group_token_embed(rep, 2, 3, p, cfg);
    CHECK(out.shape() == Shape{6, 12});
    CHECK(std::all_of(out.data().begin(), out.data().end(), [](float v) { return v == 0.0f; }));
  }
  SUBCASE("default geometry: 1024 x 48") {
    GteConfig cfg;  // K=12, P=4, G=12, C=4
    const auto s = generate_synthetic_stream(0, 5000, 128, 128, 100000, MotionModel::MovingBar);
    const auto out = group_token_embed(encode_group_tokens(s, cfg), zero_gte_params<float>(cfg), cfg);
    CHECK(out.shape() == Shape{1024, 48});
  }
  for (std::uint32_t G : {4u, 2u}) {
    SUBCASE(("groups are decoupled, G=" + std::to_string(G)).c_str()) {
      const auto cfg = gte(2, 2, G, 3);
      std::mt19937_64 rng(G);
      std::normal_distribution<double> nd(0, 0.3);
      auto p = zero_gte_params<double>(cfg);
      visit_parameters(p, [&](const std::string&, Tensor<double>& t) {
        for (auto& v : t.mutable_data()) v = nd(rng);
      });
      const std::size_t rows = 3, cols = 3, in_per_group = cfg.rep_channels() / G;
      auto base = Tensor<double>::zeros({rows * cols, cfg.rep_channels()});
      for (auto& v : base.mutable_data()) v = nd(rng);
      const auto ref = group_token_embed(base, rows, cols, p, cfg);
      for (std::size_t g = 0; g < G; ++g) {
        auto pert = Tensor<double>::from(base.shape(), base.vec());
        // Perturb every channel of input group g at token 4.
        for (std::size_t c = 0; c < in_per_group; ++c)
          pert.mutable_data()[4 * cfg.rep_channels() + g * in_per_group + c] += 1.0;
        const auto out = group_token_embed(pert, rows, cols, p, cfg);
        for (std::size_t tok = 0; tok < rows * cols; ++tok)
          for (std::size_t og = 0; og < G; ++og)
            for (std::size_t c = 0; c < cfg.C; ++c) {
              const std::size_t idx = tok * G * cfg.C + og * cfg.C + c;
              if (og != g) REQUIRE(out[idx] == ref[idx]);
            }
        bool moved = false;
        for (std::size_t c = 0; c < cfg.C; ++c)
          moved |= out[4 * G * cfg.C + g * cfg.C + c] != ref[4 * G * cfg.C + g * cfg.C + c];
        CHECK(moved);
      }
    }
  }
  SUBCASE("shape mismatch") {
    const auto cfg = gte(2, 2, 4, 3);
    CHECK(error_code_of([&] {
            group_token_embed(Tensor<float>::zeros({5, cfg.rep_channels()}), 2, 3,
                              zero_gte_params<float>(cfg), cfg);
          }) == ErrorCode::ShapeMismatch);
  }
  SUBCASE("time_weights=false zeroes the time plane only") {
    auto cfg = gte(2, 2, 4);
    const auto s = stream_of(4, 4, {{0, 0, 0, 0}, {9, 1, 3, 2}});
    const auto rep = encode_group_tokens(s, cfg);
    cfg.time_weights = false;
    const auto t = representation_tensor<float>(rep, cfg);
    CHECK(t[3 * 32 + 25] == 1.0f);
    CHECK(t[3 * 32 + 29] == 0.0f);
  }
}

TEST_CASE("baseline encoders") {
  EventStream empty;
  empty.width = 5;
  empty.height = 4;
  SUBCASE("empty streams encode to zeros") {
    const auto h = encode_event_histogram(empty);
    const auto v = encode_voxel_grid(empty, 3);
    CHECK(h.shape() == Shape{4, 5, 2});
    CHECK(v.shape() == Shape{4, 5, 3});
    CHECK(std::all_of(h.data().begin(), h.data().end(), [](float x) { return x == 0; }));
    CHECK(std::all_of(v.data().begin(), v.data().end(), [](float x) { return x == 0; }));
  }
  SUBCASE("one ON event lands in the ON plane") {
    const auto s = stream_of(5, 4, {{3, 1, 2, 1}});
    const auto h = encode_event_histogram(s);
    float total = 0;
    for (float x : h.data()) total += x;
    CHECK(total == 1.0f);
    CHECK(h[(1 * 5 + 2) * 2 + 1] == 1.0f);
  }
  SUBCASE("voxel grid equals a per-event bilinear splat") {
    std::mt19937_64 rng(8);
    const auto s = oracle::random_stream(rng, 9, 7, 3000, 77777);
    const std::uint32_t K = 5;
    const auto v = encode_voxel_grid(s, K);
    std::vector<double> ref(9 * 7 * K, 0.0);
    double mass = 0.0;
    const double range = double(s.t.back() - s.t.front());
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double tn = (K - 1) * double(s.t[i] - s.t.front()) / range;
      const double lo = std::floor(tn);
      const double pol = s.p[i] ? 1.0 : -1.0;
      mass += pol;
      for (std::uint32_t b = 0; b < K; ++b) {
        const double w = std::max(0.0, 1.0 - std::abs(tn - b));
        ref[(std::size_t{s.y[i]} * 9 + s.x[i]) * K + b] += pol * w;
      }
      (void)lo;
    }
    double total = 0.0;
    for (std::size_t c = 0; c < ref.size(); ++c) {
      REQUIRE(v[c] == doctest::Approx(ref[c]).epsilon(1e-4).scale(10));
      total += v[c];
    }
    CHECK(total == doctest::Approx(mass).epsilon(1e-5));
  }
  SUBCASE("multi-worker histogram equals single worker") {
    std::mt19937_64 rng(9);
    const auto s = oracle::random_stream(rng, 32, 32, 100000, 1'000'000);
    CHECK(encode_event_histogram(s, 1).vec() == encode_event_histogram(s, 3).vec());
  }
}
