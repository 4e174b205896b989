// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "getnet/error.hpp"
#include "getnet/ops.hpp"

namespace getnet {

GteConfig GetConfig::gte() const {
  if (G == 0 || embed_dim % G != 0) {
    throw Error(ErrorCode::ConfigError, "embed_dim " + std::to_string(embed_dim) +
                                            " is not divisible by G=" + std::to_string(G));
  }
  GteConfig g;
  g.K = K;
  g.P = P;
  g.G = G;
  g.C = embed_dim / G;
  g.time_weights = time_weights;
  return g;
}

void GetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (stages.empty()) fail("at least one stage is required");
  if (width == 0 || height == 0) fail("sensor size must be positive");
  if (window.h == 0 || window.w == 0) fail("window must be at least 1x1");
  if (num_classes == 0) fail("num_classes must be >= 1");
  if (!(init_std >= 0.0)) fail("init_std must be >= 0");
  gte().validate();
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename U>
U parse_number(std::string_view key, std::string_view v) {
  U out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error(ErrorCode::ConfigError,
                "bad value '" + std::string(v) + "' for key '" + std::string(key) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw Error(ErrorCode::ConfigError,
              "bad boolean '" + std::string(v) + "' for key '" + std::string(key) + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::string config_to_text(const GetConfig& c) {
  std::ostringstream os;
  os << "width=" << c.width << '\n' << "height=" << c.height << '\n' << "stages=";
  for (std::size_t i = 0; i < c.stages.size(); ++i) os << (i ? "," : "") << c.stages[i];
  os << '\n'
     << "embed_dim=" << c.embed_dim << '\n'
     << "K=" << c.K << '\n'
     << "P=" << c.P << '\n'
     << "G=" << c.G << '\n'
     << "window=" << c.window.h << 'x' << c.window.w << '\n'
     << "block_variant=" << to_string(c.block_variant) << '\n'
     << "num_classes=" << c.num_classes << '\n'
     << "seed=" << c.seed << '\n'
     << "init_std=" << format_double(c.init_std) << '\n'
     << "time_weights=" << (c.time_weights ? 1 : 0) << '\n';
  return os.str();
}

GetConfig config_from_text(const std::string& text) {
  GetConfig c;
  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ConfigError, "expected key=value, got '" + std::string(line) + "'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view val = trim(line.substr(eq + 1));
    if (key == "width") c.width = parse_number<std::uint32_t>(key, val);
    else if (key == "height") c.height = parse_number<std::uint32_t>(key, val);
    else if (key == "embed_dim") c.embed_dim = parse_number<std::uint32_t>(key, val);
    else if (key == "K") c.K = parse_number<std::uint32_t>(key, val);
    else if (key == "P") c.P = parse_number<std::uint32_t>(key, val);
    else if (key == "G") c.G = parse_number<std::uint32_t>(key, val);
    else if (key == "num_classes") c.num_classes = parse_number<std::size_t>(key, val);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, val);
    else if (key == "init_std") c.init_std = parse_number<double>(key, val);
    else if (key == "time_weights") c.time_weights = parse_bool(key, val);
    else if (key == "block_variant") c.block_variant = parse_block_variant(val);
    else if (key == "stages") {
      c.stages.clear();
      std::size_t start = 0;
      while (start <= val.size() && !val.empty()) {
        const auto comma = val.find(',', start);
        const auto item = trim(val.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        c.stages.push_back(parse_number<std::size_t>(key, item));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
    } else if (key == "window") {
      const auto x = val.find('x');
      if (x == std::string_view::npos) {
        c.window.h = c.window.w = parse_number<std::size_t>(key, val);
      } else {
        c.window.h = parse_number<std::size_t>(key, val.substr(0, x));
        c.window.w = parse_number<std::size_t>(key, val.substr(x + 1));
      }
    } else {
      throw Error(ErrorCode::ConfigError, "unknown config key '" + std::string(key) + "'");
    }
  }
  return c;
}

GetConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str());
}

std::vector<StageShape> stage_shapes(const GetConfig& cfg) {
  cfg.validate();
  const GteConfig gte = cfg.gte();
  const PatchGrid grid = patch_grid(cfg.width, cfg.height, cfg.P);
  std::vector<StageShape> shapes;
  StageShape cur{grid.rows, grid.cols, gte.G, gte.C, cfg.stages[0]};
  shapes.push_back(cur);
  for (std::size_t s = 1; s < cfg.stages.size(); ++s) {
    GtaGeometry geom;
    try {
      geom = gta_geometry(cur.groups, cur.channels);
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError,
                  "stage " + std::to_string(s) + " cannot aggregate groups: " + e.what());
    }
    cur.rows = (cur.rows - 1) / 2 + 1;
    cur.cols = (cur.cols - 1) / 2 + 1;
    cur.groups = geom.out_groups;
    cur.channels = geom.out_channels;
    cur.blocks = cfg.stages[s];
    shapes.push_back(cur);
  }
  return shapes;
}

template <typename T>
ModelParams<T> build_model(const GetConfig& cfg) {
  ModelParams<T> m;
  std::size_t head_width = cfg.embed_dim;
  if (!cfg.stages.empty()) {
    const auto shapes = stage_shapes(cfg);
    m.gte = zero_gte_params<T>(cfg.gte());
    for (std::size_t s = 0; s < shapes.size(); ++s) {
      if (s > 0) {
        m.gta.push_back(
            zero_gta_params<T>(gta_geometry(shapes[s - 1].groups, shapes[s - 1].channels)));
      }
      std::vector<EdsaParams<T>> blocks;
      for (std::size_t b = 0; b < shapes[s].blocks; ++b) {
        blocks.push_back(zero_edsa_params<T>(shapes[s].groups, shapes[s].channels, cfg.window));
      }
      m.stages.push_back(std::move(blocks));
    }
    head_width = shapes.back().width();
  } else if (cfg.embed_dim == 0 || cfg.num_classes == 0) {
    throw Error(ErrorCode::ConfigError, "head-only config needs embed_dim and num_classes");
  }
  m.head_ln_g = Tensor<T>::full({head_width}, T(1));
  m.head_ln_b = Tensor<T>::zeros({head_width});
  m.head_w = Tensor<T>::zeros({head_width, cfg.num_classes});
  m.head_b = Tensor<T>::zeros({cfg.num_classes});

  static const std::set<std::string> kWeights = {"conv_w", "mlp_w1", "mlp_w2", "w_q", "w_k",
                                                 "w_v",    "w_qg",   "w_kg",   "w_vg", "w"};
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  visit_parameters(m, [&](const std::string& name, Tensor<T>& t) {
    const std::string leaf = name.substr(name.rfind('.') + 1);
    if (!kWeights.count(leaf)) return;
    for (auto& v : t.mutable_data()) {
      double z = normal(rng);
      while (std::abs(z) > 2.0) z = normal(rng);
      v = static_cast<T>(static_cast<float>(z * cfg.init_std));
    }
  });
  return m;
}

template <typename T>
std::size_t count_parameters(ModelParams<T>& params) {
  std::size_t n = 0;
  visit_parameters(params, [&](const std::string&, Tensor<T>& t) { n += t.numel(); });
  return n;
}

template <typename T>
Tensor<T> model_features(const Tensor<T>& rep_tokens, const ModelParams<T>& params,
                         const GetConfig& cfg) {
  const auto shapes = stage_shapes(cfg);
  if (params.stages.size() != shapes.size()) {
    throw Error(ErrorCode::ConfigError, "parameters do not match the configured stage count");
  }
  EdsaState<T> state;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const StageShape& sh = shapes[s];
    if (s == 0) {
      state.spatial = group_token_embed(rep_tokens, sh.rows, sh.cols, params.gte, cfg.gte());
    } else {
      const StageShape& prev = shapes[s - 1];
      const auto geom = gta_geometry(prev.groups, prev.channels);
      auto out = gta_forward(ops::add(state.spatial, state.group), prev.rows, prev.cols,
                             params.gta[s - 1], geom);
      state.spatial = out.tokens;
    }
    // No residual crosses a stage boundary.
    state.group = Tensor<T>::zeros(state.spatial.shape());
    const auto layout = make_window_layout(sh.rows, sh.cols, cfg.window);
    for (const auto& block : params.stages[s]) {
      state = edsa_block_forward(state, block, layout, sh.groups, cfg.block_variant);
    }
  }
  return ops::add(state.spatial, state.group);
}

template <typename T>
Tensor<T> model_head(const Tensor<T>& features, const ModelParams<T>& params) {
  auto pooled = ops::mean_rows(features);
  pooled = ops::reshape(pooled, {1, pooled.numel()});
  auto normed = ops::layer_norm(pooled, params.head_ln_g, params.head_ln_b);
  auto logits = ops::linear(normed, params.head_w, params.head_b);
  return ops::reshape(logits, {logits.numel()});
}

GroupRepresentation encode_for_model(const EventStream& stream, const GetConfig& cfg,
                                     unsigned threads) {
  if (stream.width != cfg.width || stream.height != cfg.height) {
    throw Error(ErrorCode::ConfigError,
                "stream is " + std::to_string(stream.width) + "x" + std::to_string(stream.height) +
                    " but the model expects " + std::to_string(cfg.width) + "x" +
                    std::to_string(cfg.height));
  }
  return encode_group_tokens(stream, cfg.gte(), threads);
}

template <typename T>
Tensor<T> model_forward_rep(const GroupRepresentation& rep, const ModelParams<T>& params,
                            const GetConfig& cfg) {
  return model_head(model_features(representation_tensor<T>(rep, cfg.gte()), params, cfg),
                    params);
}

template <typename T>
Tensor<T> model_forward(const EventStream& stream, const ModelParams<T>& params,
                        const GetConfig& cfg) {
  return model_forward_rep(encode_for_model(stream, cfg), params, cfg);
}

Classification classify_logits(std::span<const float> logits) {
  Classification c;
  if (logits.empty()) return c;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  c.probabilities.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    c.probabilities[i] = std::exp(static_cast<double>(logits[i]) - mx);
    total += c.probabilities[i];
  }
  for (auto& p : c.probabilities) p /= total;
  c.label = static_cast<std::size_t>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
  return c;
}

Classification classify(const EventStream& stream, const ModelParams<float>& params,
                        const GetConfig& cfg) {
  const auto logits = model_forward(stream, params, cfg);
  return classify_logits(logits.data());
}

#define GETNET_INSTANTIATE_MODEL(T)                                                            \
  template ModelParams<T> build_model(const GetConfig&);                                       \
  template std::size_t count_parameters(ModelParams<T>&);                                      \
  template Tensor<T> model_features(const Tensor<T>&, const ModelParams<T>&, const GetConfig&);\
  template Tensor<T> model_head(const Tensor<T>&, const ModelParams<T>&);                      \
  template Tensor<T> model_forward_rep(const GroupRepresentation&, const ModelParams<T>&,      \
                                       const GetConfig&);                                      \
  template Tensor<T> model_forward(const EventStream&, const ModelParams<T>&, const GetConfig&);

GETNET_INSTANTIATE_MODEL(float)
GETNET_INSTANTIATE_MODEL(double)

#undef GETNET_INSTANTIATE_MODEL

}  // namespace getnet
