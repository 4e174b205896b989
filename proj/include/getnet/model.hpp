// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "getnet/edsa.hpp"
#include "getnet/events.hpp"
#include "getnet/group_token.hpp"
#include "getnet/gta.hpp"
#include "getnet/tensor.hpp"

namespace getnet {

/// Full backbone configuration. embed_dim is the total stage-1 width G·C.
struct GetConfig {
  std::uint32_t width = 128;   // sensor pixels
  std::uint32_t height = 128;
  std::vector<std::size_t> stages{2, 2, 8};
  std::uint32_t embed_dim = 48;
  std::uint32_t K = 12;
  std::uint32_t P = 4;
  std::uint32_t G = 12;
  WindowShape window{8, 8};
  BlockVariant block_variant = BlockVariant::Edsa;
  std::size_t num_classes = 10;
  std::uint64_t seed = 0;
  double init_std = 0.02;
  bool time_weights = true;

  GteConfig gte() const;
  /// Throws Error{ConfigError}. A config with no stages is accepted only by
  /// build_model (head-only parameter set).
  void validate() const;

  bool operator==(const GetConfig&) const = default;
};

/// Canonical `key=value` text, one key per line in a fixed order.
std::string config_to_text(const GetConfig& cfg);
/// Missing keys keep their defaults; unknown keys and bad values throw
/// Error{ConfigError}.
GetConfig config_from_text(const std::string& text);
GetConfig load_config(const std::filesystem::path& path);

struct StageShape {
  std::size_t rows = 0, cols = 0;
  std::size_t groups = 0;
  std::size_t channels = 0;  // per group
  std::size_t blocks = 0;
  std::size_t width() const { return groups * channels; }
  std::size_t tokens() const { return rows * cols; }
};

/// Per-stage grid/group/channel arithmetic; validates the config.
std::vector<StageShape> stage_shapes(const GetConfig& cfg);

template <typename T>
struct ModelParams {
  GteParams<T> gte;
  std::vector<std::vector<EdsaParams<T>>> stages;
  std::vector<GtaParams<T>> gta;  // gta[s-1] feeds stage s
  Tensor<T> head_ln_g, head_ln_b;  // [D_last]
  Tensor<T> head_w;                // [D_last, classes]
  Tensor<T> head_b;                // [classes]
};

/// Visits every trainable tensor in declaration order with a dotted name.
template <typename T, typename Fn>
void visit_parameters(ModelParams<T>& m, Fn&& fn) {
  auto leaf = [&](const std::string& prefix) {
    return [&fn, prefix](const char* name, Tensor<T>& t) {
      if (t.defined()) fn(prefix + name, t);
    };
  };
  if (m.gte.conv_w.defined()) visit_parameters(m.gte, leaf("gte."));
  for (std::size_t s = 0; s < m.stages.size(); ++s) {
    if (s > 0) visit_parameters(m.gta[s - 1], leaf("gta" + std::to_string(s) + "."));
    for (std::size_t b = 0; b < m.stages[s].size(); ++b) {
      visit_parameters(m.stages[s][b],
                       leaf("stage" + std::to_string(s) + ".block" + std::to_string(b) + "."));
    }
  }
  auto h = leaf("head.");
  h("ln_g", m.head_ln_g);
  h("ln_b", m.head_ln_b);
  h("w", m.head_w);
  h("b", m.head_b);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> named_parameters(ModelParams<T>& m) {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  visit_parameters(m, [&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); });
  return out;
}

/// Deterministic from cfg.seed: truncated normal (±2σ, σ = init_std)
/// weights, zero biases and bias tables, unit layer-norm gains.
template <typename T>
ModelParams<T> build_model(const GetConfig& cfg);

template <typename T>
std::size_t count_parameters(ModelParams<T>& params);

/// GTE + stages, returning the pre-head token field F_s + F_g of the last
/// stage. rep_tokens is the [tokens, 4K·P²] representation.
template <typename T>
Tensor<T> model_features(const Tensor<T>& rep_tokens, const ModelParams<T>& params,
                         const GetConfig& cfg);

/// Head: mean over tokens -> layer norm -> linear.
template <typename T>
Tensor<T> model_head(const Tensor<T>& features, const ModelParams<T>& params);

template <typename T>
Tensor<T> model_forward_rep(const GroupRepresentation& rep, const ModelParams<T>& params,
                            const GetConfig& cfg);

/// Encodes the stream and runs the full model; logits [num_classes].
template <typename T>
Tensor<T> model_forward(const EventStream& stream, const ModelParams<T>& params,
                        const GetConfig& cfg);

GroupRepresentation encode_for_model(const EventStream& stream, const GetConfig& cfg,
                                     unsigned threads = 1);

struct Classification {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

/// Argmax of softmax(logits); ties go to the lowest index.
Classification classify_logits(std::span<const float> logits);
Classification classify(const EventStream& stream, const ModelParams<float>& params,
                        const GetConfig& cfg);

/// Checkpoint file: "GETW", u32 version, u32 config length + config text,
/// then per tensor u32 name length, name, u32 rank, u32 dims, f32 data
/// (all little-endian), in declaration order until end of file.
void save_checkpoint(const std::filesystem::path& path, const GetConfig& cfg,
                     ModelParams<float>& params);

struct Checkpoint {
  GetConfig config;
  ModelParams<float> params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace getnet
