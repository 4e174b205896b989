// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "getnet/error.hpp"
#include "getnet/ops.hpp"

namespace getnet {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw Error(ErrorCode::ConfigError, "unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

void TrainConfig::validate() const {
  if (steps == 0) throw Error(ErrorCode::ConfigError, "steps must be >= 1");
  if (!std::isfinite(lr) || lr < 0.0) {
    throw Error(ErrorCode::ConfigError, "learning rate must be finite and >= 0");
  }
}

Optimizer::Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

void Optimizer::step(std::vector<Tensor<float>>& params) {
  ++t_;
  if (kind_ == OptimizerKind::Sgd) {
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      auto w = p.mutable_data();
      auto g = p.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = static_cast<float>(w[i] - lr_ * g[i]);
      }
    }
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  m_.resize(params.size());
  v_.resize(params.size());
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto w = p.mutable_data();
    m_[k].resize(w.size(), 0.0);
    v_[k].resize(w.size(), 0.0);
    if (!p.has_grad()) continue;
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m_[k][i] = b1 * m_[k][i] + (1.0 - b1) * gi;
      v_[k][i] = b2 * v_[k][i] + (1.0 - b2) * gi * gi;
      const double mh = m_[k][i] / c1;
      const double vh = v_[k][i] / c2;
      w[i] = static_cast<float>(w[i] - lr_ * mh / (std::sqrt(vh) + eps));
    }
  }
}

std::vector<LabeledStream> make_toy_dataset(std::size_t samples, std::uint64_t seed,
                                            std::uint32_t width, std::uint32_t height,
                                            std::size_t events_per_sample) {
  std::vector<LabeledStream> out;
  out.reserve(samples);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t label = i % 2;
    const MotionModel motion = label == 0 ? MotionModel::MovingBar : MotionModel::RotatingDot;
    out.push_back({generate_synthetic_stream(rng(), events_per_sample, width, height, 100000,
                                             motion),
                   label});
  }
  return out;
}

GetConfig micro_config() {
  GetConfig c;
  c.width = 16;
  c.height = 16;
  c.P = 4;
  c.K = 2;
  c.G = 4;
  c.embed_dim = 8;
  c.stages = {1, 1};
  c.window = {2, 2};
  c.num_classes = 2;
  return c;
}

namespace {

struct Encoded {
  Tensor<float> tokens;
  std::size_t label;
};

std::vector<Encoded> encode_dataset(const std::vector<LabeledStream>& dataset,
                                    const GetConfig& cfg, unsigned threads) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "dataset is empty");
  std::vector<Encoded> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].label >= cfg.num_classes) {
      throw Error(ErrorCode::ConfigError,
                  "label " + std::to_string(dataset[i].label) + " is not below num_classes", i);
    }
    out.push_back({representation_tensor<float>(encode_for_model(dataset[i].stream, cfg, threads),
                                                cfg.gte()),
                   dataset[i].label});
  }
  return out;
}

Tensor<float> sample_logits(const Encoded& e, const ModelParams<float>& params,
                            const GetConfig& cfg) {
  return model_head(model_features(e.tokens, params, cfg), params);
}

bool is_group_attention(const std::string& name) {
  const std::string leaf = name.substr(name.rfind('.') + 1);
  return leaf == "w_qg" || leaf == "w_kg" || leaf == "w_vg" || leaf == "rgb_table";
}

double mean_loss(const std::vector<Encoded>& data, const ModelParams<float>& params,
                 const GetConfig& cfg) {
  double total = 0.0;
  for (const auto& e : data) {
    total += ops::cross_entropy(sample_logits(e, params, cfg), {e.label}).item();
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

TrainResult train_toy(const std::vector<LabeledStream>& dataset, const GetConfig& cfg,
                      const TrainConfig& tcfg) {
  tcfg.validate();
  const auto data = encode_dataset(dataset, cfg, tcfg.threads);

  TrainResult result;
  result.params = build_model<float>(cfg);
  std::vector<Tensor<float>> params;
  std::vector<bool> frozen;
  visit_parameters(result.params, [&](const std::string& name, Tensor<float>& t) {
    t.set_requires_grad(true);
    params.push_back(t);
    frozen.push_back(tcfg.freeze_gsa && is_group_attention(name));
  });

  const std::size_t n = data.size();
  const std::size_t batch = tcfg.batch_size == 0 ? n : std::min(tcfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(tcfg.seed);
  std::size_t cursor = n;  // forces a shuffle on first use when batching

  Optimizer opt(tcfg.optimizer, tcfg.lr);
  result.losses.reserve(tcfg.steps);
  for (std::size_t step = 0; step < tcfg.steps; ++step) {
    std::vector<std::size_t> items;
    if (batch == n) {
      items = order;
    } else {
      for (std::size_t k = 0; k < batch; ++k) {
        if (cursor == n) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        items.push_back(order[cursor++]);
      }
    }
    for (auto& p : params) p.zero_grad();
    Tensor<float> loss;
    for (std::size_t idx : items) {
      auto l = ops::cross_entropy(sample_logits(data[idx], result.params, cfg), {data[idx].label});
      loss = loss.defined() ? ops::add(loss, l) : l;
    }
    loss = ops::scale(loss, 1.0 / static_cast<double>(items.size()));
    result.losses.push_back(loss.item());
    backward(loss);
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (frozen[k]) params[k].zero_grad();
    }
    opt.step(params);
  }
  for (auto& p : params) p.set_requires_grad(false);
  result.final_loss = mean_loss(data, result.params, cfg);
  return result;
}

double evaluate(const std::vector<LabeledStream>& dataset, const ModelParams<float>& params,
                const GetConfig& cfg) {
  const auto data = encode_dataset(dataset, cfg, 1);
  std::size_t hits = 0;
  for (const auto& e : data) {
    if (classify_logits(sample_logits(e, params, cfg).data()).label == e.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double dataset_loss(const std::vector<LabeledStream>& dataset, const ModelParams<float>& params,
                    const GetConfig& cfg) {
  return mean_loss(encode_dataset(dataset, cfg, 1), params, cfg);
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << losses[i] << '\n';
}

}  // namespace getnet
