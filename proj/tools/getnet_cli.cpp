// Command-line front end: encoder benchmarks, gradient checks, stage
// arithmetic, toy training, inference and synthetic data generation.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "getnet/bench.hpp"
#include "getnet/error.hpp"
#include "getnet/model.hpp"
#include "getnet/trainer.hpp"
#include "getnet/verify.hpp"

namespace {

using getnet::GetConfig;
using nlohmann::json;

GetConfig config_or(const std::string& path, const GetConfig& fallback) {
  return path.empty() ? fallback : getnet::load_config(path);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw getnet::Error(getnet::ErrorCode::IoError, "cannot write " + path);
  out << text;
}

int cmd_encode_bench(const std::string& encoder, std::size_t events, unsigned threads,
                     std::size_t runs, std::uint64_t seed, const std::string& config,
                     const std::string& out) {
  getnet::BenchOptions o;
  o.encoder = getnet::parse_encoder(encoder);
  o.events = events;
  o.threads = threads;
  o.runs = runs;
  o.seed = seed;
  if (!config.empty()) {
    const auto cfg = getnet::load_config(config);
    o.width = cfg.width;
    o.height = cfg.height;
    o.gte = cfg.gte();
  }
  const auto report = getnet::run_encode_bench(o);
  std::cout << report.to_text();
  if (!out.empty()) write_text(out, report.to_json() + "\n");
  return 0;
}

int cmd_gradcheck(const std::string& scope_name, std::uint64_t seed, const std::string& out) {
  const auto scope = getnet::parse_grad_scope(scope_name);
  const auto reports = getnet::run_gradcheck(scope, seed);
  bool ok = !reports.empty();
  json j = json::array();
  for (const auto& r : reports) {
    ok = ok && r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(44) << r.name
              << " max_rel_err=" << std::scientific << std::setprecision(3) << r.max_rel_error
              << std::defaultfloat << " checked=" << r.checked << " skipped=" << r.skipped
              << '\n';
    j.push_back({{"name", r.name},
                 {"max_rel_error", r.max_rel_error},
                 {"checked", r.checked},
                 {"skipped", r.skipped},
                 {"passed", r.passed}});
  }
  std::cout << (ok ? "gradcheck " : "gradcheck FAILED ") << getnet::to_string(scope) << ": "
            << reports.size() << " tensors, tol " << getnet::grad_scope_tolerance(scope) << '\n';
  if (!out.empty()) {
    write_text(out, json{{"scope", std::string(getnet::to_string(scope))},
                         {"tolerance", getnet::grad_scope_tolerance(scope)},
                         {"passed", ok},
                         {"reports", j}}
                        .dump(2) +
                        "\n");
  }
  return ok ? 0 : 1;
}

int cmd_shapes(const std::string& config, const std::string& out) {
  const GetConfig cfg = config_or(config, GetConfig{});
  const auto shapes = getnet::stage_shapes(cfg);
  auto params = getnet::build_model<float>(cfg);
  const auto count = getnet::count_parameters(params);
  json j = json::array();
  std::cout << "stage  grid     groups  channels  width  tokens  blocks\n";
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const auto& sh = shapes[s];
    std::ostringstream grid;
    grid << sh.rows << 'x' << sh.cols;
    std::cout << std::left << std::setw(7) << s + 1 << std::setw(9) << grid.str() << std::setw(8)
              << sh.groups << std::setw(10) << sh.channels << std::setw(7) << sh.width()
              << std::setw(8) << sh.tokens() << sh.blocks << '\n';
    json row = {{"stage", s + 1},     {"rows", sh.rows},       {"cols", sh.cols},
                {"groups", sh.groups}, {"channels", sh.channels}, {"width", sh.width()},
                {"tokens", sh.tokens()}, {"blocks", sh.blocks}};
    if (s > 0) {
      const auto g = getnet::gta_geometry(shapes[s - 1].groups, shapes[s - 1].channels);
      row["gta"] = {{"group_kernel", g.group_kernel},
                    {"group_stride", g.group_stride},
                    {"pad_groups", g.pad_groups}};
      std::cout << "       gta: GK=" << g.group_kernel << " GS=" << g.group_stride
                << " pad_groups=" << g.pad_groups << '\n';
    }
    j.push_back(row);
  }
  std::cout << "parameters " << count << '\n';
  if (!out.empty()) {
    write_text(out, json{{"stages", j}, {"parameters", count}}.dump(2) + "\n");
  }
  return 0;
}

int cmd_train_toy(const std::string& config, getnet::TrainConfig tcfg,
                  const std::string& optimizer, std::size_t samples, const std::string& out,
                  const std::string& checkpoint) {
  GetConfig cfg = config_or(config, getnet::micro_config());
  cfg.seed = tcfg.seed;
  tcfg.optimizer = getnet::parse_optimizer(optimizer);
  const auto data = getnet::make_toy_dataset(samples, tcfg.seed, cfg.width, cfg.height);
  auto result = getnet::train_toy(data, cfg, tcfg);
  const double acc = getnet::evaluate(data, result.params, cfg);
  std::cout << "steps " << result.losses.size() << '\n'
            << "initial_loss " << result.losses.front() << '\n'
            << "final_loss " << result.final_loss << '\n'
            << "train_accuracy " << acc << '\n';
  if (!out.empty()) getnet::write_loss_csv(out, result.losses);
  if (!checkpoint.empty()) getnet::save_checkpoint(checkpoint, cfg, result.params);
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& events,
              const std::string& format, unsigned threads, const std::string& config,
              const std::string& out) {
  const auto ck = getnet::load_checkpoint(checkpoint);
  if (!config.empty()) {
    const auto expected = getnet::load_config(config);
    if (!(expected == ck.config)) {
      throw getnet::Error(getnet::ErrorCode::ConfigError,
                          "checkpoint config does not match " + config);
    }
  }
  const auto stream = getnet::load_events(events, getnet::parse_event_format(format),
                                          ck.config.width, ck.config.height);
  const auto rep = getnet::encode_for_model(stream, ck.config, threads);
  const auto logits = getnet::model_forward_rep(rep, ck.params, ck.config);
  const auto result = getnet::classify_logits(logits.data());
  const json j = {{"label", result.label},
                  {"probabilities", result.probabilities},
                  {"logits", logits.vec()},
                  {"events", stream.size()}};
  std::cout << j.dump() << '\n';
  if (!out.empty()) write_text(out, j.dump(2) + "\n");
  return 0;
}

int cmd_generate(const std::string& motion, std::size_t events, std::uint32_t width,
                 std::uint32_t height, std::int64_t duration, std::uint64_t seed,
                 const std::string& format, const std::string& out) {
  const auto stream = getnet::generate_synthetic_stream(
      seed, events, width, height, duration, getnet::parse_motion_model(motion));
  if (getnet::parse_event_format(format) == getnet::EventFormat::Binary) {
    getnet::save_events_binary(stream, out);
  } else {
    getnet::save_events_csv(stream, out);
  }
  std::cout << "wrote " << stream.size() << " events to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera group-token backbone tools"};
  app.require_subcommand(1);

  std::string config, out, encoder = "group_token", scope = "ops", format = "binary";
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::size_t events = 1'000'000, runs = 5;

  auto* bench = app.add_subcommand("encode-bench", "Time an event encoder");
  bench->add_option("--encoder", encoder)
      ->check(CLI::IsMember({"group_token", "histogram", "voxel"}));
  bench->add_option("--events", events, "Synthetic event count");
  bench->add_option("--threads", threads)->check(CLI::PositiveNumber);
  bench->add_option("--runs", runs)->check(CLI::PositiveNumber);
  bench->add_option("--seed", seed);
  bench->add_option("--config", config, "Sensor size and K/P/G");
  bench->add_option("--out", out, "JSON report path");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  grad->add_option("--scope", scope)->check(CLI::IsMember({"ops", "block", "model"}));
  grad->add_option("--seed", seed);
  grad->add_option("--out", out, "JSON report path");

  auto* shapes = app.add_subcommand("shapes", "Per-stage grid, groups and channels");
  shapes->add_option("--config", config);
  shapes->add_option("--out", out, "JSON report path");

  getnet::TrainConfig tcfg;
  std::string optimizer = "adam", checkpoint;
  std::size_t samples = 64;
  auto* train = app.add_subcommand("train-toy", "Fit the two-class synthetic set");
  train->add_option("--config", config, "Defaults to the micro model");
  train->add_option("--seed", tcfg.seed);
  train->add_option("--threads", tcfg.threads)->check(CLI::PositiveNumber);
  train->add_option("--steps", tcfg.steps);
  train->add_option("--lr", tcfg.lr);
  train->add_option("--batch", tcfg.batch_size, "0 for full batch");
  train->add_option("--optimizer", optimizer)->check(CLI::IsMember({"sgd", "adam"}));
  train->add_option("--samples", samples);
  train->add_flag("--freeze-gsa", tcfg.freeze_gsa, "Drop group-attention gradients");
  train->add_option("--out", out, "Loss curve CSV path");
  train->add_option("--checkpoint", checkpoint, "Save trained weights here");

  std::string events_path;
  auto* infer = app.add_subcommand("infer", "Classify an event file with a checkpoint");
  infer->add_option("--checkpoint", checkpoint)->required();
  infer->add_option("--events", events_path)->required();
  infer->add_option("--format", format)->check(CLI::IsMember({"csv", "binary"}));
  infer->add_option("--threads", threads)->check(CLI::PositiveNumber);
  infer->add_option("--config", config, "Expected config; mismatch is an error");
  infer->add_option("--out", out, "JSON output path");

  std::string motion = "moving_bar";
  std::uint32_t width = 128, height = 128;
  std::int64_t duration = 1'000'000;
  auto* gen = app.add_subcommand("generate", "Write a synthetic event file");
  gen->add_option("--motion", motion)
      ->check(CLI::IsMember({"uniform_noise", "moving_bar", "rotating_dot"}));
  gen->add_option("--events", events);
  gen->add_option("--width", width);
  gen->add_option("--height", height);
  gen->add_option("--duration", duration);
  gen->add_option("--seed", seed);
  gen->add_option("--format", format)->check(CLI::IsMember({"csv", "binary"}));
  gen->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench->parsed()) return cmd_encode_bench(encoder, events, threads, runs, seed, config, out);
    if (grad->parsed()) return cmd_gradcheck(scope, seed, out);
    if (shapes->parsed()) return cmd_shapes(config, out);
    if (train->parsed()) return cmd_train_toy(config, tcfg, optimizer, samples, out, checkpoint);
    if (infer->parsed()) return cmd_infer(checkpoint, events_path, format, threads, config, out);
    if (gen->parsed()) {
      return cmd_generate(motion, events, width, height, duration, seed, format, out);
    }
  } catch (const getnet::Error& e) {
    std::cerr << "error [" << getnet::to_string(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
