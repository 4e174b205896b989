// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "getnet/error.hpp"
#include "getnet/model.hpp"

namespace getnet {

namespace {

constexpr char kMagic[4] = {'G', 'E', 'T', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
  bool done() const { return pos_ == bytes_.size(); }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::IoError, "checkpoint is truncated");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const GetConfig& cfg,
                     ModelParams<float>& params) {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  const std::string text = config_to_text(cfg);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  visit_parameters(params, [&](const std::string& name, Tensor<float>& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  });
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::IoError, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(f), {}));
  if (r.str(4) != std::string(kMagic, 4)) {
    throw Error(ErrorCode::IoError, "not a checkpoint file: " + path.string());
  }
  if (const auto v = r.u32(); v != kVersion) {
    throw Error(ErrorCode::IoError, "unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ck;
  ck.config = config_from_text(r.str(r.u32()));
  ck.params = build_model<float>(ck.config);
  visit_parameters(ck.params, [&](const std::string& name, Tensor<float>& t) {
    if (r.done()) throw Error(ErrorCode::ConfigError, "checkpoint is missing tensor " + name);
    const std::string stored = r.str(r.u32());
    if (stored != name) {
      throw Error(ErrorCode::ConfigError,
                  "checkpoint tensor '" + stored + "' where '" + name + "' was expected");
    }
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    if (shape != t.shape()) {
      throw Error(ErrorCode::ConfigError, "checkpoint tensor " + name + " has shape " +
                                              shape_str(shape) + ", expected " +
                                              shape_str(t.shape()));
    }
    for (auto& v : t.mutable_data()) v = r.f32();
  });
  if (!r.done()) throw Error(ErrorCode::ConfigError, "checkpoint has unexpected extra tensors");
  return ck;
}

}  // namespace getnet
