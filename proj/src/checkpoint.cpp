// Copyright (c) the IDLat authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "idlat/checkpoint.hpp"

#include <sodium.h>

#include <cstring>
#include <json.hpp>

#include "idlat/binary_io.hpp"
#include "idlat/error.hpp"

namespace idlat {
namespace {

constexpr char kMagic[4] = {'I', 'D', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

ModelHash blake2b_16(std::span<const std::uint8_t> data) {
  static const bool ready = sodium_init() >= 0;
  if (!ready) throw Error(ErrorCode::kIo, "libsodium failed to initialize");
  ModelHash h{};
  crypto_generichash(h.data(), h.size(), data.data(), data.size(), nullptr, 0);
  return h;
}

nlohmann::json config_json(const ModelConfig& c) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : c.enc_layers) layers.push_back({{"channels", l.channels}, {"stride", l.stride}});
  return {{"latent_channels", c.latent_channels},
          {"enc_layers", layers},
          {"padded_edge", c.padded_edge},
          {"cond_channels", c.cond_channels},
          {"hyper_channels", c.hyper_channels},
          {"hyper_latent", c.hyper_latent},
          {"activation", to_string(c.activation)},
          {"leaky_slope", c.leaky_slope},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.latent_channels = j.at("latent_channels").get<int>();
  c.enc_layers.clear();
  for (const auto& l : j.at("enc_layers")) {
    c.enc_layers.push_back({l.at("channels").get<int>(), l.at("stride").get<int>()});
  }
  c.padded_edge = j.at("padded_edge").get<int>();
  c.cond_channels = j.at("cond_channels").get<int>();
  c.hyper_channels = j.at("hyper_channels").get<int>();
  c.hyper_latent = j.at("hyper_latent").get<int>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::vector<std::uint8_t> body(const Model& m) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : m.parameters()) {
    tensors.push_back({{"name", p.name},
                       {"group", p.group == Parameter::Group::kMain ? "main" : "entropy"},
                       {"shape", p.var.value().shape}});
  }
  const nlohmann::json header = {
      {"config", config_json(m.config())},
      {"normalization", {{"scheme", "minmax"}, {"vmin", m.normalization.vmin}, {"vmax", m.normalization.vmax}}},
      {"block_spec", {{"content", m.block_spec.content}, {"pad", m.block_spec.pad}}},
      {"tensors", tensors}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  bin::put<std::uint32_t>(out, kVersion);
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : m.parameters()) {
    for (double v : p.var.value().data) bin::put<double>(out, v);
  }
  return out;
}

}  // namespace

std::string to_hex(const ModelHash& h) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  for (auto b : h) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 15]);
  }
  return s;
}

std::vector<std::uint8_t> serialize_model(const Model& m) {
  auto out = body(m);
  const ModelHash h = blake2b_16(out);
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

ModelHash model_hash(const Model& m) { return blake2b_16(body(m)); }

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 + 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kFormat, "not a model checkpoint");
  }
  const auto content = bytes.first(bytes.size() - 16);
  const ModelHash want = blake2b_16(content);
  if (std::memcmp(want.data(), bytes.data() + content.size(), 16) != 0) {
    throw Error(ErrorCode::kHashMismatch, "checkpoint content hash does not match (corrupted file)");
  }
  bin::Reader r(content);
  r.bytes(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw Error(ErrorCode::kFormat, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = r.get<std::uint32_t>("header length");
  const auto text = r.bytes(header_len, "header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("checkpoint header: ") + e.what());
  }
  try {
    Model m(config_from_json(header.at("config")));
    m.normalization.vmin = header.at("normalization").at("vmin").get<double>();
    m.normalization.vmax = header.at("normalization").at("vmax").get<double>();
    m.block_spec.content = header.at("block_spec").at("content").get<int>();
    m.block_spec.pad = header.at("block_spec").at("pad").get<int>();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != m.parameters().size()) {
      throw Error(ErrorCode::kFormat, "checkpoint tensor count does not match its config");
    }
    for (const auto& t : tensors) {
      auto& p = m.parameter(t.at("name").get<std::string>());
      const auto shape = t.at("shape").get<nn::Shape>();
      if (shape != p.var.value().shape) {
        throw Error(ErrorCode::kFormat, "tensor " + p.name + " has shape " + nn::shape_string(shape) +
                                            ", config implies " + nn::shape_string(p.var.value().shape));
      }
      for (auto& v : p.var.mutable_value().data) v = r.get<double>("tensor data");
    }
    if (r.remaining() != 0) throw Error(ErrorCode::kFormat, "trailing bytes in checkpoint");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("checkpoint header: ") + e.what());
  }
}

void save_model(const Model& m, const std::filesystem::path& path) {
  bin::write_file(path.string(), serialize_model(m));
}

Model load_model(const std::filesystem::path& path) { return deserialize_model(bin::read_file(path.string())); }

}  // namespace idlat
