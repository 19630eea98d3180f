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

#include "idlat/codec.hpp"

#include <cmath>
#include <cstring>

#include "idlat/binary_io.hpp"
#include "idlat/error.hpp"
#include "idlat/parallel.hpp"

namespace idlat {
namespace {

constexpr char kMagic[4] = {'I', 'D', 'L', 'T'};
constexpr std::uint8_t kVersion = 1;

std::vector<rans::FrequencyTable> tables_from(const std::vector<std::vector<double>>& pmfs) {
  std::vector<rans::FrequencyTable> out;
  out.reserve(pmfs.size());
  for (const auto& p : pmfs) out.push_back(rans::FrequencyTable::from_pmf(p));
  return out;
}

std::vector<const rans::FrequencyTable*> pointers(const std::vector<rans::FrequencyTable>& t) {
  std::vector<const rans::FrequencyTable*> out;
  out.reserve(t.size());
  for (const auto& x : t) out.push_back(&x);
  return out;
}

// Symbol distributions shared by encoder and decoder.
struct BlockTables {
  std::vector<rans::FrequencyTable> owned;
  std::vector<const rans::FrequencyTable*> refs;
  std::vector<std::vector<double>> pmfs;  // kept for rate accounting
};

std::vector<std::vector<double>> z_pmfs(const Model& model) {
  std::vector<std::vector<double>> out;
  for (int c = 0; c < model.config().hyper_latent; ++c) out.push_back(model.z_pmf(c));
  return out;
}

BlockTables y_tables(const Model& model, const std::vector<std::int32_t>& z_symbols) {
  const auto [mean, scale] = model.y_distribution(z_symbols);
  BlockTables t;
  t.pmfs.reserve(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) t.pmfs.push_back(gaussian_symbol_pmf(mean.data[i], scale.data[i]));
  t.owned = tables_from(t.pmfs);
  t.refs = pointers(t.owned);
  return t;
}

std::vector<int> to_indices(const std::vector<std::int32_t>& symbols) {
  std::vector<int> out(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) out[i] = symbols[i] - kSymbolMin;
  return out;
}

std::vector<std::int32_t> from_indices(const std::vector<int>& idx) {
  std::vector<std::int32_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = idx[i] + kSymbolMin;
  return out;
}

NormalizationParams header_normalization(const CompressedHeader& h) {
  return {static_cast<double>(h.vmin), static_cast<double>(h.vmax), NormalizationScheme::kMinMax};
}

void check_model(const CompressedHeader& h, const Model& model) {
  if (h.model_hash != model_hash(model)) {
    throw Error(ErrorCode::kHashMismatch, "bitstream was written with model " + to_hex(h.model_hash) +
                                              ", got " + to_hex(model_hash(model)));
  }
  if (!(h.spec == model.block_spec) || h.latent_channels != model.config().latent_channels ||
      h.latent_spatial != model.config().latent_spatial()) {
    throw Error(ErrorCode::kFormat, "bitstream geometry does not match the model");
  }
  if (h.block_count != h.spec.grid_dims(h.dims).count()) {
    throw Error(ErrorCode::kFormat, "block count " + std::to_string(h.block_count) + " does not match the grid");
  }
}

}  // namespace

std::vector<std::uint8_t> entropy_encode(std::span<const int> symbols, const std::vector<std::vector<double>>& pmfs) {
  const auto tables = tables_from(pmfs);
  return rans::encode(symbols, pointers(tables));
}

std::vector<int> entropy_decode(std::span<const std::uint8_t> bytes, const std::vector<std::vector<double>>& pmfs) {
  const auto tables = tables_from(pmfs);
  return rans::decode(bytes, pointers(tables));
}

std::vector<std::uint8_t> serialize(const CompressedVolume& cv) {
  const auto& h = cv.header;
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  bin::put<std::uint8_t>(out, kVersion);
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(h.dims.nx));
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(h.dims.ny));
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(h.dims.nz));
  bin::put<std::uint16_t>(out, static_cast<std::uint16_t>(h.spec.content));
  bin::put<std::uint16_t>(out, static_cast<std::uint16_t>(h.spec.pad));
  bin::put<std::uint16_t>(out, static_cast<std::uint16_t>(h.latent_channels));
  bin::put<std::uint16_t>(out, static_cast<std::uint16_t>(h.latent_spatial));
  bin::put<float>(out, h.vmin);
  bin::put<float>(out, h.vmax);
  bin::put_bytes(out, h.model_hash);
  bin::put<std::uint32_t>(out, h.block_count);
  for (const auto& b : cv.blocks) {
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(b.z.size()));
    bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(b.y.size()));
    bin::put_bytes(out, b.z);
    bin::put_bytes(out, b.y);
  }
  return out;
}

CompressedVolume parse_compressed(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kFormat, "not an IDLT bitstream");
  }
  bin::Reader r(bytes);
  r.bytes(4, "magic");
  CompressedVolume cv;
  auto& h = cv.header;
  const auto version = r.get<std::uint8_t>("version");
  if (version != kVersion) throw Error(ErrorCode::kFormat, "unsupported IDLT version " + std::to_string(version));
  h.dims.nx = static_cast<int>(r.get<std::uint32_t>("dims"));
  h.dims.ny = static_cast<int>(r.get<std::uint32_t>("dims"));
  h.dims.nz = static_cast<int>(r.get<std::uint32_t>("dims"));
  h.spec.content = r.get<std::uint16_t>("block content");
  h.spec.pad = r.get<std::uint16_t>("block pad");
  h.latent_channels = r.get<std::uint16_t>("latent channels");
  h.latent_spatial = r.get<std::uint16_t>("latent spatial size");
  h.vmin = r.get<float>("vmin");
  h.vmax = r.get<float>("vmax");
  const auto hash = r.bytes(16, "model hash");
  std::copy(hash.begin(), hash.end(), h.model_hash.begin());
  h.block_count = r.get<std::uint32_t>("block count");
  if (!h.dims.positive()) throw Error(ErrorCode::kFormat, "bitstream dims must be positive");
  cv.blocks.reserve(std::min<std::size_t>(h.block_count, r.remaining() / 8));
  for (std::uint32_t b = 0; b < h.block_count; ++b) {
    try {
      BlockPayload p;
      const auto zl = r.get<std::uint32_t>("z length");
      const auto yl = r.get<std::uint32_t>("y length");
      const auto z = r.bytes(zl, "z payload");
      const auto y = r.bytes(yl, "y payload");
      p.z.assign(z.begin(), z.end());
      p.y.assign(y.begin(), y.end());
      cv.blocks.push_back(std::move(p));
    } catch (const Error& e) {
      throw Error(e.code(), "block " + std::to_string(b) + ": " + e.what());
    }
  }
  if (r.remaining() != 0) throw Error(ErrorCode::kFormat, "trailing bytes after the last block");
  return cv;
}

void write_compressed(const CompressedVolume& cv, const std::filesystem::path& path) {
  bin::write_file(path.string(), serialize(cv));
}

CompressedVolume read_compressed(const std::filesystem::path& path) {
  return parse_compressed(bin::read_file(path.string()));
}

std::size_t file_size(const CompressedVolume& cv) {
  std::size_t n = kHeaderBytes;
  for (const auto& b : cv.blocks) n += 8 + b.z.size() + b.y.size();
  return n;
}

CompressedVolume compress_volume(const Volume& v, const ImportanceMap& importance, const Model& model,
                                 CompressStats* stats) {
  if (!(importance.dims == v.dims)) {
    throw Error(ErrorCode::kShapeMismatch, "importance dims " + to_string(importance.dims) +
                                               " differ from volume " + to_string(v.dims));
  }
  const auto& spec = model.block_spec;
  if (spec.padded_edge() != model.config().padded_edge) {
    throw Error(ErrorCode::kInvalidArgument, "model block spec does not match its padded edge");
  }
  CompressedVolume cv;
  auto& h = cv.header;
  h.dims = v.dims;
  h.spec = spec;
  h.latent_channels = model.config().latent_channels;
  h.latent_spatial = model.config().latent_spatial();
  h.vmin = static_cast<float>(model.normalization.vmin);
  h.vmax = static_cast<float>(model.normalization.vmax);
  if (!(h.vmin < h.vmax)) throw Error(ErrorCode::kDegenerateRange, "model normalization range is empty");
  h.model_hash = model_hash(model);

  const Volume normalized = normalize_with(v, header_normalization(h));
  const auto blocks = partition(normalized, importance, spec);
  h.block_count = static_cast<std::uint32_t>(blocks.size());

  const auto zp = z_pmfs(model);
  const auto z_owned = tables_from(zp);
  const auto z_refs = pointers(z_owned);

  // Blocks are coded independently; statistics are summed in grid order.
  cv.blocks.resize(blocks.size());
  std::vector<CompressStats> per_block(blocks.size());
  parallel_for(blocks.size(), [&](std::size_t b) {
    QuantizeStats q;
    const LatentBlock lb = model.compress_block(blocks[b], &q);
    auto& st = per_block[b];
    st.clamped = q.clamped;
    const auto z_idx = to_indices(lb.z_symbols);
    const auto y_idx = to_indices(lb.y_symbols);
    const BlockTables yt = y_tables(model, lb.z_symbols);
    BlockPayload& p = cv.blocks[b];
    p.z = rans::encode(z_idx, z_refs);
    p.y = rans::encode(y_idx, yt.refs);
    for (std::size_t i = 0; i < z_idx.size(); ++i) st.model_bits -= std::log2(zp[i][z_idx[i]]);
    for (std::size_t i = 0; i < y_idx.size(); ++i) st.model_bits -= std::log2(yt.pmfs[i][y_idx[i]]);
    st.payload_bytes = p.z.size() + p.y.size();
  });
  CompressStats local;
  for (const auto& st : per_block) {
    local.clamped += st.clamped;
    local.model_bits += st.model_bits;
    local.payload_bytes += st.payload_bytes;
  }
  if (stats) *stats = local;
  return cv;
}

std::vector<LatentBlock> decompress_latents(const CompressedVolume& cv, const Model& model) {
  check_model(cv.header, model);
  if (cv.blocks.size() != cv.header.block_count) {
    throw Error(ErrorCode::kTruncated, "bitstream holds " + std::to_string(cv.blocks.size()) + " of " +
                                           std::to_string(cv.header.block_count) + " blocks");
  }
  const auto grid = cv.header.spec.grid_dims(cv.header.dims);
  const auto z_owned = tables_from(z_pmfs(model));
  const auto z_refs = pointers(z_owned);
  const std::size_t y_count = nn::shape_size(model.latent_shape());

  std::vector<LatentBlock> out(cv.blocks.size());
  parallel_for(cv.blocks.size(), [&](std::size_t b) {
    try {
      LatentBlock& lb = out[b];
      const Voxel g = voxel_of(grid, b);
      lb.index = {g.i, g.j, g.k};
      lb.z_symbols = from_indices(rans::decode(cv.blocks[b].z, z_refs));
      const BlockTables yt = y_tables(model, lb.z_symbols);
      if (yt.refs.size() != y_count) throw Error(ErrorCode::kFormat, "latent size mismatch");
      lb.y_symbols = from_indices(rans::decode(cv.blocks[b].y, yt.refs));
    } catch (const Error& e) {
      throw Error(e.code(), "block " + std::to_string(b) + ": " + e.what());
    }
  });
  return out;
}

std::vector<DataBlock> decode_blocks(const CompressedVolume& cv, const std::vector<LatentBlock>& latents,
                                     const Model& model) {
  const auto& h = cv.header;
  const int edge = h.spec.padded_edge();
  std::vector<DataBlock> out(latents.size());
  parallel_for(latents.size(), [&](std::size_t n) {
    const auto& lb = latents[n];
    DataBlock& b = out[n];
    b.index = lb.index;
    b.edge = edge;
    b.values = model.decode_symbols(lb.y_symbols).data;
    const int origin[3] = {lb.index.bi, lb.index.bj, lb.index.bk};
    for (int a = 0; a < 3; ++a) b.valid_extent[a] = std::min(h.spec.content, h.dims[a] - origin[a] * h.spec.content);
  });
  return out;
}

Volume decompress_volume(const CompressedVolume& cv, const Model& model) {
  const auto latents = decompress_latents(cv, model);
  const auto blocks = decode_blocks(cv, latents, model);
  Volume v = reassemble(blocks, cv.header.spec, cv.header.dims);
  v = denormalize(v, header_normalization(cv.header));
  v.name = "reconstruction";
  return v;
}

double latent_size_ratio(std::uint64_t original_bytes, std::uint64_t file_bytes) {
  if (file_bytes == 0) throw Error(ErrorCode::kInvalidArgument, "compressed size must be positive");
  if (original_bytes == 0) throw Error(ErrorCode::kInvalidArgument, "original size must be positive");
  return static_cast<double>(original_bytes) / static_cast<double>(file_bytes);
}

}  // namespace idlat
