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

#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "idlat/binary_io.hpp"
#include "idlat/blocking.hpp"
#include "idlat/checkpoint.hpp"
#include "idlat/codec.hpp"
#include "idlat/error.hpp"
#include "idlat/explorer_service.hpp"
#include "idlat/image.hpp"
#include "idlat/importance.hpp"
#include "idlat/latent_analysis.hpp"
#include "idlat/metrics.hpp"
#include "idlat/parallel.hpp"
#include "idlat/training.hpp"
#include "idlat/volume.hpp"

namespace idlat::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

Dims parse_dims(const std::string& s) {
  std::vector<int> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInput, "bad dims '" + s + "', expected nx,ny,nz");
    }
  }
  if (v.size() != 3) throw Error(ErrorCode::kInput, "bad dims '" + s + "', expected nx,ny,nz");
  return {v[0], v[1], v[2]};
}

// A raw volume given either as a JSON config or as a raw file plus dims.
struct VolumeArgs {
  std::string path;
  std::string dims;
  std::string dtype = "f32le";
  std::optional<double> sentinel;

  void add(CLI::App* app, const std::string& flag, const std::string& what) {
    app->add_option(flag, path, what + " (raw file, or a JSON volume config)")->required();
    app->add_option("--dims", dims, "nx,ny,nz of raw volumes");
    app->add_option("--dtype", dtype, "raw sample type")->check(CLI::IsMember({"f32le", "f64le"}));
    app->add_option("--sentinel", sentinel, "value marking invalid voxels");
  }

  VolumeSource source(const std::string& file) const {
    VolumeSource src;
    if (fs::path(file).extension() == ".json") {
      src = read_volume_config(file);
    } else {
      if (dims.empty()) throw Error(ErrorCode::kInput, "--dims is required for raw volume " + file);
      src.path = file;
      src.dims = parse_dims(dims);
      src.dtype = parse_dtype(dtype);
    }
    if (sentinel) src.sentinel = sentinel;
    return src;
  }

  Volume load() const { return load_volume(source(path)); }
  Volume load_other(const std::string& file) const { return load_volume(source(file)); }
};

// One of several ways to obtain an importance map.
struct ImportanceArgs {
  std::string file;
  std::optional<double> isovalue;
  double slope = 0.2;
  std::optional<double> threshold;
  std::string box;
  std::optional<double> band;
  std::string synth;
  std::optional<double> constant;

  void add(CLI::App* app, bool with_synth) {
    std::vector<CLI::Option*> kinds;
    kinds.push_back(app->add_option("--importance", file, "importance map (raw f32le, volume dims)"));
    kinds.push_back(app->add_option("--isovalue", isovalue, "exp(-slope |d|) around this isosurface"));
    app->add_option("--slope", slope, "decay per voxel for --isovalue");
    kinds.push_back(app->add_option("--threshold", threshold, "1 where the value exceeds this, else 0"));
    kinds.push_back(app->add_option("--box", box, "1 inside x0,y0,z0,x1,y1,z1 (half-open), else 0"));
    kinds.push_back(app->add_option("--band", band, "1 within about one voxel of this isosurface"));
    kinds.push_back(app->add_option("--constant", constant, "the same importance everywhere"));
    if (with_synth) {
      std::vector<std::string> names;
      for (auto k : kAllSynthKinds) names.push_back(to_string(k));
      kinds.push_back(app->add_option("--synth", synth, "randomized training map")->check(CLI::IsMember(names)));
    }
    for (auto* a : kinds) {
      for (auto* b : kinds) {
        if (a != b) a->excludes(b);
      }
    }
  }

  bool given() const {
    return !file.empty() || isovalue || threshold || !box.empty() || band || !synth.empty() || constant;
  }

  std::string describe() const {
    std::ostringstream os;
    if (!file.empty()) os << "file:" << fs::path(file).filename().string();
    if (isovalue) os << "isovalue:" << *isovalue << ",slope:" << slope;
    if (threshold) os << "threshold:" << *threshold;
    if (!box.empty()) os << "box:" << box;
    if (band) os << "band:" << *band;
    if (!synth.empty()) os << "synth:" << synth;
    if (constant) os << "constant:" << *constant;
    return os.str();
  }

  ImportanceMap build(const Volume& v, std::uint64_t seed) const {
    if (!file.empty()) {
      ImportanceMap m = importance_from_volume(load_raw(file, v.dims, DType::kF32LE));
      apply_mask(m, v);
      return m;
    }
    if (isovalue) return importance_from_isosurface(v, *isovalue, slope);
    if (threshold) return importance_from_threshold(v, *threshold);
    if (!box.empty()) return importance_from_region(v, parse_box(box));
    if (band) return isosurface_band_map(v, *band);
    if (!synth.empty()) return synth_training_map(v.dims, parse_synth_kind(synth), seed, &v);
    if (constant) {
      if (!(*constant >= 0.0 && *constant <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "constant importance must lie in [0, 1]");
      }
      ImportanceMap m = ImportanceMap::constant(v.dims, *constant);
      apply_mask(m, v);
      return m;
    }
    throw Error(ErrorCode::kInput, "no importance source given");
  }
};

void write_text(const std::string& path, const std::string& text) {
  bin::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void emit(const json& j, std::ostream& out, const std::string& path = {}) {
  if (!path.empty()) write_text(path, j.dump(2) + "\n");
  out << j.dump(2) << "\n";
}

// Training setup read from a JSON file. Relative paths resolve against the
// file's directory.
struct TrainSetup {
  std::vector<VolumeSource> volumes;
  ModelConfig model;
  BlockSpec spec{8, 2};
  TrainConfig train;
  std::string sampling = "grid";  // grid | random | complexity
  int count = 0;
  std::pair<int, int> ratio{3, 1};
  int bins = 32;
  std::string out;
};

template <typename T>
void read_if(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

TrainSetup read_train_setup(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open training config: " + file.string());
  TrainSetup s;
  const fs::path base = file.parent_path();
  auto rel = [&](const std::string& p) { return fs::path(p).is_relative() ? (base / p).string() : p; };
  try {
    const json j = json::parse(in);
    for (const auto& v : j.at("volumes")) {
      if (v.is_string()) {
        s.volumes.push_back(read_volume_config(rel(v.get<std::string>())));
        continue;
      }
      VolumeSource src;
      src.path = rel(v.at("path").get<std::string>());
      const auto d = v.at("dims").get<std::vector<int>>();
      if (d.size() != 3) throw Error(ErrorCode::kInput, "volume dims must have three entries");
      src.dims = {d[0], d[1], d[2]};
      if (v.contains("dtype")) src.dtype = parse_dtype(v["dtype"].get<std::string>());
      if (v.contains("sentinel")) src.sentinel = v["sentinel"].get<double>();
      s.volumes.push_back(src);
    }
    if (s.volumes.empty()) throw Error(ErrorCode::kInput, "training config lists no volumes");
    if (j.contains("model")) {
      const auto& m = j["model"];
      read_if(m, "latent_channels", s.model.latent_channels);
      if (m.contains("enc_layers")) {
        s.model.enc_layers.clear();
        for (const auto& l : m["enc_layers"]) {
          s.model.enc_layers.push_back({l.at("channels").get<int>(), l.at("stride").get<int>()});
        }
      }
      read_if(m, "cond_channels", s.model.cond_channels);
      read_if(m, "hyper_channels", s.model.hyper_channels);
      read_if(m, "hyper_latent", s.model.hyper_latent);
      if (m.contains("activation")) s.model.activation = parse_activation(m["activation"].get<std::string>());
      read_if(m, "leaky_slope", s.model.leaky_slope);
    }
    if (j.contains("block")) {
      read_if(j["block"], "content", s.spec.content);
      read_if(j["block"], "pad", s.spec.pad);
    }
    if (j.contains("training")) {
      const auto& t = j["training"];
      read_if(t, "lambda", s.train.lambda);
      read_if(t, "a", s.train.a);
      read_if(t, "lr_main", s.train.lr_main);
      read_if(t, "lr_entropy", s.train.lr_entropy);
      read_if(t, "epochs", s.train.epochs);
      read_if(t, "batch_size", s.train.batch_size);
      read_if(t, "clip_norm", s.train.clip_norm);
      if (t.contains("log_csv")) s.train.log_csv = rel(t["log_csv"].get<std::string>());
      if (t.contains("checkpoint")) s.train.checkpoint = rel(t["checkpoint"].get<std::string>());
    }
    if (j.contains("sampling")) {
      const auto& sm = j["sampling"];
      read_if(sm, "mode", s.sampling);
      read_if(sm, "count", s.count);
      if (sm.contains("ratio")) {
        const auto r = sm["ratio"].get<std::vector<int>>();
        if (r.size() != 2) throw Error(ErrorCode::kInput, "sampling ratio must be [high, low]");
        s.ratio = {r[0], r[1]};
      }
      read_if(sm, "bins", s.bins);
    }
    if (j.contains("out")) s.out = rel(j["out"].get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInput, "invalid training config: " + std::string(e.what()));
  }
  s.model.padded_edge = s.spec.padded_edge();
  if (s.sampling != "grid" && s.sampling != "random" && s.sampling != "complexity") {
    throw Error(ErrorCode::kInput, "sampling mode must be grid, random or complexity");
  }
  return s;
}

// Global min-max over the valid voxels of every volume.
NormalizationParams joint_normalization(const std::vector<Volume>& volumes) {
  NormalizationParams p;
  p.vmin = std::numeric_limits<double>::infinity();
  p.vmax = -p.vmin;
  for (const auto& v : volumes) {
    if (v.valid_count() == 0) continue;
    p.vmin = std::min(p.vmin, v.value_range.vmin);
    p.vmax = std::max(p.vmax, v.value_range.vmax);
  }
  if (!(p.vmin < p.vmax)) throw Error(ErrorCode::kDegenerateRange, "training volumes have an empty value range");
  return p;
}

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string log_level = "info";
};

struct TrainArgs {
  std::string config, out, csv, checkpoint;
  std::optional<int> epochs;
};

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  TrainSetup s = read_train_setup(a.config);
  if (!a.out.empty()) s.out = a.out;
  if (s.out.empty()) throw Error(ErrorCode::kInput, "no output path: give --out or an \"out\" entry in the config");
  if (a.epochs) s.train.epochs = *a.epochs;
  if (!a.csv.empty()) s.train.log_csv = a.csv;
  if (!a.checkpoint.empty()) s.train.checkpoint = a.checkpoint;
  s.train.seed = g.seed;
  s.model.seed = g.seed;
  s.train.validate();
  s.spec.validate();

  std::vector<Volume> volumes;
  for (const auto& src : s.volumes) volumes.push_back(load_volume(src));
  const NormalizationParams norm = joint_normalization(volumes);

  std::vector<DataBlock> blocks;
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    const Volume nv = normalize_with(volumes[i], norm);
    const auto imp = ImportanceMap::constant(nv.dims, 1.0);
    std::vector<DataBlock> part;
    if (s.sampling == "random") {
      part = random_blocks(nv, imp, s.spec, s.count > 0 ? s.count : 256, g.seed + i);
    } else {
      part = partition(nv, imp, s.spec);
      if (s.sampling == "complexity") {
        const int n = s.count > 0 ? std::min<int>(s.count, static_cast<int>(part.size())) : static_cast<int>(part.size());
        part = sample_training_blocks(part, n, s.ratio, s.bins, g.seed + i, s.spec).blocks;
      }
    }
    blocks.insert(blocks.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  spdlog::info("training on {} blocks from {} volume(s)", blocks.size(), volumes.size());

  Model model(s.model);
  model.normalization = norm;
  model.block_spec = s.spec;
  const TrainResult r = train(blocks, s.train, model);
  save_model(model, s.out);

  json epochs = json::array();
  for (const auto& e : r.log) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss", e.loss},
                      {"rate", e.rate},
                      {"distortion", e.distortion},
                      {"loss_median", e.loss_median}});
  }
  emit({{"model", s.out}, {"model_hash", to_hex(model_hash(model))}, {"blocks", blocks.size()}, {"epochs", epochs}}, out);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Importance-driven latent compression and analysis of volume data", "idlat"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();

  // importance
  auto* imp_cmd = app.add_subcommand("importance", "Write an importance map for a volume");
  VolumeArgs imp_vol;
  ImportanceArgs imp_kind;
  std::string imp_out;
  imp_vol.add(imp_cmd, "--volume", "input volume");
  imp_kind.add(imp_cmd, true);
  imp_cmd->add_option("--out", imp_out, "output map (raw f32le)")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON configuration");
  TrainArgs train_args;
  train_cmd->add_option("--config", train_args.config, "training configuration (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_args.out, "output checkpoint");
  train_cmd->add_option("--epochs", train_args.epochs, "override the number of epochs");
  train_cmd->add_option("--csv", train_args.csv, "per-epoch loss log");
  train_cmd->add_option("--checkpoint", train_args.checkpoint, "checkpoint rewritten after each epoch");

  // compress
  auto* comp_cmd = app.add_subcommand("compress", "Compress a volume under an importance map");
  VolumeArgs comp_vol;
  ImportanceArgs comp_kind;
  std::string comp_model, comp_out;
  bool comp_latents = false;
  comp_vol.add(comp_cmd, "--volume", "input volume");
  comp_kind.add(comp_cmd, false);
  comp_cmd->add_option("--model", comp_model, "model checkpoint")->required();
  comp_cmd->add_option("--out", comp_out, "output bitstream")->required();
  comp_cmd->add_flag("--latents", comp_latents, "also write the latent table to <out>.latents");

  // decompress
  auto* dec_cmd = app.add_subcommand("decompress", "Reconstruct a volume from a bitstream");
  std::string dec_in, dec_model, dec_out, dec_dtype = "f32le";
  dec_cmd->add_option("--in", dec_in, "bitstream")->required();
  dec_cmd->add_option("--model", dec_model, "model checkpoint")->required();
  dec_cmd->add_option("--out", dec_out, "output raw volume")->required();
  dec_cmd->add_option("--dtype", dec_dtype, "output sample type")->check(CLI::IsMember({"f32le", "f64le"}));

  // metrics
  auto* met_cmd = app.add_subcommand("metrics", "Compare a reconstruction with its original");
  VolumeArgs met_vol;
  ImportanceArgs met_kind;
  std::string met_recon, met_recon_dtype, met_idlt, met_out;
  met_vol.add(met_cmd, "--orig", "original volume");
  met_cmd->add_option("--recon", met_recon, "reconstruction (raw, dims of --orig)")->required();
  met_cmd->add_option("--recon-dtype", met_recon_dtype, "sample type of --recon (default: that of --orig)")
      ->check(CLI::IsMember({"f32le", "f64le"}));
  met_kind.add(met_cmd, false);
  met_cmd->add_option("--idlt", met_idlt, "bitstream, for the size ratio");
  met_cmd->add_option("--out", met_out, "also write the report here");

  // analyze
  auto* an_cmd = app.add_subcommand("analyze", "Cluster and project block latents");
  std::string an_in, an_model, an_latents, an_out, an_grad;
  int an_k = 2;
  std::optional<double> an_perplexity;
  VolumeArgs an_vol;
  an_cmd->add_option("--in", an_in, "bitstream");
  an_cmd->add_option("--model", an_model, "model checkpoint (with --in)");
  an_cmd->add_option("--latents", an_latents, "latent table instead of --in/--model");
  an_cmd->add_option("--k", an_k, "clusters for the root split")->capture_default_str();
  an_cmd->add_option("--perplexity", an_perplexity, "also compute a 2D projection");
  an_cmd->add_option("--out", an_out, "also write the analysis here");
  an_cmd->add_option("--volume", an_vol.path, "original volume, for --gradient-report");
  an_cmd->add_option("--dims", an_vol.dims, "nx,ny,nz of a raw --volume");
  an_cmd->add_option("--dtype", an_vol.dtype, "raw sample type")->check(CLI::IsMember({"f32le", "f64le"}));
  an_cmd->add_option("--gradient-report", an_grad, "write per-cluster x-gradient distributions (JSON)");

  // isosim
  auto* iso_cmd = app.add_subcommand("isosim", "Isosurface similarity map and representative isovalues");
  VolumeArgs iso_vol;
  std::string iso_model, iso_range, iso_out, iso_png;
  std::optional<int> iso_select;
  int iso_cell = 8;
  iso_vol.add(iso_cmd, "--volume", "input volume");
  iso_cmd->add_option("--model", iso_model, "model checkpoint")->required();
  iso_cmd->add_option("--isovalues", iso_range, "start:stop:step")->required();
  iso_cmd->add_option("--select", iso_select, "number of representative isovalues");
  iso_cmd->add_option("--out", iso_out, "similarity matrix (CSV)")->required();
  iso_cmd->add_option("--heatmap", iso_png, "similarity heatmap (PNG)");
  iso_cmd->add_option("--cell", iso_cell, "heatmap pixels per entry")->capture_default_str();

  // serve
  auto* srv_cmd = app.add_subcommand("serve", "Run the explorer HTTP service");
  std::string srv_host = "127.0.0.1", srv_model, srv_data;
  int srv_port = 8080;
  srv_cmd->add_option("--port", srv_port, "TCP port (0 picks a free one)")->capture_default_str();
  srv_cmd->add_option("--host", srv_host, "bind address")->capture_default_str();
  srv_cmd->add_option("--model", srv_model, "default checkpoint for new sessions");
  srv_cmd->add_option("--data-dir", srv_data, "file root (default: $IDLAT_DATA_DIR)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    auto logger = spdlog::get("idlat");
    if (!logger) logger = spdlog::stderr_color_mt("idlat");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(g.log_level));
    set_thread_count(g.threads);

    if (imp_cmd->parsed()) {
      if (!imp_kind.given()) throw Error(ErrorCode::kInput, "choose one importance kind");
      const Volume v = imp_vol.load();
      save_raw(importance_as_volume(imp_kind.build(v, g.seed)), imp_out, DType::kF32LE);
      emit({{"out", imp_out}, {"kind", imp_kind.describe()}, {"dims", {v.dims.nx, v.dims.ny, v.dims.nz}}}, out);
    } else if (train_cmd->parsed()) {
      return cmd_train(g, train_args, out);
    } else if (comp_cmd->parsed()) {
      if (!comp_kind.given()) throw Error(ErrorCode::kInput, "choose one importance source");
      const VolumeSource src = comp_vol.source(comp_vol.path);
      const Volume v = load_volume(src);
      const Model model = load_model(comp_model);
      CompressStats stats;
      const CompressedVolume cv = compress_volume(v, comp_kind.build(v, g.seed), model, &stats);
      write_compressed(cv, comp_out);
      const std::uint64_t original = v.dims.count() * dtype_size(src.dtype);
      const std::uint64_t bytes = file_size(cv);
      json j = {{"out", comp_out},
                {"blocks", cv.blocks.size()},
                {"original_bytes", original},
                {"file_bytes", bytes},
                {"lsr", latent_size_ratio(original, bytes)},
                {"model_bits", stats.model_bits},
                {"clamped", stats.clamped}};
      if (comp_latents) {
        const auto table = make_latent_table(decompress_latents(cv, model), cv.header.model_hash, comp_kind.describe());
        save_latent_table(table, comp_out + ".latents");
        j["latents"] = comp_out + ".latents";
      }
      if (stats.clamped > 0) spdlog::warn("{} latent values clamped into the symbol alphabet", stats.clamped);
      emit(j, out);
    } else if (dec_cmd->parsed()) {
      const CompressedVolume cv = read_compressed(dec_in);
      const Volume v = decompress_volume(cv, load_model(dec_model));
      save_raw(v, dec_out, parse_dtype(dec_dtype));
      emit({{"out", dec_out}, {"dims", {v.dims.nx, v.dims.ny, v.dims.nz}}, {"dtype", dec_dtype}}, out);
    } else if (met_cmd->parsed()) {
      if (!met_kind.given()) throw Error(ErrorCode::kInput, "choose one importance source");
      const VolumeSource src = met_vol.source(met_vol.path);
      const Volume orig = load_volume(src);
      VolumeSource rsrc = src;
      rsrc.path = met_recon;
      rsrc.sentinel.reset();
      if (!met_recon_dtype.empty()) rsrc.dtype = parse_dtype(met_recon_dtype);
      const Volume recon = load_volume(rsrc);
      std::optional<std::uint64_t> ob, fb;
      if (!met_idlt.empty()) {
        ob = orig.dims.count() * dtype_size(src.dtype);
        fb = fs::file_size(met_idlt);
      }
      emit(to_json(report(orig, recon, met_kind.build(orig, g.seed), ob, fb)), out, met_out);
    } else if (an_cmd->parsed()) {
      LatentTable table;
      std::optional<CompressedHeader> header;
      if (!an_latents.empty()) {
        if (!an_in.empty()) throw Error(ErrorCode::kInput, "give either --latents or --in, not both");
        table = load_latent_table(an_latents);
      } else {
        if (an_in.empty() || an_model.empty()) throw Error(ErrorCode::kInput, "give --latents, or --in with --model");
        const CompressedVolume cv = read_compressed(an_in);
        const Model model = load_model(an_model);
        table = make_latent_table(decompress_latents(cv, model), cv.header.model_hash,
                                  "bitstream:" + fs::path(an_in).filename().string());
        header = cv.header;
      }
      const ClusterTree tree = ClusterTree(table.size()).split(table, 0, an_k, g.seed);
      const auto leaf = tree.leaf_of_rows();
      json blocks = json::array(), labels = json::array();
      for (std::size_t r = 0; r < table.size(); ++r) {
        blocks.push_back({table.blocks[r].bi, table.blocks[r].bj, table.blocks[r].bk});
        labels.push_back(leaf[r] - 1);
      }
      json j = {{"model_hash", table.model_hash},
                {"importance", table.importance},
                {"k", an_k},
                {"seed", g.seed},
                {"blocks", blocks},
                {"labels", labels},
                {"tree", tree.to_json()},
                {"projection", nullptr}};
      if (an_perplexity) {
        const Embedding2D e = project_2d(table, *an_perplexity, g.seed);
        json pts = json::array();
        for (const auto& p : e.points) pts.push_back({p[0], p[1]});
        j["projection"] = {{"perplexity", *an_perplexity}, {"points", pts}};
      }
      if (!an_grad.empty()) {
        if (!header || an_vol.path.empty()) {
          throw Error(ErrorCode::kInput, "--gradient-report needs --in, --model and --volume");
        }
        const Volume v = an_vol.load();
        if (!(v.dims == header->dims)) {
          throw Error(ErrorCode::kShapeMismatch, "volume dims " + to_string(v.dims) + " differ from bitstream dims " +
                                                     to_string(header->dims));
        }
        write_text(an_grad, to_json(gradient_report(v, table, header->spec, tree)).dump(2) + "\n");
        j["gradient_report"] = an_grad;
      }
      emit(j, out, an_out);
    } else if (iso_cmd->parsed()) {
      const Volume v = iso_vol.load();
      const Model model = load_model(iso_model);
      const auto isovalues = parse_isovalue_range(iso_range);
      const SimilarityMap map = similarity_map(v, isovalues, model);
      write_text(iso_out, to_csv(map));
      json j = {{"isovalues", map.isovalues}, {"csv", iso_out}, {"selected", nullptr}};
      if (iso_select) j["selected"] = select_representatives(map, *iso_select);
      if (!iso_png.empty()) {
        write_png(heatmap(map, iso_cell), iso_png);
        j["heatmap"] = iso_png;
      }
      emit(j, out);
    } else if (srv_cmd->parsed()) {
      ServiceOptions opts;
      if (!srv_data.empty()) {
        opts.data_dir = srv_data;
      } else if (const char* env = std::getenv("IDLAT_DATA_DIR")) {
        opts.data_dir = env;
      }
      if (!srv_model.empty()) opts.default_model = srv_model;
      ExplorerService service(opts);
      const int port = service.bind(srv_host, srv_port);
      spdlog::info("explorer service listening on http://{}:{}", srv_host, port);
      out << json{{"host", srv_host}, {"port", port}}.dump() << std::endl;
      service.serve();
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kExitDomain;
  }
}

}  // namespace idlat::cli
