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

#include "idlat/explorer_service.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <shared_mutex>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "idlat/codec.hpp"
#include "idlat/latent_analysis.hpp"
#include "idlat/render.hpp"
#include "openapi_document.hpp"

namespace idlat {
namespace fs = std::filesystem;
using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kHashMismatch: return 409;
    case ErrorCode::kIo:
    case ErrorCode::kDivergence: return 500;
    default: return 400;
  }
}

const json& openapi_document() {
  static const json doc = json::parse(kOpenApiDocument);
  return doc;
}

namespace {

constexpr int kEntropyBins = 32;

struct BlockSummary {
  std::optional<double> mean;
  double entropy = 0.0;
};

struct Session {
  std::string id;
  std::string idlt_file;
  Volume volume;
  CompressedHeader header;
  LatentTable table;
  Volume recon;
  std::vector<BlockSummary> summaries;  // per table row

  std::shared_mutex mu;  // guards tree and version
  ClusterTree tree;
  std::uint64_t version = 0;

  std::mutex cache_mu;
  std::map<std::pair<double, std::uint64_t>, Embedding2D> projections;
};

json dims_json(const Dims& d) { return json::array({d.nx, d.ny, d.nz}); }
json index_json(const BlockIndex& b) { return json::array({b.bi, b.bj, b.bk}); }

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, {{"error", {{"code", code}, {"message", message}}}}, status);
}

template <typename T>
T body_field(const json& body, const char* name) {
  if (!body.contains(name)) throw Error(ErrorCode::kInput, std::string("missing field '") + name + "'");
  try {
    return body.at(name).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kInput, std::string("field '") + name + "' has the wrong type");
  }
}

json parse_body(const httplib::Request& req) {
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::kInput, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kInput, std::string("invalid JSON body: ") + e.what());
  }
}

double query_double(const httplib::Request& req, const char* name, double fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string s = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, std::string("query parameter '") + name + "' must be a number");
  }
}

long long query_int(const httplib::Request& req, const char* name, long long fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string s = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, std::string("query parameter '") + name + "' must be an integer");
  }
}

int path_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must be an integer");
}

std::vector<BlockSummary> summarize(const Volume& v, const CompressedHeader& h, const LatentTable& table) {
  NormalizationParams norm;
  norm.vmin = h.vmin;
  norm.vmax = h.vmax;
  const auto blocks = partition(normalize_with(v, norm), ImportanceMap::constant(v.dims, 1.0), h.spec);
  std::map<BlockIndex, const DataBlock*> by_index;
  for (const auto& b : blocks) by_index[b.index] = &b;
  const int c = h.spec.content;
  std::vector<BlockSummary> out(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    const BlockIndex& bi = table.blocks[r];
    auto it = by_index.find(bi);
    if (it == by_index.end()) throw Error(ErrorCode::kMissingBlock, "no block " + to_string(bi));
    out[r].entropy = block_entropy(*it->second, h.spec, kEntropyBins);
    double sum = 0.0;
    std::size_t n = 0;
    for (int k = bi.bk * c; k < std::min((bi.bk + 1) * c, v.dims.nz); ++k)
      for (int j = bi.bj * c; j < std::min((bi.bj + 1) * c, v.dims.ny); ++j)
        for (int i = bi.bi * c; i < std::min((bi.bi + 1) * c, v.dims.nx); ++i) {
          const std::size_t idx = linear_index(v.dims, i, j, k);
          if (!v.valid(idx)) continue;
          sum += v.values[idx];
          ++n;
        }
    if (n > 0) out[r].mean = sum / static_cast<double>(n);
  }
  return out;
}

}  // namespace

struct ExplorerService::Impl {
  ServiceOptions options;
  httplib::Server server;
  int port = -1;

  std::shared_mutex sessions_mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::uint64_t next_id = 1;

  explicit Impl(ServiceOptions o) : options(std::move(o)) { routes(); }

  fs::path resolve(const std::string& p) const {
    if (p.empty()) throw Error(ErrorCode::kInput, "empty path");
    const fs::path path(p);
    if (options.data_dir.empty()) return path;
    fs::path root = fs::weakly_canonical(options.data_dir);
    if (root.filename().empty()) root = root.parent_path();
    const fs::path full = fs::weakly_canonical(path.is_absolute() ? path : options.data_dir / path);
    const auto [r, f] = std::mismatch(root.begin(), root.end(), full.begin(), full.end());
    if (r != root.end()) throw Error(ErrorCode::kInvalidArgument, "path '" + p + "' lies outside the data directory");
    return full;
  }

  static void require_file(const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) throw Error(ErrorCode::kNotFound, std::string(what) + " not found: " + p.string());
  }

  std::shared_ptr<Session> find(const std::string& id) {
    std::shared_lock lock(sessions_mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw Error(ErrorCode::kNotFound, "no session '" + id + "'");
    return it->second;
  }

  static json session_json(Session& s) {
    std::shared_lock lock(s.mu);
    const auto grid = s.header.spec.grid_dims(s.header.dims);
    return {{"id", s.id},
            {"volume",
             {{"name", s.volume.name},
              {"dims", dims_json(s.volume.dims)},
              {"value_range", json::array({s.volume.value_range.vmin, s.volume.value_range.vmax})}}},
            {"idlt_file", s.idlt_file},
            {"model_hash", s.table.model_hash},
            {"blocks", s.table.size()},
            {"row_length", s.table.row_length},
            {"grid", dims_json(grid)},
            {"version", s.version}};
  }

  static json tree_json(Session& s) {
    std::shared_lock lock(s.mu);
    return {{"session", s.id}, {"version", s.version}, {"tree", s.tree.to_json()}};
  }

  std::shared_ptr<Session> create(const json& body) {
    auto s = std::make_shared<Session>();
    VolumeSource src;
    const json& vol = body.contains("volume") ? body.at("volume") : json();
    if (vol.is_string()) {
      const fs::path cfg = resolve(vol.get<std::string>());
      require_file(cfg, "volume config");
      src = read_volume_config(cfg);
    } else if (vol.is_object()) {
      src.path = body_field<std::string>(vol, "path");
      const auto d = body_field<std::vector<int>>(vol, "dims");
      if (d.size() != 3) throw Error(ErrorCode::kInput, "volume dims must have three entries");
      src.dims = {d[0], d[1], d[2]};
      if (vol.contains("dtype")) src.dtype = parse_dtype(body_field<std::string>(vol, "dtype"));
      if (vol.contains("sentinel") && !vol["sentinel"].is_null()) src.sentinel = body_field<double>(vol, "sentinel");
    } else {
      throw Error(ErrorCode::kInput, "field 'volume' must be a config path or a volume object");
    }
    src.path = resolve(src.path.string());
    require_file(src.path, "volume");

    s->idlt_file = body_field<std::string>(body, "idlt_file");
    const fs::path idlt = resolve(s->idlt_file);
    require_file(idlt, "bitstream");

    fs::path model_path;
    if (body.contains("model")) {
      model_path = resolve(body_field<std::string>(body, "model"));
    } else if (options.default_model) {
      model_path = *options.default_model;
    } else {
      throw Error(ErrorCode::kInput, "no model given and the service has no default model");
    }
    require_file(model_path, "model");

    const Model model = load_model(model_path);
    const CompressedVolume cv = read_compressed(idlt);
    if (cv.header.model_hash != model_hash(model)) {
      throw Error(ErrorCode::kHashMismatch, "bitstream was written by model " + to_hex(cv.header.model_hash) +
                                                ", not " + to_hex(model_hash(model)));
    }
    s->volume = load_volume(src);
    s->volume.name = src.path.filename().string();
    if (!(s->volume.dims == cv.header.dims)) {
      throw Error(ErrorCode::kShapeMismatch, "volume dims " + to_string(s->volume.dims) +
                                                 " differ from bitstream dims " + to_string(cv.header.dims));
    }
    s->header = cv.header;
    const auto latents = decompress_latents(cv, model);
    s->table = make_latent_table(latents, cv.header.model_hash, "bitstream:" + idlt.filename().string());
    NormalizationParams norm;
    norm.vmin = cv.header.vmin;
    norm.vmax = cv.header.vmax;
    s->recon = denormalize(reassemble(decode_blocks(cv, latents, model), cv.header.spec, cv.header.dims), norm);
    s->summaries = summarize(s->volume, s->header, s->table);
    s->tree = ClusterTree(s->table.size());

    std::unique_lock lock(sessions_mu);
    s->id = "s" + std::to_string(next_id++);
    sessions[s->id] = s;
    return s;
  }

  Image render(Session& s, const httplib::Request& req) {
    const int node = static_cast<int>(query_int(req, "node", 0));
    const std::string mode = req.has_param("mode") ? req.get_param_value("mode") : "slice";
    if (mode != "slice" && mode != "iso") {
      throw Error(ErrorCode::kInvalidArgument, "mode must be 'slice' or 'iso', got '" + mode + "'");
    }
    const int axis = parse_axis(req.has_param("axis") ? req.get_param_value("axis") : "z");
    std::vector<int> members;
    {
      std::shared_lock lock(s.mu);
      members = s.tree.node(node).members;
    }
    // Voxels outside the node's blocks are zeroed and masked out.
    Volume v = s.recon;
    if (members.size() != s.table.size()) {
      std::vector<bool> keep(s.table.size(), false);
      for (int m : members) keep[static_cast<std::size_t>(m)] = true;
      if (v.mask.empty()) v.mask.assign(v.values.size(), 1);
      const int c = s.header.spec.content;
      for (std::size_t r = 0; r < keep.size(); ++r) {
        if (keep[r]) continue;
        const BlockIndex& b = s.table.blocks[r];
        for (int k = b.bk * c; k < std::min((b.bk + 1) * c, v.dims.nz); ++k)
          for (int j = b.bj * c; j < std::min((b.bj + 1) * c, v.dims.ny); ++j)
            for (int i = b.bi * c; i < std::min((b.bi + 1) * c, v.dims.nx); ++i) {
              const std::size_t idx = linear_index(v.dims, i, j, k);
              v.values[idx] = 0.0;
              v.mask[idx] = 0;
            }
      }
    }
    const ValueRange range = s.volume.value_range;
    if (mode == "slice") {
      const int index = static_cast<int>(query_int(req, "index", v.dims[axis] / 2));
      return render_slice(v, axis, index, range);
    }
    const double iso = query_double(req, "isovalue", (range.vmin + range.vmax) / 2.0);
    return render_contours(v, axis, iso);
  }

  template <typename F>
  httplib::Server::Handler guarded(F fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, http_status(e.code()), to_string(e.code()), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  void routes() {
    server.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(sessions_mu);
      send_json(res, {{"status", "ok"}, {"sessions", sessions.size()}});
    }));
    server.Get("/api/openapi.json", guarded([](const httplib::Request&, httplib::Response& res) {
      send_json(res, openapi_document());
    }));
    server.Get("/api/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
      std::vector<std::shared_ptr<Session>> all;
      {
        std::shared_lock lock(sessions_mu);
        for (const auto& [id, s] : sessions) all.push_back(s);
      }
      json list = json::array();
      for (const auto& s : all) list.push_back(session_json(*s));
      send_json(res, {{"sessions", std::move(list)}});
    }));
    server.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = create(parse_body(req));
      spdlog::info("session {} created from {} ({} blocks)", s->id, s->idlt_file, s->table.size());
      send_json(res, session_json(*s), 201);
    }));
    server.Get(R"(/api/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, session_json(*find(req.matches[1])));
    }));
    server.Delete(R"(/api/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::unique_lock lock(sessions_mu);
      if (sessions.erase(req.matches[1]) == 0) {
        throw Error(ErrorCode::kNotFound, "no session '" + std::string(req.matches[1]) + "'");
      }
      res.status = 204;
    }));
    server.Get(R"(/api/sessions/([^/]+)/tree)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, tree_json(*find(req.matches[1])));
    }));
    server.Post(R"(/api/sessions/([^/]+)/cluster)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  auto s = find(req.matches[1]);
                  const json body = parse_body(req);
                  const int node = body_field<int>(body, "node");
                  const int k = body_field<int>(body, "k");
                  const auto seed = body.contains("seed") ? body_field<std::uint64_t>(body, "seed") : 0;
                  {
                    std::unique_lock lock(s->mu);
                    s->tree = s->tree.split(s->table, node, k, seed);
                    ++s->version;
                  }
                  send_json(res, tree_json(*s));
                }));
    server.Post(R"(/api/sessions/([^/]+)/merge)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req.matches[1]);
      const int node = body_field<int>(parse_body(req), "node");
      {
        std::unique_lock lock(s->mu);
        s->tree = s->tree.merge(node);
        ++s->version;
      }
      send_json(res, tree_json(*s));
    }));
    server.Get(R"(/api/sessions/([^/]+)/projection)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto s = find(req.matches[1]);
                 const double n = static_cast<double>(s->table.size());
                 const double perplexity = query_double(req, "perplexity", std::min(30.0, (n - 1.0) / 3.0));
                 const long long seed_in = query_int(req, "seed", 0);
                 if (seed_in < 0) throw Error(ErrorCode::kInvalidArgument, "seed must be >= 0");
                 const auto seed = static_cast<std::uint64_t>(seed_in);
                 Embedding2D e;
                 {
                   std::lock_guard lock(s->cache_mu);
                   auto it = s->projections.find({perplexity, seed});
                   if (it == s->projections.end()) {
                     it = s->projections.emplace(std::pair{perplexity, seed}, project_2d(s->table, perplexity, seed))
                              .first;
                   }
                   e = it->second;
                 }
                 std::shared_lock lock(s->mu);
                 const auto leaf = s->tree.leaf_of_rows();
                 json points = json::array();
                 for (std::size_t r = 0; r < e.points.size(); ++r) {
                   points.push_back({{"row", r},
                                     {"block", index_json(s->table.blocks[r])},
                                     {"x", e.points[r][0]},
                                     {"y", e.points[r][1]},
                                     {"leaf", leaf[r]}});
                 }
                 send_json(res, {{"session", s->id},
                                 {"version", s->version},
                                 {"perplexity", perplexity},
                                 {"seed", seed},
                                 {"points", std::move(points)}});
               }));
    server.Get(R"(/api/sessions/([^/]+)/clusters/([^/]+)/blocks)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto s = find(req.matches[1]);
                 const int node = path_int(req.matches[2], "node");
                 std::shared_lock lock(s->mu);
                 json blocks = json::array();
                 for (int m : s->tree.node(node).members) {
                   const auto& sum = s->summaries[static_cast<std::size_t>(m)];
                   blocks.push_back({{"row", m},
                                     {"index", index_json(s->table.blocks[static_cast<std::size_t>(m)])},
                                     {"mean", sum.mean ? json(*sum.mean) : json(nullptr)},
                                     {"entropy", sum.entropy}});
                 }
                 send_json(res, {{"session", s->id}, {"version", s->version}, {"node", node}, {"blocks", blocks}});
               }));
    server.Get(R"(/api/sessions/([^/]+)/render)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req.matches[1]);
      const auto png = encode_png(render(*s, req));
      res.status = 200;
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    }));

    // Unmatched routes get a JSON body too.
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.body.empty()) {
        send_error(res, res.status, res.status == 404 ? "not_found" : "http",
                   "no route for " + req.method + " " + req.path);
      }
    });
    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
    });
  }
};

ExplorerService::ExplorerService(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

ExplorerService::~ExplorerService() { stop(); }

int ExplorerService::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  impl_->port = bound;
  return bound;
}

void ExplorerService::serve() {
  if (impl_->port < 0) throw Error(ErrorCode::kInvalidArgument, "serve() before bind()");
  impl_->server.listen_after_bind();
}

void ExplorerService::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace idlat
