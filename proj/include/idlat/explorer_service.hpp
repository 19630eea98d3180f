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

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "idlat/error.hpp"

namespace idlat {

struct ServiceOptions {
  /// Root for relative paths in requests; paths may not escape it. Empty
  /// means the working directory, without the containment check.
  std::filesystem::path data_dir;
  /// Checkpoint used when a create request names no model.
  std::optional<std::filesystem::path> default_model;
};

/// HTTP status for a library error code.
int http_status(ErrorCode code);

/// The OpenAPI document describing the service.
const nlohmann::json& openapi_document();

/// REST backend of the latent explorer. Sessions live in memory. Reads run
/// concurrently; splits and merges of one session are serialized and bump its
/// version counter.
class ExplorerService {
 public:
  explicit ExplorerService(ServiceOptions options);
  ~ExplorerService();
  ExplorerService(const ExplorerService&) = delete;
  ExplorerService& operator=(const ExplorerService&) = delete;

  /// Binds `host:port` (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires bind().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace idlat
