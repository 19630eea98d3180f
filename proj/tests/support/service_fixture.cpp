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

#include "service_fixture.hpp"

#include <fstream>

#include <gtest/gtest.h>

#include "idlat/checkpoint.hpp"
#include "idlat/codec.hpp"
#include "test_support.hpp"

namespace idlat::testing {

ServiceFiles write_service_files(const std::filesystem::path& dir) {
  ServiceFiles f{blob_volume({24, 16, 16}, 11, 0.02), small_model(7), dir};
  save_raw(f.volume, dir / "volume.raw", DType::kF64LE);
  std::ofstream(dir / "volume.json") << nlohmann::json{{"path", "volume.raw"}, {"dims", {24, 16, 16}}, {"dtype", "f64le"}};
  save_model(f.model, dir / "model.idlm");
  save_model(small_model(8), dir / "other.idlm");
  const auto imp = importance_from_threshold(f.volume, (f.volume.value_range.vmin + f.volume.value_range.vmax) / 2.0);
  write_compressed(compress_volume(f.volume, imp, f.model), dir / "volume.idlt");
  return f;
}

RunningService::RunningService(ServiceOptions options) : service_(std::move(options)) {
  port_ = service_.bind("127.0.0.1", 0);
  thread_ = std::thread([this] { service_.serve(); });
}

RunningService::~RunningService() {
  service_.stop();
  thread_.join();
}

httplib::Client RunningService::client() const {
  httplib::Client c("127.0.0.1", port_);
  c.set_read_timeout(60, 0);
  return c;
}

nlohmann::json body_json(const httplib::Result& r) {
  if (!r) {
    ADD_FAILURE() << "request failed: " << httplib::to_string(r.error());
    return {};
  }
  try {
    return nlohmann::json::parse(r->body);
  } catch (const nlohmann::json::exception& e) {
    ADD_FAILURE() << "response is not JSON: " << e.what() << " body: " << r->body.substr(0, 200);
    return {};
  }
}

}  // namespace idlat::testing
