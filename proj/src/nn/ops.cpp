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

#include "idlat/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include <Eigen/Dense>

#include "idlat/error.hpp"

namespace idlat::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, what);
}

// For every kernel tap and output position: the spatial input index it reads
// (within one channel), or -1 for zero padding.
struct GatherTable {
  int out_d = 0, out_h = 0, out_w = 0;
  std::vector<int> index;  // k^3 x (out_d * out_h * out_w)
};

std::shared_ptr<const GatherTable> gather_table(int d, int h, int w, const ConvGeometry& g) {
  using Key = std::tuple<int, int, int, int, int, int, int>;
  static std::mutex mu;
  static std::map<Key, std::shared_ptr<const GatherTable>> cache;
  const Key key{d, h, w, g.kernel, g.stride, g.pad, static_cast<int>(g.mode)};
  std::lock_guard<std::mutex> lock(mu);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  auto t = std::make_shared<GatherTable>();
  t->out_d = g.output_size(d);
  t->out_h = g.output_size(h);
  t->out_w = g.output_size(w);
  const int k = g.kernel;
  const std::size_t positions = static_cast<std::size_t>(t->out_d) * t->out_h * t->out_w;
  t->index.resize(static_cast<std::size_t>(k) * k * k * positions);
  std::size_t n = 0;
  for (int kz = 0; kz < k; ++kz)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx)
        for (int oz = 0; oz < t->out_d; ++oz)
          for (int oy = 0; oy < t->out_h; ++oy)
            for (int ox = 0; ox < t->out_w; ++ox, ++n) {
              int z = oz * g.stride - g.pad + kz;
              int y = oy * g.stride - g.pad + ky;
              int x = ox * g.stride - g.pad + kx;
              const bool inside = z >= 0 && z < d && y >= 0 && y < h && x >= 0 && x < w;
              if (!inside && g.mode == PadMode::kZero) {
                t->index[n] = -1;
                continue;
              }
              z = std::clamp(z, 0, d - 1);
              y = std::clamp(y, 0, h - 1);
              x = std::clamp(x, 0, w - 1);
              t->index[n] = (z * h + y) * w + x;
            }
  cache.emplace(key, t);
  return t;
}

void elementwise_same(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                      " vs " + shape_string(b.shape()));
}

}  // namespace

Var conv3d(const Var& x, const Var& w, const Var& b, const ConvGeometry& g) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 4, "conv3d input must be (C,D,H,W), got " + shape_string(xs));
  require(ws.size() == 5 && ws[2] == g.kernel && ws[3] == g.kernel && ws[4] == g.kernel,
          "conv3d weight must be (Cout,Cin,k,k,k), got " + shape_string(ws));
  require(ws[1] == xs[0], "conv3d channel mismatch: weight expects " + std::to_string(ws[1]) +
                              " input channels, got " + std::to_string(xs[0]));
  require(b.shape() == Shape{ws[0]}, "conv3d bias must be (Cout)");
  const int cin = xs[0], d = xs[1], h = xs[2], wd = xs[3];
  const int cout = ws[0];
  const int k3 = g.kernel * g.kernel * g.kernel;
  require(g.output_size(d) > 0 && g.output_size(h) > 0 && g.output_size(wd) > 0,
          "conv3d input too small for kernel");

  auto table = gather_table(d, h, wd, g);
  const std::size_t in_spatial = static_cast<std::size_t>(d) * h * wd;
  const std::size_t positions = static_cast<std::size_t>(table->out_d) * table->out_h * table->out_w;
  const std::size_t rows = static_cast<std::size_t>(cin) * k3;

  auto col = std::make_shared<RowMatrix>(rows, positions);
  const double* xd = x.value().data.data();
  for (int c = 0; c < cin; ++c) {
    const double* xc = xd + c * in_spatial;
    for (int t = 0; t < k3; ++t) {
      double* dst = col->data() + (static_cast<std::size_t>(c) * k3 + t) * positions;
      const int* idx = table->index.data() + static_cast<std::size_t>(t) * positions;
      for (std::size_t p = 0; p < positions; ++p) dst[p] = idx[p] >= 0 ? xc[idx[p]] : 0.0;
    }
  }

  Tensor out({cout, table->out_d, table->out_h, table->out_w});
  RowMap om(out.data.data(), cout, static_cast<Eigen::Index>(positions));
  ConstRowMap wm(w.value().data.data(), cout, static_cast<Eigen::Index>(rows));
  om.noalias() = wm * (*col);
  const double* bd = b.value().data.data();
  for (int o = 0; o < cout; ++o) om.row(o).array() += bd[o];

  return Var::make(
      std::move(out), {x, w, b},
      [col, table, cin, cout, k3, in_spatial, positions, rows,
       wv = w.value()](const Tensor& gout, std::span<Tensor* const> grads) {
        ConstRowMap go(gout.data.data(), cout, static_cast<Eigen::Index>(positions));
        if (grads[1]) {
          RowMap gw(grads[1]->data.data(), cout, static_cast<Eigen::Index>(rows));
          gw.noalias() += go * col->transpose();
        }
        if (grads[2]) {
          for (int o = 0; o < cout; ++o) grads[2]->data[o] += go.row(o).sum();
        }
        if (grads[0]) {
          ConstRowMap wm(wv.data.data(), cout, static_cast<Eigen::Index>(rows));
          RowMatrix gcol = wm.transpose() * go;
          double* gx = grads[0]->data.data();
          for (int c = 0; c < cin; ++c) {
            double* gxc = gx + c * in_spatial;
            for (int t = 0; t < k3; ++t) {
              const double* src = gcol.data() + (static_cast<std::size_t>(c) * k3 + t) * positions;
              const int* idx = table->index.data() + static_cast<std::size_t>(t) * positions;
              for (std::size_t p = 0; p < positions; ++p) {
                if (idx[p] >= 0) gxc[idx[p]] += src[p];
              }
            }
          }
        }
      });
}

Var upsample_nearest(const Var& x, int factor) {
  const auto& s = x.shape();
  require(s.size() == 4, "upsample input must be (C,D,H,W)");
  require(factor >= 1, "upsample factor must be >= 1");
  if (factor == 1) return x;
  const int c = s[0], d = s[1], h = s[2], w = s[3];
  const int D = d * factor, H = h * factor, W = w * factor;
  Tensor out({c, D, H, W});
  const auto& in = x.value().data;
  std::size_t n = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx, ++n)
          out.data[n] = in[((static_cast<std::size_t>(ch) * d + z / factor) * h + y / factor) * w + xx / factor];
  return Var::make(std::move(out), {x},
                   [c, d, h, w, D, H, W, factor](const Tensor& g, std::span<Tensor* const> grads) {
                     auto& gi = grads[0]->data;
                     std::size_t n = 0;
                     for (int ch = 0; ch < c; ++ch)
                       for (int z = 0; z < D; ++z)
                         for (int y = 0; y < H; ++y)
                           for (int xx = 0; xx < W; ++xx, ++n)
                             gi[((static_cast<std::size_t>(ch) * d + z / factor) * h + y / factor) * w +
                                xx / factor] += g.data[n];
                   });
}

Var leaky_relu(const Var& x, double slope) {
  Tensor out = x.value();
  for (auto& v : out.data) v = v > 0.0 ? v : slope * v;
  return Var::make(std::move(out), {x}, [xv = x.value(), slope](const Tensor& g, std::span<Tensor* const> grads) {
    auto& gi = grads[0]->data;
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += xv.data[i] > 0.0 ? g.data[i] : slope * g.data[i];
  });
}

Var add(const Var& a, const Var& b) {
  elementwise_same(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  return Var::make(std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> grads) {
    for (auto* gr : grads) {
      if (!gr) continue;
      for (std::size_t i = 0; i < g.size(); ++i) gr->data[i] += g.data[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  elementwise_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  return Var::make(std::move(out), {a, b},
                   [av = a.value(), bv = b.value()](const Tensor& g, std::span<Tensor* const> grads) {
                     if (grads[0])
                       for (std::size_t i = 0; i < g.size(); ++i) grads[0]->data[i] += g.data[i] * bv.data[i];
                     if (grads[1])
                       for (std::size_t i = 0; i < g.size(); ++i) grads[1]->data[i] += g.data[i] * av.data[i];
                   });
}

Var scale(const Var& x, double c) {
  Tensor out = x.value();
  for (auto& v : out.data) v *= c;
  return Var::make(std::move(out), {x}, [c](const Tensor& g, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < g.size(); ++i) grads[0]->data[i] += c * g.data[i];
  });
}

Var softplus(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data) v = v > 30.0 ? v : std::log1p(std::exp(v));
  return Var::make(std::move(out), {x}, [xv = x.value()](const Tensor& g, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-xv.data[i]));
      grads[0]->data[i] += g.data[i] * s;
    }
  });
}

Var lower_bound(const Var& x, double bound) {
  Tensor out = x.value();
  for (auto& v : out.data) v = std::max(v, bound);
  return Var::make(std::move(out), {x}, [xv = x.value(), bound](const Tensor& g, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv.data[i] >= bound || g.data[i] < 0.0) grads[0]->data[i] += g.data[i];
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const auto& ws = w.shape();
  require(ws.size() == 2, "linear weight must be (m,n)");
  const int m = ws[0], n = ws[1];
  require(static_cast<int>(x.value().size()) == n,
          "linear input has " + std::to_string(x.value().size()) + " elements, expected " + std::to_string(n));
  require(b.shape() == Shape{m}, "linear bias must be (m)");
  Tensor out({m});
  Eigen::Map<Eigen::VectorXd> om(out.data.data(), m);
  ConstRowMap wm(w.value().data.data(), m, n);
  Eigen::Map<const Eigen::VectorXd> xm(x.value().data.data(), n);
  Eigen::Map<const Eigen::VectorXd> bm(b.value().data.data(), m);
  om.noalias() = wm * xm + bm;
  return Var::make(std::move(out), {x, w, b},
                   [xv = x.value(), wv = w.value(), m, n](const Tensor& g, std::span<Tensor* const> grads) {
                     Eigen::Map<const Eigen::VectorXd> gm(g.data.data(), m);
                     if (grads[0]) {
                       ConstRowMap wm(wv.data.data(), m, n);
                       Eigen::Map<Eigen::VectorXd> gx(grads[0]->data.data(), n);
                       gx.noalias() += wm.transpose() * gm;
                     }
                     if (grads[1]) {
                       RowMap gw(grads[1]->data.data(), m, n);
                       Eigen::Map<const Eigen::VectorXd> xm(xv.data.data(), n);
                       gw.noalias() += gm * xm.transpose();
                     }
                     if (grads[2]) {
                       for (int i = 0; i < m; ++i) grads[2]->data[i] += g.data[i];
                     }
                   });
}

Var reshape(const Var& x, Shape shape) {
  require(shape_size(shape) == x.value().size(),
          "reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  Tensor out(std::move(shape), x.value().data);
  return Var::make(std::move(out), {x}, [](const Tensor& g, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < g.size(); ++i) grads[0]->data[i] += g.data[i];
  });
}

Var slice_channels(const Var& x, int begin, int end) {
  const auto& s = x.shape();
  require(!s.empty() && begin >= 0 && begin < end && end <= s[0], "slice_channels out of range");
  Shape os = s;
  os[0] = end - begin;
  const std::size_t per = x.value().size() / static_cast<std::size_t>(s[0]);
  Tensor out(os);
  std::copy(x.value().data.begin() + begin * per, x.value().data.begin() + end * per, out.data.begin());
  return Var::make(std::move(out), {x}, [begin, per](const Tensor& g, std::span<Tensor* const> grads) {
    for (std::size_t i = 0; i < g.size(); ++i) grads[0]->data[begin * per + i] += g.data[i];
  });
}

Var center_crop(const Var& x, int offset, int size) {
  const auto& s = x.shape();
  require(s.size() == 4, "center_crop input must be (C,D,H,W)");
  require(offset >= 0 && size > 0 && offset + size <= s[1] && offset + size <= s[2] && offset + size <= s[3],
          "center_crop window outside tensor");
  const int c = s[0], d = s[1], h = s[2], w = s[3];
  Tensor out({c, size, size, size});
  auto src_index = [=](int ch, int z, int y, int xx) {
    return ((static_cast<std::size_t>(ch) * d + z + offset) * h + y + offset) * w + xx + offset;
  };
  std::size_t n = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int z = 0; z < size; ++z)
      for (int y = 0; y < size; ++y)
        for (int xx = 0; xx < size; ++xx, ++n) out.data[n] = x.value().data[src_index(ch, z, y, xx)];
  return Var::make(std::move(out), {x}, [=](const Tensor& g, std::span<Tensor* const> grads) {
    std::size_t n = 0;
    for (int ch = 0; ch < c; ++ch)
      for (int z = 0; z < size; ++z)
        for (int y = 0; y < size; ++y)
          for (int xx = 0; xx < size; ++xx, ++n) grads[0]->data[src_index(ch, z, y, xx)] += g.data[n];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  return Var::make(Tensor({1}, {s}), {x}, [](const Tensor& g, std::span<Tensor* const> grads) {
    for (auto& v : grads[0]->data) v += g.data[0];
  });
}

Var weighted_sse(const Tensor& target, const Var& y, const Tensor& weights) {
  require(target.shape == y.shape() && weights.shape == y.shape(), "weighted_sse shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double e = target.data[i] - y.value().data[i];
    s += weights.data[i] * e * e;
  }
  return Var::make(Tensor({1}, {s}), {y},
                   [target, weights, yv = y.value()](const Tensor& g, std::span<Tensor* const> grads) {
                     for (std::size_t i = 0; i < target.size(); ++i) {
                       grads[0]->data[i] += -2.0 * weights.data[i] * (target.data[i] - yv.data[i]) * g.data[0];
                     }
                   });
}

Var neg_log2_sum(const Var& p) {
  double s = 0.0;
  for (double v : p.value().data) s -= std::log2(v);
  return Var::make(Tensor({1}, {s}), {p}, [pv = p.value()](const Tensor& g, std::span<Tensor* const> grads) {
    const double inv_ln2 = 1.0 / std::log(2.0);
    for (std::size_t i = 0; i < pv.size(); ++i) grads[0]->data[i] += -g.data[0] * inv_ln2 / pv.data[i];
  });
}

}  // namespace idlat::nn
