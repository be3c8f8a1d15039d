#include "irrclr/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace irrclr {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t s) {
  return a > 0 ? (a + s - 1) / s : a / s;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeMismatch(msg);
}

}  // namespace

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Shape& Graph::shape_of(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw ShapeMismatch("graph: node id out of range");
  }
  return nodes_[static_cast<std::size_t>(id)].shape;
}

NodeId Graph::input(std::string name, Shape shape, bool trainable) {
  if (inputs_.count(name)) throw ValidationError("graph: duplicate input name " + name);
  require(numel(shape) > 0, "graph: input " + name + " has empty shape");
  Node n;
  n.op = Op::Input;
  n.shape = std::move(shape);
  n.name = name;
  n.trainable = trainable;
  NodeId id = push(std::move(n));
  inputs_[std::move(name)] = id;
  return id;
}

NodeId Graph::constant(Shape shape, std::vector<double> values) {
  require(numel(shape) == static_cast<std::int64_t>(values.size()),
          "graph: constant value count does not match shape");
  Node n;
  n.op = Op::Constant;
  n.shape = std::move(shape);
  n.constant = std::move(values);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Shape& sa = shape_of(a);
  const Shape& sb = shape_of(b);
  bool same = sa == sb;
  bool bias_rows = sa.size() == 2 && sb.size() == 1 && sb[0] == sa[1];
  require(same || bias_rows,
          "add: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  Node n;
  n.op = Op::Add;
  n.shape = sa;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  require(shape_of(a) == shape_of(b), "sub: shapes differ");
  Node n;
  n.op = Op::Sub;
  n.shape = shape_of(a);
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  require(shape_of(a) == shape_of(b), "mul: shapes differ");
  Node n;
  n.op = Op::Mul;
  n.shape = shape_of(a);
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b, bool transpose_b) {
  const Shape& sa = shape_of(a);
  const Shape& sb = shape_of(b);
  require(sa.size() == 2 && sb.size() == 2, "matmul: operands must be rank 2");
  std::int64_t k = sa[1];
  std::int64_t kb = transpose_b ? sb[1] : sb[0];
  std::int64_t m = transpose_b ? sb[0] : sb[1];
  require(k == kb, "matmul: inner dimensions differ: " + shape_str(sa) + " vs " + shape_str(sb));
  Node n;
  n.op = Op::MatMul;
  n.shape = {sa[0], m};
  n.inputs = {a, b};
  n.transpose_b = transpose_b;
  return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId bias, int stride) {
  const Shape& sx = shape_of(x);
  const Shape& sw = shape_of(w);
  const Shape& sb = shape_of(bias);
  require(sx.size() == 4, "conv2d: input must be (N,C,H,W)");
  require(sw.size() == 4, "conv2d: weights must be (Co,Ci,kh,kw)");
  require(sb.size() == 1 && sb[0] == sw[0], "conv2d: bias must be (Co)");
  require(sx[1] == sw[1], "conv2d: channel mismatch");
  require(sw[2] % 2 == 1 && sw[3] % 2 == 1, "conv2d: kernel extents must be odd");
  require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  std::int64_t ho = stride == 1 ? sx[2] : sx[2] / 2;
  std::int64_t wo = stride == 1 ? sx[3] : sx[3] / 2;
  require(ho > 0 && wo > 0, "conv2d: output would be empty");
  Node n;
  n.op = Op::Conv2d;
  n.shape = {sx[0], sw[0], ho, wo};
  n.inputs = {x, w, bias};
  n.stride = stride;
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  Node n;
  n.op = Op::Relu;
  n.shape = shape_of(x);
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::max_pool2d(NodeId x) {
  const Shape& s = shape_of(x);
  require(s.size() == 4, "max_pool2d: input must be (N,C,H,W)");
  require(s[2] >= 2 && s[3] >= 2, "max_pool2d: spatial extents must be >= 2");
  Node n;
  n.op = Op::MaxPool2d;
  n.shape = {s[0], s[1], s[2] / 2, s[3] / 2};
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::global_avg_pool(NodeId x) {
  const Shape& s = shape_of(x);
  require(s.size() == 4, "global_avg_pool: input must be (N,C,H,W)");
  Node n;
  n.op = Op::GlobalAvgPool;
  n.shape = {s[0], s[1]};
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::channel_affine_norm(NodeId x, NodeId scale, NodeId shift, NodeId running_mean,
                                  NodeId running_var, bool training) {
  const Shape& s = shape_of(x);
  require(s.size() == 4, "channel_affine_norm: input must be (N,C,H,W)");
  Shape per_channel = {s[1]};
  for (NodeId p : {scale, shift, running_mean, running_var}) {
    require(shape_of(p) == per_channel, "channel_affine_norm: per-channel operand must be (C)");
  }
  Node n;
  n.op = Op::ChannelAffineNorm;
  n.shape = s;
  n.inputs = {x, scale, shift, running_mean, running_var};
  n.training = training;
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, Shape shape) {
  require(numel(shape_of(x)) == numel(shape), "reshape: element counts differ");
  Node n;
  n.op = Op::Reshape;
  n.shape = std::move(shape);
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::concat(NodeId a, NodeId b, int axis) {
  const Shape& sa = shape_of(a);
  const Shape& sb = shape_of(b);
  require(sa.size() == sb.size(), "concat: ranks differ");
  require(axis >= 0 && axis < static_cast<int>(sa.size()), "concat: axis out of range");
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (static_cast<int>(i) != axis) {
      require(sa[i] == sb[i], "concat: non-axis extents differ");
    }
  }
  Node n;
  n.op = Op::Concat;
  n.shape = sa;
  n.shape[static_cast<std::size_t>(axis)] += sb[static_cast<std::size_t>(axis)];
  n.inputs = {a, b};
  n.axis = axis;
  return push(std::move(n));
}

NodeId Graph::l2_normalize(NodeId x) {
  require(shape_of(x).size() == 2, "l2_normalize: input must be (N,D)");
  Node n;
  n.op = Op::L2NormalizeRows;
  n.shape = shape_of(x);
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId x) {
  require(shape_of(x).size() == 2, "softmax: input must be (N,D)");
  Node n;
  n.op = Op::SoftmaxRows;
  n.shape = shape_of(x);
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::log(NodeId x) {
  Node n;
  n.op = Op::Log;
  n.shape = shape_of(x);
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::exp(NodeId x) {
  Node n;
  n.op = Op::Exp;
  n.shape = shape_of(x);
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
  Node n;
  n.op = Op::Sum;
  n.shape = {1};
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::mean(NodeId x) {
  Node n;
  n.op = Op::Mean;
  n.shape = {1};
  n.inputs = {x};
  return push(std::move(n));
}

NodeId Graph::scalar_mul(NodeId x, double c) {
  Node n;
  n.op = Op::ScalarMul;
  n.shape = shape_of(x);
  n.inputs = {x};
  n.scalar = c;
  return push(std::move(n));
}

void Graph::mark_output(const std::string& name, NodeId id) {
  shape_of(id);  // bounds check
  outputs_[name] = id;
}

// ---------------------------------------------------------------------------
// Kernels. Loop orders are fixed and reductions run in one deterministic
// sequence each, so results are bit-identical across runs.

namespace {

template <typename T>
struct Conv2dDims {
  std::int64_t n, ci, h, w, co, kh, kw, ho, wo, ph, pw;
  int stride;
};

template <typename T>
Conv2dDims<T> conv_dims(const Node& node, const Tensor<T>& x, const Tensor<T>& w) {
  Conv2dDims<T> d;
  d.n = x.shape[0];
  d.ci = x.shape[1];
  d.h = x.shape[2];
  d.w = x.shape[3];
  d.co = w.shape[0];
  d.kh = w.shape[2];
  d.kw = w.shape[3];
  d.ho = node.shape[2];
  d.wo = node.shape[3];
  d.ph = d.kh / 2;
  d.pw = d.kw / 2;
  d.stride = node.stride;
  return d;
}

// The stride-1 3x3 path runs on zero-bordered padded planes so each of
// the nine taps is one flat vector loop; the border absorbs the padding
// and border garbage never reaches an interior cell.
template <typename T>
struct PaddedPlanes {
  std::int64_t h = 0, w = 0;          // source plane extents
  std::int64_t pw = 0, plane = 0;     // padded row width, padded plane size
  static constexpr std::int64_t kGuard = 64;  // slack for tap offsets
  std::vector<T> buf;

  void reset(std::int64_t height, std::int64_t width, std::int64_t count) {
    h = height;
    w = width;
    pw = width + 2;
    plane = (height + 2) * pw;
    buf.assign(static_cast<std::size_t>(count * plane + 2 * kGuard), T(0));
  }
  T* plane_at(std::int64_t i) { return buf.data() + kGuard + i * plane; }
  void fill(std::int64_t i, const T* __restrict__ src_plane) {
    T* __restrict__ dst = plane_at(i);
    for (std::int64_t y = 0; y < h; ++y) {
      const T* __restrict__ s = src_plane + y * w;
      T* __restrict__ d = dst + (y + 1) * pw + 1;
      for (std::int64_t x = 0; x < w; ++x) d[x] = s[x];
    }
  }
};

template <typename T>
void conv2d_forward(const Node& node, const Tensor<T>& x, const Tensor<T>& w,
                    const Tensor<T>& bias, Tensor<T>& out) {
  const auto d = conv_dims(node, x, w);
  const std::int64_t s = d.stride;
  const bool fused_3x3 = d.kh == 3 && d.kw == 3 && s == 1 && d.w >= 2;

  if (fused_3x3) {
    PaddedPlanes<T> xpad, opad;
    xpad.reset(d.h, d.w, d.ci);
    opad.reset(d.h, d.w, 1);
    const std::int64_t pw = xpad.pw;
    const std::int64_t full = xpad.plane;
    for (std::int64_t n = 0; n < d.n; ++n) {
      for (std::int64_t ci = 0; ci < d.ci; ++ci) {
        xpad.fill(ci, x.v.data() + ((n * d.ci + ci) * d.h) * d.w);
      }
      for (std::int64_t co = 0; co < d.co; ++co) {
        T* __restrict__ acc = opad.plane_at(0);
        for (std::int64_t i = 0; i < full; ++i) acc[i] = T(0);
        for (std::int64_t ci = 0; ci < d.ci; ++ci) {
          const T* wp = w.v.data() + ((co * d.ci + ci) * 9);
          const T* base = xpad.plane_at(ci);
          for (std::int64_t ky = 0; ky < 3; ++ky) {
            for (std::int64_t kx = 0; kx < 3; ++kx) {
              const T wv = wp[ky * 3 + kx];
              const T* __restrict__ src = base + (ky - 1) * pw + (kx - 1);
              for (std::int64_t i = 0; i < full; ++i) acc[i] += wv * src[i];
            }
          }
        }
        T* __restrict__ op = out.v.data() + ((n * d.co + co) * d.ho) * d.wo;
        const T bv = bias.v[static_cast<std::size_t>(co)];
        for (std::int64_t y = 0; y < d.h; ++y) {
          const T* __restrict__ arow = acc + (y + 1) * pw + 1;
          T* __restrict__ orow = op + y * d.w;
          for (std::int64_t xx = 0; xx < d.w; ++xx) orow[xx] = bv + arow[xx];
        }
      }
    }
    return;
  }

  for (std::int64_t n = 0; n < d.n; ++n) {
    for (std::int64_t co = 0; co < d.co; ++co) {
      T* __restrict__ op = out.v.data() + ((n * d.co + co) * d.ho) * d.wo;
      const T bv = bias.v[static_cast<std::size_t>(co)];
      for (std::int64_t i = 0; i < d.ho * d.wo; ++i) op[i] = bv;
      for (std::int64_t ci = 0; ci < d.ci; ++ci) {
        const T* __restrict__ xp = x.v.data() + ((n * d.ci + ci) * d.h) * d.w;
        const T* wp = w.v.data() + ((co * d.ci + ci) * d.kh) * d.kw;
        for (std::int64_t ky = 0; ky < d.kh; ++ky) {
          const std::int64_t oy_lo = std::max<std::int64_t>(0, ceil_div(d.ph - ky, s));
          const std::int64_t oy_hi =
              std::min(d.ho, (d.h - 1 - ky + d.ph) / s + 1);
          for (std::int64_t kx = 0; kx < d.kw; ++kx) {
            const T wv = wp[ky * d.kw + kx];
            const std::int64_t ox_lo = std::max<std::int64_t>(0, ceil_div(d.pw - kx, s));
            const std::int64_t ox_hi =
                std::min(d.wo, (d.w - 1 - kx + d.pw) / s + 1);
            if (ox_lo >= ox_hi) continue;
            for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
              const std::int64_t iy = oy * s + ky - d.ph;
              T* __restrict__ orow = op + oy * d.wo;
              const T* __restrict__ xrow = xp + iy * d.w + (kx - d.pw);
              if (s == 1) {
                for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) {
                  orow[ox] += wv * xrow[ox];
                }
              } else {
                for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) {
                  orow[ox] += wv * xrow[ox * 2];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const Node& node, const Tensor<T>& x, const Tensor<T>& w,
                     const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const auto d = conv_dims(node, x, w);
  const std::int64_t s = d.stride;

  if (db) {
    for (std::int64_t co = 0; co < d.co; ++co) {
      double acc = 0.0;
      for (std::int64_t n = 0; n < d.n; ++n) {
        const T* dyp = dy.v.data() + ((n * d.co + co) * d.ho) * d.wo;
        for (std::int64_t i = 0; i < d.ho * d.wo; ++i) acc += static_cast<double>(dyp[i]);
      }
      db->v[static_cast<std::size_t>(co)] += static_cast<T>(acc);
    }
  }

  const bool fused_3x3 = d.kh == 3 && d.kw == 3 && s == 1 && d.w >= 2;

  if (fused_3x3 && (dx || dw)) {
    PaddedPlanes<T> dypad, xpad, acc_pad;
    dypad.reset(d.h, d.w, d.co);
    if (dw) xpad.reset(d.h, d.w, d.ci);
    if (dx) acc_pad.reset(d.h, d.w, 1);
    const std::int64_t pw = dypad.pw;
    const std::int64_t full = dypad.plane;
    constexpr std::int64_t kLanes = 16;
    std::vector<double> dw_acc;
    if (dw) dw_acc.assign(static_cast<std::size_t>(d.co * d.ci * 9), 0.0);

    for (std::int64_t n = 0; n < d.n; ++n) {
      for (std::int64_t co = 0; co < d.co; ++co) {
        dypad.fill(co, dy.v.data() + ((n * d.co + co) * d.ho) * d.wo);
      }
      if (dw) {
        for (std::int64_t ci = 0; ci < d.ci; ++ci) {
          xpad.fill(ci, x.v.data() + ((n * d.ci + ci) * d.h) * d.w);
        }
      }

      if (dx) {
        for (std::int64_t ci = 0; ci < d.ci; ++ci) {
          T* __restrict__ acc = acc_pad.plane_at(0);
          for (std::int64_t i = 0; i < full; ++i) acc[i] = T(0);
          for (std::int64_t co = 0; co < d.co; ++co) {
            const T* wp = w.v.data() + ((co * d.ci + ci) * 9);
            const T* base = dypad.plane_at(co);
            for (std::int64_t ky = 0; ky < 3; ++ky) {
              for (std::int64_t kx = 0; kx < 3; ++kx) {
                const T wv = wp[ky * 3 + kx];
                const T* __restrict__ src = base + (1 - ky) * pw + (1 - kx);
                for (std::int64_t i = 0; i < full; ++i) acc[i] += wv * src[i];
              }
            }
          }
          T* __restrict__ dxp = dx->v.data() + ((n * d.ci + ci) * d.h) * d.w;
          for (std::int64_t y = 0; y < d.h; ++y) {
            const T* __restrict__ arow = acc + (y + 1) * pw + 1;
            T* __restrict__ dxrow = dxp + y * d.w;
            for (std::int64_t xx = 0; xx < d.w; ++xx) dxrow[xx] += arow[xx];
          }
        }
      }

      if (dw) {
        for (std::int64_t co = 0; co < d.co; ++co) {
          const T* __restrict__ dp = dypad.plane_at(co);
          for (std::int64_t ci = 0; ci < d.ci; ++ci) {
            const T* base = xpad.plane_at(ci);
            double* slot = dw_acc.data() + (co * d.ci + ci) * 9;
            for (std::int64_t ky = 0; ky < 3; ++ky) {
              for (std::int64_t kx = 0; kx < 3; ++kx) {
                const T* __restrict__ src = base + (ky - 1) * pw + (kx - 1);
                T lanes[kLanes] = {};
                std::int64_t i = 0;
                for (; i + kLanes <= full; i += kLanes) {
                  for (std::int64_t l = 0; l < kLanes; ++l) lanes[l] += dp[i + l] * src[i + l];
                }
                T tail = T(0);
                for (; i < full; ++i) tail += dp[i] * src[i];
                T total = tail;
                for (std::int64_t l = 0; l < kLanes; ++l) total += lanes[l];
                slot[ky * 3 + kx] += static_cast<double>(total);
              }
            }
          }
        }
      }
    }

    if (dw) {
      for (std::size_t i = 0; i < dw_acc.size(); ++i) {
        dw->v[i] += static_cast<T>(dw_acc[i]);
      }
    }
    return;
  }

  if (dx) {
    for (std::int64_t n = 0; n < d.n; ++n) {
      for (std::int64_t co = 0; co < d.co; ++co) {
        const T* __restrict__ dyp = dy.v.data() + ((n * d.co + co) * d.ho) * d.wo;
        for (std::int64_t ci = 0; ci < d.ci; ++ci) {
          T* __restrict__ dxp = dx->v.data() + ((n * d.ci + ci) * d.h) * d.w;
          const T* wp = w.v.data() + ((co * d.ci + ci) * d.kh) * d.kw;
          for (std::int64_t ky = 0; ky < d.kh; ++ky) {
            const std::int64_t oy_lo = std::max<std::int64_t>(0, ceil_div(d.ph - ky, s));
            const std::int64_t oy_hi = std::min(d.ho, (d.h - 1 - ky + d.ph) / s + 1);
            for (std::int64_t kx = 0; kx < d.kw; ++kx) {
              const T wv = wp[ky * d.kw + kx];
              const std::int64_t ox_lo = std::max<std::int64_t>(0, ceil_div(d.pw - kx, s));
              const std::int64_t ox_hi = std::min(d.wo, (d.w - 1 - kx + d.pw) / s + 1);
              if (ox_lo >= ox_hi) continue;
              for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                const std::int64_t iy = oy * s + ky - d.ph;
                const T* __restrict__ dyrow = dyp + oy * d.wo;
                T* __restrict__ dxrow = dxp + iy * d.w + (kx - d.pw);
                if (s == 1) {
                  for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) {
                    dxrow[ox] += wv * dyrow[ox];
                  }
                } else {
                  for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) {
                    dxrow[ox * 2] += wv * dyrow[ox];
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  if (dw) {
    for (std::int64_t co = 0; co < d.co; ++co) {
      for (std::int64_t ci = 0; ci < d.ci; ++ci) {
        for (std::int64_t ky = 0; ky < d.kh; ++ky) {
          const std::int64_t oy_lo = std::max<std::int64_t>(0, ceil_div(d.ph - ky, s));
          const std::int64_t oy_hi = std::min(d.ho, (d.h - 1 - ky + d.ph) / s + 1);
          for (std::int64_t kx = 0; kx < d.kw; ++kx) {
            const std::int64_t ox_lo = std::max<std::int64_t>(0, ceil_div(d.pw - kx, s));
            const std::int64_t ox_hi = std::min(d.wo, (d.w - 1 - kx + d.pw) / s + 1);
            double acc = 0.0;
            if (ox_lo < ox_hi) {
              for (std::int64_t n = 0; n < d.n; ++n) {
                const T* __restrict__ dyp = dy.v.data() + ((n * d.co + co) * d.ho) * d.wo;
                const T* __restrict__ xp = x.v.data() + ((n * d.ci + ci) * d.h) * d.w;
                for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                  const std::int64_t iy = oy * s + ky - d.ph;
                  const T* __restrict__ dyrow = dyp + oy * d.wo;
                  const T* __restrict__ xrow = xp + iy * d.w + (kx - d.pw);
                  T racc = T(0);
                  if (s == 1) {
                    for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) racc += dyrow[ox] * xrow[ox];
                  } else {
                    for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) {
                      racc += dyrow[ox] * xrow[ox * 2];
                    }
                  }
                  acc += static_cast<double>(racc);
                }
              }
            }
            dw->v[static_cast<std::size_t>(((co * d.ci + ci) * d.kh + ky) * d.kw + kx)] +=
                static_cast<T>(acc);
          }
        }
      }
    }
  }
}

template <typename T>
void matmul_forward(const Node& node, const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  const std::int64_t n = a.shape[0];
  const std::int64_t k = a.shape[1];
  const std::int64_t m = node.shape[1];
  std::fill(out.v.begin(), out.v.end(), T(0));
  if (!node.transpose_b) {
    for (std::int64_t i = 0; i < n; ++i) {
      const T* __restrict__ ar = a.v.data() + i * k;
      T* __restrict__ or_ = out.v.data() + i * m;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const T av = ar[kk];
        const T* __restrict__ br = b.v.data() + kk * m;
        for (std::int64_t j = 0; j < m; ++j) or_[j] += av * br[j];
      }
    }
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      const T* ar = a.v.data() + i * k;
      T* or_ = out.v.data() + i * m;
      for (std::int64_t j = 0; j < m; ++j) {
        const T* br = b.v.data() + j * k;
        T acc = T(0);
        for (std::int64_t kk = 0; kk < k; ++kk) acc += ar[kk] * br[kk];
        or_[j] = acc;
      }
    }
  }
}

template <typename T>
void matmul_backward(const Node& node, const Tensor<T>& a, const Tensor<T>& b,
                     const Tensor<T>& dy, Tensor<T>* da, Tensor<T>* db) {
  const std::int64_t n = a.shape[0];
  const std::int64_t k = a.shape[1];
  const std::int64_t m = node.shape[1];
  if (!node.transpose_b) {
    // y = a.b : da += dy.b^T, db += a^T.dy
    if (da) {
      for (std::int64_t i = 0; i < n; ++i) {
        const T* dyr = dy.v.data() + i * m;
        T* dar = da->v.data() + i * k;
        for (std::int64_t kk = 0; kk < k; ++kk) {
          const T* br = b.v.data() + kk * m;
          T acc = T(0);
          for (std::int64_t j = 0; j < m; ++j) acc += dyr[j] * br[j];
          dar[kk] += acc;
        }
      }
    }
    if (db) {
      for (std::int64_t i = 0; i < n; ++i) {
        const T* ar = a.v.data() + i * k;
        const T* dyr = dy.v.data() + i * m;
        for (std::int64_t kk = 0; kk < k; ++kk) {
          const T av = ar[kk];
          T* dbr = db->v.data() + kk * m;
          for (std::int64_t j = 0; j < m; ++j) dbr[j] += av * dyr[j];
        }
      }
    }
  } else {
    // y = a.b^T : da += dy.b, db += dy^T.a
    if (da) {
      for (std::int64_t i = 0; i < n; ++i) {
        const T* dyr = dy.v.data() + i * m;
        T* dar = da->v.data() + i * k;
        for (std::int64_t j = 0; j < m; ++j) {
          const T dv = dyr[j];
          const T* br = b.v.data() + j * k;
          for (std::int64_t kk = 0; kk < k; ++kk) dar[kk] += dv * br[kk];
        }
      }
    }
    if (db) {
      for (std::int64_t i = 0; i < n; ++i) {
        const T* dyr = dy.v.data() + i * m;
        const T* ar = a.v.data() + i * k;
        for (std::int64_t j = 0; j < m; ++j) {
          const T dv = dyr[j];
          T* dbr = db->v.data() + j * k;
          for (std::int64_t kk = 0; kk < k; ++kk) dbr[kk] += dv * ar[kk];
        }
      }
    }
  }
}

constexpr double kNormEps = 1e-5;
constexpr double kL2Eps = 1e-12;

}  // namespace

template <typename T>
EvalResult<T> evaluate(const Graph& g, const TensorMap<T>& inputs) {
  EvalResult<T> result;
  evaluate_into(g, inputs, result);
  return result;
}

template <typename T>
void evaluate_into(const Graph& g, const TensorMap<T>& inputs, EvalResult<T>& result) {
  const auto& nodes = g.nodes();
  result.values.resize(nodes.size());
  result.batch_stats.clear();

  auto ensure = [](Tensor<T>& t, const Shape& shape) {
    if (t.shape != shape) t = Tensor<T>::zeros(shape);
  };

  for (std::size_t idx = 0; idx < nodes.size(); ++idx) {
    const Node& node = nodes[idx];
    auto& out = result.values[idx];
    auto val = [&](int slot) -> const Tensor<T>& {
      return result.values[static_cast<std::size_t>(node.inputs[static_cast<std::size_t>(slot)])];
    };

    switch (node.op) {
      case Op::Input: {
        auto it = inputs.find(node.name);
        if (it == inputs.end()) throw UnboundInput("evaluate: input '" + node.name + "' not bound");
        if (it->second.shape != node.shape) {
          throw ShapeMismatch("evaluate: input '" + node.name + "' bound with shape " +
                              shape_str(it->second.shape) + ", expected " + shape_str(node.shape));
        }
        out = it->second;
        break;
      }
      case Op::Constant: {
        ensure(out, node.shape);
        for (std::size_t i = 0; i < node.constant.size(); ++i) {
          out.v[i] = static_cast<T>(node.constant[i]);
        }
        break;
      }
      case Op::Add: {
        const auto& a = val(0);
        const auto& b = val(1);
        ensure(out, node.shape);
        if (a.shape == b.shape) {
          for (std::int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] + b.v[i];
        } else {
          const std::int64_t n = a.shape[0], m = a.shape[1];
          for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = 0; j < m; ++j) out.v[i * m + j] = a.v[i * m + j] + b.v[j];
          }
        }
        break;
      }
      case Op::Sub: {
        const auto& a = val(0);
        const auto& b = val(1);
        ensure(out, node.shape);
        for (std::int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] - b.v[i];
        break;
      }
      case Op::Mul: {
        const auto& a = val(0);
        const auto& b = val(1);
        ensure(out, node.shape);
        for (std::int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * b.v[i];
        break;
      }
      case Op::MatMul: {
        ensure(out, node.shape);
        matmul_forward(node, val(0), val(1), out);
        break;
      }
      case Op::Conv2d: {
        ensure(out, node.shape);
        conv2d_forward(node, val(0), val(1), val(2), out);
        break;
      }
      case Op::Relu: {
        const auto& x = val(0);
        ensure(out, node.shape);
        for (std::int64_t i = 0; i < x.size(); ++i) out.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
        break;
      }
      case Op::MaxPool2d: {
        const auto& x = val(0);
        ensure(out, node.shape);
        const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
        const std::int64_t ho = node.shape[2], wo = node.shape[3];
        for (std::int64_t nc = 0; nc < n * c; ++nc) {
          const T* xp = x.v.data() + nc * h * w;
          T* op = out.v.data() + nc * ho * wo;
          for (std::int64_t oy = 0; oy < ho; ++oy) {
            for (std::int64_t ox = 0; ox < wo; ++ox) {
              const T* base = xp + (2 * oy) * w + 2 * ox;
              T best = base[0];
              if (base[1] > best) best = base[1];
              if (base[w] > best) best = base[w];
              if (base[w + 1] > best) best = base[w + 1];
              op[oy * wo + ox] = best;
            }
          }
        }
        break;
      }
      case Op::GlobalAvgPool: {
        const auto& x = val(0);
        ensure(out, node.shape);
        const std::int64_t n = x.shape[0], c = x.shape[1];
        const std::int64_t plane = x.shape[2] * x.shape[3];
        for (std::int64_t nc = 0; nc < n * c; ++nc) {
          const T* xp = x.v.data() + nc * plane;
          double acc = 0.0;
          for (std::int64_t i = 0; i < plane; ++i) acc += static_cast<double>(xp[i]);
          out.v[nc] = static_cast<T>(acc / double(plane));
        }
        break;
      }
      case Op::ChannelAffineNorm: {
        const auto& x = val(0);
        const auto& scale = val(1);
        const auto& shift = val(2);
        const std::int64_t n = x.shape[0], c = x.shape[1];
        const std::int64_t plane = x.shape[2] * x.shape[3];
        ensure(out, node.shape);
        std::vector<T> mean(c), var(c);
        if (node.training) {
          for (std::int64_t ch = 0; ch < c; ++ch) {
            double acc = 0.0, sq = 0.0;
            for (std::int64_t b = 0; b < n; ++b) {
              const T* __restrict__ xp = x.v.data() + (b * c + ch) * plane;
              for (std::int64_t i = 0; i < plane; ++i) {
                const double v = static_cast<double>(xp[i]);
                acc += v;
                sq += v * v;
              }
            }
            const double m = acc / double(n * plane);
            mean[ch] = static_cast<T>(m);
            var[ch] = static_cast<T>(std::max(sq / double(n * plane) - m * m, 0.0));
          }
          result.batch_stats[static_cast<NodeId>(idx)] = {
              std::vector<T>(mean.begin(), mean.end()), std::vector<T>(var.begin(), var.end())};
        } else {
          const auto& rmean = val(3);
          const auto& rvar = val(4);
          for (std::int64_t ch = 0; ch < c; ++ch) {
            mean[ch] = rmean.v[ch];
            var[ch] = rvar.v[ch];
          }
        }
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[ch]) + kNormEps));
          const T sc = scale.v[ch], sh = shift.v[ch], mu = mean[ch];
          for (std::int64_t b = 0; b < n; ++b) {
            const T* xp = x.v.data() + (b * c + ch) * plane;
            T* op = out.v.data() + (b * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) op[i] = sc * (xp[i] - mu) * inv + sh;
          }
        }
        break;
      }
      case Op::Reshape: {
        ensure(out, node.shape);
        const auto& x = val(0);
        std::copy(x.v.begin(), x.v.end(), out.v.begin());
        break;
      }
      case Op::Concat: {
        const auto& a = val(0);
        const auto& b = val(1);
        ensure(out, node.shape);
        const int axis = node.axis;
        std::int64_t outer = 1;
        for (int i = 0; i < axis; ++i) outer *= a.shape[static_cast<std::size_t>(i)];
        std::int64_t a_block = a.size() / outer;
        std::int64_t b_block = b.size() / outer;
        for (std::int64_t o = 0; o < outer; ++o) {
          std::copy_n(a.v.data() + o * a_block, a_block,
                      out.v.data() + o * (a_block + b_block));
          std::copy_n(b.v.data() + o * b_block, b_block,
                      out.v.data() + o * (a_block + b_block) + a_block);
        }
        break;
      }
      case Op::L2NormalizeRows: {
        const auto& x = val(0);
        ensure(out, node.shape);
        const std::int64_t n = x.shape[0], m = x.shape[1];
        for (std::int64_t i = 0; i < n; ++i) {
          const T* xr = x.v.data() + i * m;
          double acc = 0.0;
          for (std::int64_t j = 0; j < m; ++j) acc += double(xr[j]) * double(xr[j]);
          const T inv = static_cast<T>(1.0 / (std::sqrt(acc) + kL2Eps));
          T* or_ = out.v.data() + i * m;
          for (std::int64_t j = 0; j < m; ++j) or_[j] = xr[j] * inv;
        }
        break;
      }
      case Op::SoftmaxRows: {
        const auto& x = val(0);
        ensure(out, node.shape);
        const std::int64_t n = x.shape[0], m = x.shape[1];
        for (std::int64_t i = 0; i < n; ++i) {
          const T* xr = x.v.data() + i * m;
          T mx = xr[0];
          for (std::int64_t j = 1; j < m; ++j) mx = std::max(mx, xr[j]);
          T* or_ = out.v.data() + i * m;
          double acc = 0.0;
          for (std::int64_t j = 0; j < m; ++j) {
            or_[j] = std::exp(xr[j] - mx);
            acc += static_cast<double>(or_[j]);
          }
          const T inv = static_cast<T>(1.0 / acc);
          for (std::int64_t j = 0; j < m; ++j) or_[j] *= inv;
        }
        break;
      }
      case Op::Log: {
        const auto& x = val(0);
        ensure(out, node.shape);
        for (std::int64_t i = 0; i < x.size(); ++i) out.v[i] = std::log(x.v[i]);
        break;
      }
      case Op::Exp: {
        const auto& x = val(0);
        ensure(out, node.shape);
        for (std::int64_t i = 0; i < x.size(); ++i) out.v[i] = std::exp(x.v[i]);
        break;
      }
      case Op::Sum: {
        const auto& x = val(0);
        double acc = 0.0;
        for (std::int64_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x.v[i]);
        ensure(out, node.shape);
        out.v[0] = static_cast<T>(acc);
        break;
      }
      case Op::Mean: {
        const auto& x = val(0);
        double acc = 0.0;
        for (std::int64_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x.v[i]);
        ensure(out, node.shape);
        out.v[0] = static_cast<T>(acc / double(x.size()));
        break;
      }
      case Op::ScalarMul: {
        const auto& x = val(0);
        const T c = static_cast<T>(node.scalar);
        ensure(out, node.shape);
        for (std::int64_t i = 0; i < x.size(); ++i) out.v[i] = c * x.v[i];
        break;
      }
    }
  }

  for (const auto& [name, id] : g.outputs()) {
    if (!result.values[static_cast<std::size_t>(id)].all_finite()) {
      throw NonFiniteResult("evaluate: output '" + name + "' is non-finite");
    }
  }
}

template <typename T>
const Tensor<T>& fetch(const Graph& g, const EvalResult<T>& result, const std::string& name) {
  auto it = g.outputs().find(name);
  if (it == g.outputs().end()) throw ValidationError("fetch: no output named " + name);
  return result.values[static_cast<std::size_t>(it->second)];
}

template <typename T>
TensorMap<T> gradients(const Graph& g, NodeId loss, const TensorMap<T>& inputs,
                       EvalResult<T>* forward_out, BackwardWorkspace<T>* workspace) {
  const auto& nodes = g.nodes();
  if (loss < 0 || static_cast<std::size_t>(loss) >= nodes.size()) {
    throw ValidationError("gradients: loss node out of range");
  }
  if (numel(nodes[static_cast<std::size_t>(loss)].shape) != 1) {
    throw NonScalarLoss("gradients: loss node must be scalar, got shape " +
                        shape_str(nodes[static_cast<std::size_t>(loss)].shape));
  }

  EvalResult<T> local;
  EvalResult<T>& fwd = forward_out ? *forward_out : local;
  evaluate_into<T>(g, inputs, fwd);

  // A node participates in the backward pass if it depends on a trainable
  // input and feeds the loss.
  std::vector<char> needs(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    if (n.op == Op::Input && n.trainable) {
      needs[i] = 1;
    } else {
      for (NodeId in : n.inputs) {
        if (needs[static_cast<std::size_t>(in)]) {
          needs[i] = 1;
          break;
        }
      }
    }
  }
  std::vector<char> feeds_loss(nodes.size(), 0);
  feeds_loss[static_cast<std::size_t>(loss)] = 1;
  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (!feeds_loss[i]) continue;
    for (NodeId in : nodes[i].inputs) feeds_loss[static_cast<std::size_t>(in)] = 1;
  }
  std::vector<char> active(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) active[i] = needs[i] && feeds_loss[i];

  BackwardWorkspace<T> local_ws;
  BackwardWorkspace<T>& ws = workspace ? *workspace : local_ws;
  ws.grads.resize(nodes.size());
  std::vector<char> touched(nodes.size(), 0);
  auto grad_of = [&](NodeId id) -> Tensor<T>& {
    auto& t = ws.grads[static_cast<std::size_t>(id)];
    const auto& shape = nodes[static_cast<std::size_t>(id)].shape;
    if (!touched[static_cast<std::size_t>(id)]) {
      touched[static_cast<std::size_t>(id)] = 1;
      if (t.shape != shape) {
        t = Tensor<T>::zeros(shape);
      } else {
        std::fill(t.v.begin(), t.v.end(), T(0));
      }
    }
    return t;
  };

  if (active[static_cast<std::size_t>(loss)]) {
    grad_of(loss).v[0] = T(1);

    for (std::size_t idx = nodes.size(); idx-- > 0;) {
      if (!active[idx] || !touched[idx]) continue;
      const Node& node = nodes[idx];
      const Tensor<T>& dy = ws.grads[idx];
      auto in_id = [&](int slot) { return node.inputs[static_cast<std::size_t>(slot)]; };
      auto val = [&](int slot) -> const Tensor<T>& {
        return fwd.values[static_cast<std::size_t>(in_id(slot))];
      };
      auto wants = [&](int slot) { return active[static_cast<std::size_t>(in_id(slot))] != 0; };

      switch (node.op) {
        case Op::Input:
        case Op::Constant:
          break;
        case Op::Add: {
          const auto& a = val(0);
          const auto& b = val(1);
          if (wants(0)) {
            auto& da = grad_of(in_id(0));
            for (std::int64_t i = 0; i < dy.size(); ++i) da.v[i] += dy.v[i];
          }
          if (wants(1)) {
            auto& db = grad_of(in_id(1));
            if (a.shape == b.shape) {
              for (std::int64_t i = 0; i < dy.size(); ++i) db.v[i] += dy.v[i];
            } else {
              const std::int64_t n = a.shape[0], m = a.shape[1];
              for (std::int64_t j = 0; j < m; ++j) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(dy.v[i * m + j]);
                db.v[j] += static_cast<T>(acc);
              }
            }
          }
          break;
        }
        case Op::Sub: {
          if (wants(0)) {
            auto& da = grad_of(in_id(0));
            for (std::int64_t i = 0; i < dy.size(); ++i) da.v[i] += dy.v[i];
          }
          if (wants(1)) {
            auto& db = grad_of(in_id(1));
            for (std::int64_t i = 0; i < dy.size(); ++i) db.v[i] -= dy.v[i];
          }
          break;
        }
        case Op::Mul: {
          const auto& a = val(0);
          const auto& b = val(1);
          if (wants(0)) {
            auto& da = grad_of(in_id(0));
            for (std::int64_t i = 0; i < dy.size(); ++i) da.v[i] += dy.v[i] * b.v[i];
          }
          if (wants(1)) {
            auto& db = grad_of(in_id(1));
            for (std::int64_t i = 0; i < dy.size(); ++i) db.v[i] += dy.v[i] * a.v[i];
          }
          break;
        }
        case Op::MatMul: {
          matmul_backward(node, val(0), val(1), dy, wants(0) ? &grad_of(in_id(0)) : nullptr,
                          wants(1) ? &grad_of(in_id(1)) : nullptr);
          break;
        }
        case Op::Conv2d: {
          conv2d_backward(node, val(0), val(1), dy, wants(0) ? &grad_of(in_id(0)) : nullptr,
                          wants(1) ? &grad_of(in_id(1)) : nullptr,
                          wants(2) ? &grad_of(in_id(2)) : nullptr);
          break;
        }
        case Op::Relu: {
          if (wants(0)) {
            const auto& x = val(0);
            auto& dx = grad_of(in_id(0));
            // gradient at exactly 0 is defined as 0
            for (std::int64_t i = 0; i < dy.size(); ++i) {
              if (x.v[i] > T(0)) dx.v[i] += dy.v[i];
            }
          }
          break;
        }
        case Op::MaxPool2d: {
          if (wants(0)) {
            const auto& x = val(0);
            auto& dx = grad_of(in_id(0));
            const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
            const std::int64_t ho = node.shape[2], wo = node.shape[3];
            for (std::int64_t nc = 0; nc < n * c; ++nc) {
              const T* xp = x.v.data() + nc * h * w;
              T* dxp = dx.v.data() + nc * h * w;
              const T* dyp = dy.v.data() + nc * ho * wo;
              for (std::int64_t oy = 0; oy < ho; ++oy) {
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                  const std::int64_t base = (2 * oy) * w + 2 * ox;
                  // first maximum wins on ties
                  std::int64_t best = base;
                  if (xp[base + 1] > xp[best]) best = base + 1;
                  if (xp[base + w] > xp[best]) best = base + w;
                  if (xp[base + w + 1] > xp[best]) best = base + w + 1;
                  dxp[best] += dyp[oy * wo + ox];
                }
              }
            }
          }
          break;
        }
        case Op::GlobalAvgPool: {
          if (wants(0)) {
            const auto& x = val(0);
            auto& dx = grad_of(in_id(0));
            const std::int64_t n = x.shape[0], c = x.shape[1];
            const std::int64_t plane = x.shape[2] * x.shape[3];
            const T inv = static_cast<T>(1.0 / double(plane));
            for (std::int64_t nc = 0; nc < n * c; ++nc) {
              const T g = dy.v[nc] * inv;
              T* dxp = dx.v.data() + nc * plane;
              for (std::int64_t i = 0; i < plane; ++i) dxp[i] += g;
            }
          }
          break;
        }
        case Op::ChannelAffineNorm: {
          const auto& x = val(0);
          const auto& scale = val(1);
          const std::int64_t n = x.shape[0], c = x.shape[1];
          const std::int64_t plane = x.shape[2] * x.shape[3];
          const std::int64_t m_count = n * plane;

          std::vector<double> mean(c), var(c);
          if (node.training) {
            const auto& stats = fwd.batch_stats.at(static_cast<NodeId>(idx));
            for (std::int64_t ch = 0; ch < c; ++ch) {
              mean[ch] = static_cast<double>(stats.first[ch]);
              var[ch] = static_cast<double>(stats.second[ch]);
            }
          } else {
            const auto& rmean = val(3);
            const auto& rvar = val(4);
            for (std::int64_t ch = 0; ch < c; ++ch) {
              mean[ch] = static_cast<double>(rmean.v[ch]);
              var[ch] = static_cast<double>(rvar.v[ch]);
            }
          }

          for (std::int64_t ch = 0; ch < c; ++ch) {
            const double inv = 1.0 / std::sqrt(var[ch] + kNormEps);
            const double sc = static_cast<double>(scale.v[ch]);
            const double mu = mean[ch];

            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::int64_t b = 0; b < n; ++b) {
              const T* xp = x.v.data() + (b * c + ch) * plane;
              const T* dyp = dy.v.data() + (b * c + ch) * plane;
              for (std::int64_t i = 0; i < plane; ++i) {
                const double dyv = static_cast<double>(dyp[i]);
                sum_dy += dyv;
                sum_dy_xhat += dyv * (static_cast<double>(xp[i]) - mu) * inv;
              }
            }
            if (wants(1)) grad_of(in_id(1)).v[ch] += static_cast<T>(sum_dy_xhat);
            if (wants(2)) grad_of(in_id(2)).v[ch] += static_cast<T>(sum_dy);

            if (wants(0)) {
              auto& dx = grad_of(in_id(0));
              if (node.training) {
                // full batch-statistics backward
                const double k1 = sc * inv;
                const double inv_m = 1.0 / double(m_count);
                for (std::int64_t b = 0; b < n; ++b) {
                  const T* xp = x.v.data() + (b * c + ch) * plane;
                  const T* dyp = dy.v.data() + (b * c + ch) * plane;
                  T* dxp = dx.v.data() + (b * c + ch) * plane;
                  for (std::int64_t i = 0; i < plane; ++i) {
                    const double xhat = (static_cast<double>(xp[i]) - mu) * inv;
                    const double t = static_cast<double>(dyp[i]) - inv_m * sum_dy -
                                     inv_m * sum_dy_xhat * xhat;
                    dxp[i] += static_cast<T>(k1 * t);
                  }
                }
              } else {
                const double k1 = sc * inv;
                for (std::int64_t b = 0; b < n; ++b) {
                  const T* dyp = dy.v.data() + (b * c + ch) * plane;
                  T* dxp = dx.v.data() + (b * c + ch) * plane;
                  for (std::int64_t i = 0; i < plane; ++i) {
                    dxp[i] += static_cast<T>(k1 * static_cast<double>(dyp[i]));
                  }
                }
              }
            }
            if (!node.training) {
              // inference-mode stats are plain inputs; give them gradients too
              if (wants(3)) grad_of(in_id(3)).v[ch] += static_cast<T>(-sc * inv * sum_dy);
              if (wants(4)) {
                double sum_dy_x = 0.0;
                for (std::int64_t b = 0; b < n; ++b) {
                  const T* xp = x.v.data() + (b * c + ch) * plane;
                  const T* dyp = dy.v.data() + (b * c + ch) * plane;
                  for (std::int64_t i = 0; i < plane; ++i) {
                    sum_dy_x += static_cast<double>(dyp[i]) * (static_cast<double>(xp[i]) - mu);
                  }
                }
                grad_of(in_id(4)).v[ch] +=
                    static_cast<T>(-0.5 * sc * inv * inv * inv * sum_dy_x);
              }
            }
          }
          break;
        }
        case Op::Reshape: {
          if (wants(0)) {
            auto& dx = grad_of(in_id(0));
            for (std::int64_t i = 0; i < dy.size(); ++i) dx.v[i] += dy.v[i];
          }
          break;
        }
        case Op::Concat: {
          const auto& a = val(0);
          const auto& b = val(1);
          const int axis = node.axis;
          std::int64_t outer = 1;
          for (int i = 0; i < axis; ++i) outer *= a.shape[static_cast<std::size_t>(i)];
          const std::int64_t a_block = a.size() / outer;
          const std::int64_t b_block = b.size() / outer;
          if (wants(0)) {
            auto& da = grad_of(in_id(0));
            for (std::int64_t o = 0; o < outer; ++o) {
              const T* src = dy.v.data() + o * (a_block + b_block);
              T* dst = da.v.data() + o * a_block;
              for (std::int64_t i = 0; i < a_block; ++i) dst[i] += src[i];
            }
          }
          if (wants(1)) {
            auto& dbg = grad_of(in_id(1));
            for (std::int64_t o = 0; o < outer; ++o) {
              const T* src = dy.v.data() + o * (a_block + b_block) + a_block;
              T* dst = dbg.v.data() + o * b_block;
              for (std::int64_t i = 0; i < b_block; ++i) dst[i] += src[i];
            }
          }
          break;
        }
        case Op::L2NormalizeRows: {
          if (wants(0)) {
            const auto& x = val(0);
            auto& dx = grad_of(in_id(0));
            const std::int64_t n = x.shape[0], m = x.shape[1];
            for (std::int64_t i = 0; i < n; ++i) {
              const T* xr = x.v.data() + i * m;
              const T* dyr = dy.v.data() + i * m;
              T* dxr = dx.v.data() + i * m;
              double norm_sq = 0.0, dot = 0.0;
              for (std::int64_t j = 0; j < m; ++j) {
                norm_sq += double(xr[j]) * double(xr[j]);
                dot += double(dyr[j]) * double(xr[j]);
              }
              const double s = std::sqrt(norm_sq);
              const double d = s + kL2Eps;
              if (s < 1e-30) {
                for (std::int64_t j = 0; j < m; ++j) dxr[j] += static_cast<T>(dyr[j] / d);
              } else {
                const double k2 = dot / (d * d * s);
                for (std::int64_t j = 0; j < m; ++j) {
                  dxr[j] += static_cast<T>(double(dyr[j]) / d - double(xr[j]) * k2);
                }
              }
            }
          }
          break;
        }
        case Op::SoftmaxRows: {
          if (wants(0)) {
            const auto& y = fwd.values[idx];
            auto& dx = grad_of(in_id(0));
            const std::int64_t n = y.shape[0], m = y.shape[1];
            for (std::int64_t i = 0; i < n; ++i) {
              const T* yr = y.v.data() + i * m;
              const T* dyr = dy.v.data() + i * m;
              T* dxr = dx.v.data() + i * m;
              double dot = 0.0;
              for (std::int64_t j = 0; j < m; ++j) dot += double(dyr[j]) * double(yr[j]);
              for (std::int64_t j = 0; j < m; ++j) {
                dxr[j] += static_cast<T>(double(yr[j]) * (double(dyr[j]) - dot));
              }
            }
          }
          break;
        }
        case Op::Log: {
          if (wants(0)) {
            const auto& x = val(0);
            auto& dx = grad_of(in_id(0));
            for (std::int64_t i = 0; i < dy.size(); ++i) dx.v[i] += dy.v[i] / x.v[i];
          }
          break;
        }
        case Op::Exp: {
          if (wants(0)) {
            const auto& y = fwd.values[idx];
            auto& dx = grad_of(in_id(0));
            for (std::int64_t i = 0; i < dy.size(); ++i) dx.v[i] += dy.v[i] * y.v[i];
          }
          break;
        }
        case Op::Sum: {
          if (wants(0)) {
            auto& dx = grad_of(in_id(0));
            const T g = dy.v[0];
            for (std::int64_t i = 0; i < dx.size(); ++i) dx.v[i] += g;
          }
          break;
        }
        case Op::Mean: {
          if (wants(0)) {
            auto& dx = grad_of(in_id(0));
            const T g = static_cast<T>(static_cast<double>(dy.v[0]) / double(dx.size()));
            for (std::int64_t i = 0; i < dx.size(); ++i) dx.v[i] += g;
          }
          break;
        }
        case Op::ScalarMul: {
          if (wants(0)) {
            auto& dx = grad_of(in_id(0));
            const T c = static_cast<T>(node.scalar);
            for (std::int64_t i = 0; i < dy.size(); ++i) dx.v[i] += c * dy.v[i];
          }
          break;
        }
      }
    }
  }

  TensorMap<T> out;
  for (const auto& [name, id] : g.inputs()) {
    const Node& n = nodes[static_cast<std::size_t>(id)];
    if (!n.trainable) continue;
    Tensor<T> t = touched[static_cast<std::size_t>(id)]
                      ? ws.grads[static_cast<std::size_t>(id)]
                      : Tensor<T>::zeros(n.shape);
    if (!t.all_finite()) {
      throw NonFiniteGradient("gradients: non-finite gradient for '" + name + "'");
    }
    out.emplace(name, std::move(t));
  }
  return out;
}

template EvalResult<float> evaluate<float>(const Graph&, const TensorMap<float>&);
template EvalResult<double> evaluate<double>(const Graph&, const TensorMap<double>&);
template void evaluate_into<float>(const Graph&, const TensorMap<float>&, EvalResult<float>&);
template void evaluate_into<double>(const Graph&, const TensorMap<double>&, EvalResult<double>&);
template const Tensor<float>& fetch<float>(const Graph&, const EvalResult<float>&,
                                           const std::string&);
template const Tensor<double>& fetch<double>(const Graph&, const EvalResult<double>&,
                                             const std::string&);
template TensorMap<float> gradients<float>(const Graph&, NodeId, const TensorMap<float>&,
                                           EvalResult<float>*, BackwardWorkspace<float>*);
template TensorMap<double> gradients<double>(const Graph&, NodeId, const TensorMap<double>&,
                                             EvalResult<double>*, BackwardWorkspace<double>*);

}  // namespace irrclr
