/* Copyright 2026 The voxprior Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "voxprior/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "voxprior/errors.hpp"

namespace voxprior::diff {
namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

Tape& tape_of(Var a) {
  if (!a.valid()) throw InputError("op called with an invalid Var");
  return *a.tape;
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void accumulate(NdArray* sink, const NdArray& g, float factor = 1.0f) {
  if (!sink) return;
  float* d = sink->ptr();
  const float* s = g.ptr();
  const int64_t n = g.size();
  for (int64_t i = 0; i < n; ++i) d[i] += factor * s[i];
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

bool is_masked(float m) { return m <= kMaskedLogit * 0.5f; }

// Geometry of a batched 3D convolution.
struct ConvGeom {
  int64_t n, cin, d, h, w;
  int64_t cout, kd, kh, kw;
  int sd, sh, sw, pd, ph, pw;
  int64_t od, oh, ow;

  int64_t in_spatial() const { return d * h * w; }
  int64_t out_spatial() const { return od * oh * ow; }
  int64_t rows() const { return cin * kd * kh * kw; }
};

// Writes columns for samples [s0, s0 + nb) into cols [rows, nb * out_spatial].
void im2col(const ConvGeom& g, const float* x, int64_t s0, int64_t nb, float* cols) {
  const int64_t os = g.out_spatial();
  const int64_t ld = nb * os;
  int64_t r = 0;
  for (int64_t c = 0; c < g.cin; ++c) {
    for (int64_t a = 0; a < g.kd; ++a) {
      for (int64_t b = 0; b < g.kh; ++b) {
        for (int64_t e = 0; e < g.kw; ++e, ++r) {
          float* row = cols + r * ld;
          for (int64_t s = 0; s < nb; ++s) {
            const float* xs = x + ((s0 + s) * g.cin + c) * g.in_spatial();
            float* dst = row + s * os;
            for (int64_t zd = 0; zd < g.od; ++zd) {
              const int64_t id = zd * g.sd - g.pd + a;
              for (int64_t zh = 0; zh < g.oh; ++zh) {
                const int64_t ih = zh * g.sh - g.ph + b;
                float* out = dst + (zd * g.oh + zh) * g.ow;
                if (id < 0 || id >= g.d || ih < 0 || ih >= g.h) {
                  std::fill(out, out + g.ow, 0.0f);
                  continue;
                }
                const float* xr = xs + (id * g.h + ih) * g.w;
                for (int64_t zw = 0; zw < g.ow; ++zw) {
                  const int64_t iw = zw * g.sw - g.pw + e;
                  out[zw] = (iw >= 0 && iw < g.w) ? xr[iw] : 0.0f;
                }
              }
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvGeom& g, const float* cols, int64_t s0, int64_t nb, float* dx) {
  const int64_t os = g.out_spatial();
  const int64_t ld = nb * os;
  int64_t r = 0;
  for (int64_t c = 0; c < g.cin; ++c) {
    for (int64_t a = 0; a < g.kd; ++a) {
      for (int64_t b = 0; b < g.kh; ++b) {
        for (int64_t e = 0; e < g.kw; ++e, ++r) {
          const float* row = cols + r * ld;
          for (int64_t s = 0; s < nb; ++s) {
            float* xs = dx + ((s0 + s) * g.cin + c) * g.in_spatial();
            const float* src = row + s * os;
            for (int64_t zd = 0; zd < g.od; ++zd) {
              const int64_t id = zd * g.sd - g.pd + a;
              if (id < 0 || id >= g.d) continue;
              for (int64_t zh = 0; zh < g.oh; ++zh) {
                const int64_t ih = zh * g.sh - g.ph + b;
                if (ih < 0 || ih >= g.h) continue;
                const float* in = src + (zd * g.oh + zh) * g.ow;
                float* xr = xs + (id * g.h + ih) * g.w;
                for (int64_t zw = 0; zw < g.ow; ++zw) {
                  const int64_t iw = zw * g.sw - g.pw + e;
                  if (iw >= 0 && iw < g.w) xr[iw] += in[zw];
                }
              }
            }
          }
        }
      }
    }
  }
}

// Samples per im2col chunk so the column buffer stays near 8M floats.
int64_t conv_chunk(const ConvGeom& g) {
  const int64_t per_sample = std::max<int64_t>(1, g.rows() * g.out_spatial());
  return std::clamp<int64_t>(int64_t{8} * 1024 * 1024 / per_sample, 1, g.n);
}

// Stride-1 convolution as one GEMM per kernel tap over the zero-padded
// input flattened to [C, Sp]. Output position s, in padded coordinates,
// reads input s + shift(tap), so each tap is a contiguous column slice and
// no column buffer is built.
using CStrided = Eigen::Map<const MatR, 0, Eigen::OuterStride<>>;
using Strided = Eigen::Map<MatR, 0, Eigen::OuterStride<>>;

constexpr int64_t kShiftBlock = 1024;

struct ShiftPlan {
  int64_t hp, wp, sp;
  int64_t len;  // columns covering every valid output
  std::vector<int64_t> shift;
};

ShiftPlan shift_plan(const ConvGeom& g) {
  ShiftPlan p;
  const int64_t dp = g.d + 2 * g.pd;
  p.hp = g.h + 2 * g.ph;
  p.wp = g.w + 2 * g.pw;
  p.sp = dp * p.hp * p.wp;
  p.len = ((g.od - 1) * p.hp + (g.oh - 1)) * p.wp + g.ow;
  for (int64_t a = 0; a < g.kd; ++a) {
    for (int64_t b = 0; b < g.kh; ++b) {
      for (int64_t e = 0; e < g.kw; ++e) p.shift.push_back((a * p.hp + b) * p.wp + e);
    }
  }
  return p;
}

bool use_shift_path(const ConvGeom& g) {
  if (g.sd != 1 || g.sh != 1 || g.sw != 1) return false;
  return g.out_spatial() >= 512 || (g.out_spatial() >= 64 && g.cin <= 64);
}

void pad_sample(const ConvGeom& g, const ShiftPlan& p, const float* x, float* xp) {
  std::fill(xp, xp + g.cin * p.sp, 0.0f);
  for (int64_t c = 0; c < g.cin; ++c) {
    for (int64_t i = 0; i < g.d; ++i) {
      for (int64_t j = 0; j < g.h; ++j) {
        const float* src = x + (c * g.d + i) * g.h * g.w + j * g.w;
        float* dst = xp + c * p.sp + ((i + g.pd) * p.hp + j + g.ph) * p.wp + g.pw;
        std::copy_n(src, g.w, dst);
      }
    }
  }
}

// Weights regrouped as taps x [cout, cin].
std::vector<float> pack_taps(const ConvGeom& g, const float* w) {
  const int64_t taps = g.kd * g.kh * g.kw;
  std::vector<float> out(static_cast<size_t>(taps * g.cout * g.cin));
  for (int64_t o = 0; o < g.cout; ++o) {
    for (int64_t c = 0; c < g.cin; ++c) {
      for (int64_t t = 0; t < taps; ++t) out[static_cast<size_t>((t * g.cout + o) * g.cin + c)] = w[(o * g.cin + c) * taps + t];
    }
  }
  return out;
}

// Output flat index of padded-grid column s, or -1 outside the valid range.
int64_t shift_out_index(const ConvGeom& g, const ShiftPlan& p, int64_t s) {
  const int64_t zw = s % p.wp, zh = (s / p.wp) % p.hp, zd = s / (p.wp * p.hp);
  if (zw >= g.ow || zh >= g.oh || zd >= g.od) return -1;
  return (zd * g.oh + zh) * g.ow + zw;
}

void conv_shift_forward(const ConvGeom& g, const float* x, const float* w, const float* bias, float* out) {
  const ShiftPlan p = shift_plan(g);
  const std::vector<float> wt = pack_taps(g, w);
  const int64_t taps = static_cast<int64_t>(p.shift.size());
  std::vector<float> xp(static_cast<size_t>(g.cin * p.sp));
  MatR acc;
  std::vector<int64_t> dest(static_cast<size_t>(kShiftBlock));
  for (int64_t n = 0; n < g.n; ++n) {
    pad_sample(g, p, x + n * g.cin * g.in_spatial(), xp.data());
    float* on = out + n * g.cout * g.out_spatial();
    for (int64_t s0 = 0; s0 < p.len; s0 += kShiftBlock) {
      const int64_t nb = std::min(kShiftBlock, p.len - s0);
      acc.setZero(g.cout, nb);
      for (int64_t t = 0; t < taps; ++t) {
        acc.noalias() += CMapR(wt.data() + t * g.cout * g.cin, g.cout, g.cin) *
                         CStrided(xp.data() + s0 + p.shift[static_cast<size_t>(t)], g.cin, nb,
                                  Eigen::OuterStride<>(p.sp));
      }
      for (int64_t j = 0; j < nb; ++j) dest[static_cast<size_t>(j)] = shift_out_index(g, p, s0 + j);
      for (int64_t o = 0; o < g.cout; ++o) {
        const float b = bias ? bias[o] : 0.0f;
        const float* row = acc.data() + o * nb;
        float* dst = on + o * g.out_spatial();
        for (int64_t j = 0; j < nb; ++j) {
          const int64_t di = dest[static_cast<size_t>(j)];
          if (di >= 0) dst[di] = row[j] + b;
        }
      }
    }
  }
}

void conv_shift_backward(const ConvGeom& g, const float* x, const float* w, const float* gout, float* gx, float* gw,
                         float* gb) {
  const ShiftPlan p = shift_plan(g);
  const int64_t taps = static_cast<int64_t>(p.shift.size());
  const std::vector<float> wt = pack_taps(g, w);
  std::vector<float> gwt(gw ? wt.size() : 0, 0.0f);
  std::vector<float> xp(gw ? static_cast<size_t>(g.cin * p.sp) : 0);
  std::vector<float> gxp(gx ? static_cast<size_t>(g.cin * p.sp) : 0);
  std::vector<double> gbias(static_cast<size_t>(g.cout), 0.0);
  MatR gm;
  for (int64_t n = 0; n < g.n; ++n) {
    const float* gn = gout + n * g.cout * g.out_spatial();
    if (gw) pad_sample(g, p, x + n * g.cin * g.in_spatial(), xp.data());
    if (gx) std::fill(gxp.begin(), gxp.end(), 0.0f);
    for (int64_t s0 = 0; s0 < p.len; s0 += kShiftBlock) {
      const int64_t nb = std::min(kShiftBlock, p.len - s0);
      gm.setZero(g.cout, nb);
      for (int64_t j = 0; j < nb; ++j) {
        const int64_t di = shift_out_index(g, p, s0 + j);
        if (di < 0) continue;
        for (int64_t o = 0; o < g.cout; ++o) gm(o, j) = gn[o * g.out_spatial() + di];
      }
      if (gb) {
        for (int64_t o = 0; o < g.cout; ++o) gbias[static_cast<size_t>(o)] += gm.row(o).cast<double>().sum();
      }
      for (int64_t t = 0; t < taps; ++t) {
        const int64_t off = s0 + p.shift[static_cast<size_t>(t)];
        if (gw) {
          MapR(gwt.data() + t * g.cout * g.cin, g.cout, g.cin).noalias() +=
              gm * CStrided(xp.data() + off, g.cin, nb, Eigen::OuterStride<>(p.sp)).transpose();
        }
        if (gx) {
          Strided(gxp.data() + off, g.cin, nb, Eigen::OuterStride<>(p.sp)).noalias() +=
              CMapR(wt.data() + t * g.cout * g.cin, g.cout, g.cin).transpose() * gm;
        }
      }
    }
    if (gx) {
      float* gxn = gx + n * g.cin * g.in_spatial();
      for (int64_t c = 0; c < g.cin; ++c) {
        for (int64_t i = 0; i < g.d; ++i) {
          for (int64_t j = 0; j < g.h; ++j) {
            const float* src = gxp.data() + c * p.sp + ((i + g.pd) * p.hp + j + g.ph) * p.wp + g.pw;
            float* dst = gxn + (c * g.d + i) * g.h * g.w + j * g.w;
            for (int64_t k = 0; k < g.w; ++k) dst[k] += src[k];
          }
        }
      }
    }
  }
  if (gw) {
    for (int64_t o = 0; o < g.cout; ++o) {
      for (int64_t c = 0; c < g.cin; ++c) {
        for (int64_t t = 0; t < taps; ++t) gw[(o * g.cin + c) * taps + t] += gwt[static_cast<size_t>((t * g.cout + o) * g.cin + c)];
      }
    }
  }
  if (gb) {
    for (int64_t o = 0; o < g.cout; ++o) gb[o] += static_cast<float>(gbias[static_cast<size_t>(o)]);
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  NdArray out = a.value();
  const NdArray& bv = b.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& t, const NdArray& g, const NdArray&) {
    accumulate(t.grad_sink(ia), g);
    accumulate(t.grad_sink(ib), g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  NdArray out = a.value();
  const NdArray& bv = b.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& t, const NdArray& g, const NdArray&) {
    accumulate(t.grad_sink(ia), g);
    accumulate(t.grad_sink(ib), g, -1.0f);
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  NdArray out = a.value();
  const NdArray& bv = b.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& t, const NdArray& g, const NdArray&) {
    const NdArray& av = t.value(ia);
    const NdArray& bv2 = t.value(ib);
    if (NdArray* ga = t.grad_sink(ia)) {
      for (int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv2[i];
    }
    if (NdArray* gb = t.grad_sink(ib)) {
      for (int64_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, float factor) {
  NdArray out = a.value();
  for (float& x : out.data()) x *= factor;
  const int ia = a.id;
  return tape_of(a).record(std::move(out), {a}, [ia, factor](Tape& t, const NdArray& g, const NdArray&) {
    accumulate(t.grad_sink(ia), g, factor);
  });
}

Var tanh(Var a) {
  NdArray out = a.value();
  for (float& x : out.data()) x = std::tanh(x);
  const int ia = a.id;
  return tape_of(a).record(std::move(out), {a}, [ia](Tape& t, const NdArray& g, const NdArray& y) {
    NdArray* ga = t.grad_sink(ia);
    for (int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (1.0f - y[i] * y[i]);
  });
}

Var swish(Var a) {
  NdArray out = a.value();
  for (float& x : out.data()) x = x * sigmoid(x);
  const int ia = a.id;
  return tape_of(a).record(std::move(out), {a}, [ia](Tape& t, const NdArray& g, const NdArray&) {
    const NdArray& x = t.value(ia);
    NdArray* ga = t.grad_sink(ia);
    for (int64_t i = 0; i < g.size(); ++i) {
      const float s = sigmoid(x[i]);
      (*ga)[i] += g[i] * s * (1.0f + x[i] * (1.0f - s));
    }
  });
}

Var reshape(Var a, Shape shape) {
  NdArray out = a.value().reshaped(std::move(shape));
  const int ia = a.id;
  return tape_of(a).record(std::move(out), {a}, [ia](Tape& t, const NdArray& g, const NdArray&) {
    accumulate(t.grad_sink(ia), g);
  });
}

Var permute(Var a, const std::vector<int>& axes) {
  const Shape& in_shape = a.shape();
  const int r = static_cast<int>(in_shape.size());
  if (static_cast<int>(axes.size()) != r) throw DimensionError("permute: axes length != rank");
  std::vector<int64_t> in_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  Shape out_shape(r);
  std::vector<int64_t> src_stride(r);
  std::vector<bool> seen(r, false);
  for (int i = 0; i < r; ++i) {
    const int ax = axes[i];
    if (ax < 0 || ax >= r || seen[ax]) throw DimensionError("permute: invalid axis list");
    seen[ax] = true;
    out_shape[i] = in_shape[ax];
    src_stride[i] = in_strides[ax];
  }
  // offsets[k] = source offset of the k-th output element.
  const int64_t n = shape_numel(out_shape);
  auto offsets = std::make_shared<std::vector<int64_t>>(n);
  std::vector<int64_t> idx(r, 0);
  for (int64_t k = 0; k < n; ++k) {
    int64_t off = 0;
    for (int i = 0; i < r; ++i) off += idx[i] * src_stride[i];
    (*offsets)[k] = off;
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  NdArray out(out_shape);
  const NdArray& av = a.value();
  for (int64_t k = 0; k < n; ++k) out[k] = av[(*offsets)[k]];
  const int ia = a.id;
  return tape_of(a).record(std::move(out), {a}, [ia, offsets](Tape& t, const NdArray& g, const NdArray&) {
    NdArray* ga = t.grad_sink(ia);
    for (int64_t k = 0; k < g.size(); ++k) (*ga)[(*offsets)[k]] += g[k];
  });
}

Var stop_gradient(Var a) { return tape_of(a).constant(a.value()); }

Var straight_through(Var encoded, Var quantized) {
  require_same_shape("straight_through", encoded, quantized);
  const int ie = encoded.id;
  return tape_of(encoded).record(quantized.value(), {encoded},
                                 [ie](Tape& t, const NdArray& g, const NdArray&) {
                                   accumulate(t.grad_sink(ie), g);
                                 });
}

Var embedding(Var table, const std::vector<int32_t>& indices) {
  const NdArray& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("embedding: table must be [V, E], got " + shape_str(tv.shape()));
  const int64_t vocab = tv.dim(0), width = tv.dim(1);
  const int64_t n = static_cast<int64_t>(indices.size());
  NdArray out(Shape{std::max<int64_t>(n, 1), width});
  if (n == 0) throw DimensionError("embedding: empty index list");
  for (int64_t i = 0; i < n; ++i) {
    const int32_t ix = indices[static_cast<size_t>(i)];
    if (ix < 0 || ix >= vocab) {
      throw IndexError("embedding index " + std::to_string(ix) + " outside [0, " + std::to_string(vocab) + ")");
    }
    std::copy_n(tv.ptr() + ix * width, width, out.ptr() + i * width);
  }
  const int it = table.id;
  return tape_of(table).record(std::move(out), {table},
                               [it, indices, width](Tape& t, const NdArray& g, const NdArray&) {
                                 NdArray* gt = t.grad_sink(it);
                                 for (size_t i = 0; i < indices.size(); ++i) {
                                   float* dst = gt->ptr() + indices[i] * width;
                                   const float* src = g.ptr() + static_cast<int64_t>(i) * width;
                                   for (int64_t j = 0; j < width; ++j) dst[j] += src[j];
                                 }
                               });
}

Var broadcast_spatial(Var a, const Shape& spatial) {
  const NdArray& av = a.value();
  if (av.rank() != 2) throw DimensionError("broadcast_spatial: input must be [N, C], got " + shape_str(av.shape()));
  const int64_t s = shape_numel(spatial);
  Shape out_shape{av.dim(0), av.dim(1)};
  out_shape.insert(out_shape.end(), spatial.begin(), spatial.end());
  NdArray out(out_shape);
  for (int64_t i = 0; i < av.size(); ++i) std::fill_n(out.ptr() + i * s, s, av[i]);
  const int ia = a.id;
  return tape_of(a).record(std::move(out), {a}, [ia, s](Tape& t, const NdArray& g, const NdArray&) {
    NdArray* ga = t.grad_sink(ia);
    for (int64_t i = 0; i < ga->size(); ++i) {
      double acc = 0.0;
      for (int64_t j = 0; j < s; ++j) acc += g[i * s + j];
      (*ga)[i] += static_cast<float>(acc);
    }
  });
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  const NdArray& xv = x.value();
  const NdArray& wv = weight.value();
  if (wv.rank() != 2) throw DimensionError("linear: weight must be [out, in], got " + shape_str(wv.shape()));
  const int64_t in = wv.dim(1), outw = wv.dim(0);
  if (xv.dim(-1) != in) {
    throw DimensionError("linear: input width " + std::to_string(xv.dim(-1)) + " != weight in " + std::to_string(in));
  }
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != outw)) {
    throw DimensionError("linear: bias shape " + shape_str(bias->shape()));
  }
  const int64_t m = xv.size() / in;
  Shape out_shape = xv.shape();
  out_shape.back() = outw;
  NdArray out(out_shape);
  MapR(out.ptr(), m, outw).noalias() = CMapR(xv.ptr(), m, in) * CMapR(wv.ptr(), outw, in).transpose();
  if (bias) {
    const float* b = bias->value().ptr();
    for (int64_t i = 0; i < m; ++i) {
      float* row = out.ptr() + i * outw;
      for (int64_t j = 0; j < outw; ++j) row[j] += b[j];
    }
  }
  const int ix = x.id, iw = weight.id, ib = bias ? bias->id : -1;
  Tape& t0 = tape_of(x);
  auto fn = [ix, iw, ib, m, in, outw](Tape& t, const NdArray& g, const NdArray&) {
    CMapR gm(g.ptr(), m, outw);
    if (NdArray* gx = t.grad_sink(ix)) {
      MapR(gx->ptr(), m, in).noalias() += gm * CMapR(t.value(iw).ptr(), outw, in);
    }
    if (NdArray* gw = t.grad_sink(iw)) {
      MapR(gw->ptr(), outw, in).noalias() += gm.transpose() * CMapR(t.value(ix).ptr(), m, in);
    }
    if (ib >= 0) {
      if (NdArray* gb = t.grad_sink(ib)) {
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < outw; ++j) (*gb)[j] += g[i * outw + j];
        }
      }
    }
  };
  if (bias) return t0.record(std::move(out), {x, weight, *bias}, fn);
  return t0.record(std::move(out), {x, weight}, fn);
}

Var conv3d(Var input, Var weight, std::optional<Var> bias, int stride, int padding) {
  return conv3d(input, weight, bias, {stride, stride, stride}, {padding, padding, padding});
}

Var conv3d(Var input, Var weight, std::optional<Var> bias, std::array<int, 3> stride, std::array<int, 3> padding) {
  const NdArray& xv = input.value();
  const NdArray& wv = weight.value();
  const bool batched = xv.rank() == 5;
  if (!batched && xv.rank() != 4) {
    throw DimensionError("conv3d: input must be [N, C, D, H, W] or [C, D, H, W], got " + shape_str(xv.shape()));
  }
  if (wv.rank() != 5) throw DimensionError("conv3d: weight must be [C_out, C_in, kd, kh, kw]");
  for (int i = 0; i < 3; ++i) {
    if (stride[i] < 1) throw DimensionError("conv3d: stride must be >= 1 on axis " + std::to_string(i));
    if (padding[i] < 0) throw DimensionError("conv3d: negative padding on axis " + std::to_string(i));
  }
  ConvGeom g{};
  const int off = batched ? 1 : 0;
  g.n = batched ? xv.dim(0) : 1;
  g.cin = xv.dim(off);
  g.d = xv.dim(off + 1);
  g.h = xv.dim(off + 2);
  g.w = xv.dim(off + 3);
  g.cout = wv.dim(0);
  if (wv.dim(1) != g.cin) {
    throw DimensionError("conv3d: axis channel: input has " + std::to_string(g.cin) + " channels, weight expects " +
                         std::to_string(wv.dim(1)));
  }
  g.kd = wv.dim(2);
  g.kh = wv.dim(3);
  g.kw = wv.dim(4);
  g.sd = stride[0];
  g.sh = stride[1];
  g.sw = stride[2];
  g.pd = padding[0];
  g.ph = padding[1];
  g.pw = padding[2];
  const std::array<int64_t, 3> ext{g.d, g.h, g.w}, ker{g.kd, g.kh, g.kw};
  const char* axis_names[3] = {"depth", "height", "width"};
  for (int i = 0; i < 3; ++i) {
    if (ext[i] + 2 * padding[i] < ker[i]) {
      throw DimensionError(std::string("conv3d: axis ") + axis_names[i] + ": kernel " + std::to_string(ker[i]) +
                           " exceeds padded extent " + std::to_string(ext[i] + 2 * padding[i]));
    }
  }
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != g.cout)) {
    throw DimensionError("conv3d: bias must be [C_out]");
  }
  g.od = (g.d + 2 * g.pd - g.kd) / g.sd + 1;
  g.oh = (g.h + 2 * g.ph - g.kh) / g.sh + 1;
  g.ow = (g.w + 2 * g.pw - g.kw) / g.sw + 1;

  Shape out_shape = batched ? Shape{g.n, g.cout, g.od, g.oh, g.ow} : Shape{g.cout, g.od, g.oh, g.ow};
  NdArray out(out_shape);
  const int ix = input.id, iw = weight.id, ib = bias ? bias->id : -1;
  Tape& t0 = tape_of(input);
  if (use_shift_path(g)) {
    conv_shift_forward(g, xv.ptr(), wv.ptr(), bias ? bias->value().ptr() : nullptr, out.ptr());
    auto fn = [g, ix, iw, ib](Tape& t, const NdArray& gout, const NdArray&) {
      NdArray* gx = t.grad_sink(ix);
      NdArray* gw = t.grad_sink(iw);
      NdArray* gb = ib >= 0 ? t.grad_sink(ib) : nullptr;
      conv_shift_backward(g, t.value(ix).ptr(), t.value(iw).ptr(), gout.ptr(), gx ? gx->ptr() : nullptr,
                          gw ? gw->ptr() : nullptr, gb ? gb->ptr() : nullptr);
    };
    if (bias) return t0.record(std::move(out), {input, weight, *bias}, fn);
    return t0.record(std::move(out), {input, weight}, fn);
  }
  const int64_t os = g.out_spatial();
  const int64_t rows = g.rows();
  const int64_t chunk = conv_chunk(g);
  std::vector<float> cols;
  MatR res;
  CMapR wm(wv.ptr(), g.cout, rows);
  for (int64_t s0 = 0; s0 < g.n; s0 += chunk) {
    const int64_t nb = std::min(chunk, g.n - s0);
    cols.resize(static_cast<size_t>(rows * nb * os));
    im2col(g, xv.ptr(), s0, nb, cols.data());
    res.noalias() = wm * CMapR(cols.data(), rows, nb * os);
    for (int64_t s = 0; s < nb; ++s) {
      for (int64_t o = 0; o < g.cout; ++o) {
        const float b = bias ? bias->value()[o] : 0.0f;
        const float* src = res.data() + o * nb * os + s * os;
        float* dst = out.ptr() + ((s0 + s) * g.cout + o) * os;
        for (int64_t p = 0; p < os; ++p) dst[p] = src[p] + b;
      }
    }
  }

  auto fn = [g, ix, iw, ib](Tape& t, const NdArray& gout, const NdArray&) {
    const int64_t os2 = g.out_spatial();
    const int64_t rows2 = g.rows();
    const int64_t chunk2 = conv_chunk(g);
    NdArray* gx = t.grad_sink(ix);
    NdArray* gw = t.grad_sink(iw);
    NdArray* gb = ib >= 0 ? t.grad_sink(ib) : nullptr;
    const float* xp = t.value(ix).ptr();
    CMapR wm2(t.value(iw).ptr(), g.cout, rows2);
    std::vector<float> cols2, gcols;
    MatR gm;
    for (int64_t s0 = 0; s0 < g.n; s0 += chunk2) {
      const int64_t nb = std::min(chunk2, g.n - s0);
      gm.resize(g.cout, nb * os2);
      for (int64_t s = 0; s < nb; ++s) {
        for (int64_t o = 0; o < g.cout; ++o) {
          std::copy_n(gout.ptr() + ((s0 + s) * g.cout + o) * os2, os2, gm.data() + o * nb * os2 + s * os2);
        }
      }
      if (gb) {
        for (int64_t o = 0; o < g.cout; ++o) {
          double acc = 0.0;
          const float* row = gm.data() + o * nb * os2;
          for (int64_t p = 0; p < nb * os2; ++p) acc += row[p];
          (*gb)[o] += static_cast<float>(acc);
        }
      }
      if (gw) {
        cols2.resize(static_cast<size_t>(rows2 * nb * os2));
        im2col(g, xp, s0, nb, cols2.data());
        MapR(gw->ptr(), g.cout, rows2).noalias() += gm * CMapR(cols2.data(), rows2, nb * os2).transpose();
      }
      if (gx) {
        gcols.resize(static_cast<size_t>(rows2 * nb * os2));
        MapR(gcols.data(), rows2, nb * os2).noalias() = wm2.transpose() * gm;
        col2im(g, gcols.data(), s0, nb, gx->ptr());
      }
    }
  };
  if (bias) return t0.record(std::move(out), {input, weight, *bias}, fn);
  return t0.record(std::move(out), {input, weight}, fn);
}

Var upsample_nearest2x(Var input) {
  const NdArray& xv = input.value();
  if (xv.rank() < 3) throw DimensionError("upsample_nearest2x: need at least 3 spatial axes");
  const int r = xv.rank();
  const int64_t d = xv.dim(r - 3), h = xv.dim(r - 2), w = xv.dim(r - 1);
  const int64_t outer = xv.size() / (d * h * w);
  Shape out_shape = xv.shape();
  out_shape[r - 3] *= 2;
  out_shape[r - 2] *= 2;
  out_shape[r - 1] *= 2;
  NdArray out(out_shape);
  const int64_t in_s = d * h * w, out_s = in_s * 8;
  for (int64_t c = 0; c < outer; ++c) {
    const float* src = xv.ptr() + c * in_s;
    float* dst = out.ptr() + c * out_s;
    for (int64_t z = 0; z < 2 * d; ++z) {
      for (int64_t y = 0; y < 2 * h; ++y) {
        const float* srow = src + ((z / 2) * h + y / 2) * w;
        float* drow = dst + (z * 2 * h + y) * 2 * w;
        for (int64_t x = 0; x < 2 * w; ++x) drow[x] = srow[x / 2];
      }
    }
  }
  const int ix = input.id;
  return tape_of(input).record(std::move(out), {input},
                               [ix, outer, d, h, w](Tape& t, const NdArray& g, const NdArray&) {
                                 NdArray* gx = t.grad_sink(ix);
                                 const int64_t in_s2 = d * h * w, out_s2 = in_s2 * 8;
                                 for (int64_t c = 0; c < outer; ++c) {
                                   const float* src = g.ptr() + c * out_s2;
                                   float* dst = gx->ptr() + c * in_s2;
                                   for (int64_t z = 0; z < 2 * d; ++z) {
                                     for (int64_t y = 0; y < 2 * h; ++y) {
                                       const float* srow = src + (z * 2 * h + y) * 2 * w;
                                       float* drow = dst + ((z / 2) * h + y / 2) * w;
                                       for (int64_t x = 0; x < 2 * w; ++x) drow[x / 2] += srow[x];
                                     }
                                   }
                                 }
                               });
}

namespace {

struct NormStats {
  std::vector<float> mean, rstd;
};

}  // namespace

Var group_norm(Var input, Var scale_v, Var shift_v, int groups, float eps) {
  const NdArray& xv = input.value();
  if (xv.rank() < 2) throw DimensionError("group_norm: input must be [N, C, ...], got " + shape_str(xv.shape()));
  const int64_t n = xv.dim(0), c = xv.dim(1);
  if (groups < 1 || c % groups != 0) {
    throw ConfigError("group_norm: " + std::to_string(c) + " channels not divisible into " + std::to_string(groups) +
                      " groups");
  }
  if (scale_v.value().size() != c || shift_v.value().size() != c) {
    throw DimensionError("group_norm: scale/shift must have " + std::to_string(c) + " entries");
  }
  const int64_t s = xv.size() / (n * c);
  const int64_t cpg = c / groups;
  const int64_t m = cpg * s;
  auto stats = std::make_shared<NormStats>();
  stats->mean.resize(static_cast<size_t>(n * groups));
  stats->rstd.resize(static_cast<size_t>(n * groups));
  NdArray out(xv.shape());
  const float* gamma = scale_v.value().ptr();
  const float* beta = shift_v.value().ptr();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t gi = 0; gi < groups; ++gi) {
      const int64_t base = (i * c + gi * cpg) * s;
      double acc = 0.0;
      for (int64_t j = 0; j < m; ++j) acc += xv[base + j];
      const double mu = acc / static_cast<double>(m);
      double var = 0.0;
      for (int64_t j = 0; j < m; ++j) {
        const double dlt = xv[base + j] - mu;
        var += dlt * dlt;
      }
      var /= static_cast<double>(m);
      const float rstd = static_cast<float>(1.0 / std::sqrt(var + eps));
      stats->mean[i * groups + gi] = static_cast<float>(mu);
      stats->rstd[i * groups + gi] = rstd;
      for (int64_t ch = 0; ch < cpg; ++ch) {
        const int64_t cc = gi * cpg + ch;
        const float* src = xv.ptr() + base + ch * s;
        float* dst = out.ptr() + base + ch * s;
        for (int64_t j = 0; j < s; ++j) {
          dst[j] = (src[j] - static_cast<float>(mu)) * rstd * gamma[cc] + beta[cc];
        }
      }
    }
  }
  const int ix = input.id, ig = scale_v.id, ibt = shift_v.id;
  return tape_of(input).record(
      std::move(out), {input, scale_v, shift_v},
      [ix, ig, ibt, n, c, s, groups, cpg, m, stats](Tape& t, const NdArray& g, const NdArray&) {
        const NdArray& x = t.value(ix);
        const float* gamma2 = t.value(ig).ptr();
        NdArray* gx = t.grad_sink(ix);
        NdArray* gg = t.grad_sink(ig);
        NdArray* gbt = t.grad_sink(ibt);
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t gi = 0; gi < groups; ++gi) {
            const int64_t base = (i * c + gi * cpg) * s;
            const float mu = stats->mean[i * groups + gi];
            const float rstd = stats->rstd[i * groups + gi];
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int64_t ch = 0; ch < cpg; ++ch) {
              const int64_t cc = gi * cpg + ch;
              double dg = 0.0, db = 0.0;
              for (int64_t j = 0; j < s; ++j) {
                const int64_t k = base + ch * s + j;
                const float xhat = (x[k] - mu) * rstd;
                const float dxhat = g[k] * gamma2[cc];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += static_cast<double>(dxhat) * xhat;
                dg += static_cast<double>(g[k]) * xhat;
                db += g[k];
              }
              if (gg) (*gg)[cc] += static_cast<float>(dg);
              if (gbt) (*gbt)[cc] += static_cast<float>(db);
            }
            if (!gx) continue;
            const float mean_dxhat = static_cast<float>(sum_dxhat / static_cast<double>(m));
            const float mean_dxhat_xhat = static_cast<float>(sum_dxhat_xhat / static_cast<double>(m));
            for (int64_t ch = 0; ch < cpg; ++ch) {
              const int64_t cc = gi * cpg + ch;
              for (int64_t j = 0; j < s; ++j) {
                const int64_t k = base + ch * s + j;
                const float xhat = (x[k] - mu) * rstd;
                const float dxhat = g[k] * gamma2[cc];
                (*gx)[k] += rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
              }
            }
          }
        }
      });
}

Var group_norm_swish(Var input, Var scale_v, Var shift_v, int groups, float eps) {
  return swish(group_norm(input, scale_v, shift_v, groups, eps));
}

Var layer_norm(Var input, Var scale_v, Var shift_v, float eps) {
  const NdArray& xv = input.value();
  const int64_t w = xv.dim(-1);
  if (scale_v.value().size() != w || shift_v.value().size() != w) {
    throw DimensionError("layer_norm: scale/shift must have " + std::to_string(w) + " entries");
  }
  const int64_t rows = xv.size() / w;
  auto stats = std::make_shared<NormStats>();
  stats->mean.resize(static_cast<size_t>(rows));
  stats->rstd.resize(static_cast<size_t>(rows));
  NdArray out(xv.shape());
  const float* gamma = scale_v.value().ptr();
  const float* beta = shift_v.value().ptr();
  for (int64_t r = 0; r < rows; ++r) {
    const float* src = xv.ptr() + r * w;
    double acc = 0.0;
    for (int64_t j = 0; j < w; ++j) acc += src[j];
    const double mu = acc / static_cast<double>(w);
    double var = 0.0;
    for (int64_t j = 0; j < w; ++j) var += (src[j] - mu) * (src[j] - mu);
    var /= static_cast<double>(w);
    const float rstd = static_cast<float>(1.0 / std::sqrt(var + eps));
    stats->mean[r] = static_cast<float>(mu);
    stats->rstd[r] = rstd;
    float* dst = out.ptr() + r * w;
    for (int64_t j = 0; j < w; ++j) dst[j] = (src[j] - static_cast<float>(mu)) * rstd * gamma[j] + beta[j];
  }
  const int ix = input.id, ig = scale_v.id, ibt = shift_v.id;
  return tape_of(input).record(
      std::move(out), {input, scale_v, shift_v}, [ix, ig, ibt, rows, w, stats](Tape& t, const NdArray& g, const NdArray&) {
        const NdArray& x = t.value(ix);
        const float* gamma2 = t.value(ig).ptr();
        NdArray* gx = t.grad_sink(ix);
        NdArray* gg = t.grad_sink(ig);
        NdArray* gbt = t.grad_sink(ibt);
        for (int64_t r = 0; r < rows; ++r) {
          const float mu = stats->mean[r], rstd = stats->rstd[r];
          const float* xr = x.ptr() + r * w;
          const float* gr = g.ptr() + r * w;
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int64_t j = 0; j < w; ++j) {
            const float xhat = (xr[j] - mu) * rstd;
            const float dxhat = gr[j] * gamma2[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += static_cast<double>(dxhat) * xhat;
            if (gg) (*gg)[j] += gr[j] * xhat;
            if (gbt) (*gbt)[j] += gr[j];
          }
          if (!gx) continue;
          const float mean_dxhat = static_cast<float>(sum_dxhat / static_cast<double>(w));
          const float mean_dxhat_xhat = static_cast<float>(sum_dxhat_xhat / static_cast<double>(w));
          float* dst = gx->ptr() + r * w;
          for (int64_t j = 0; j < w; ++j) {
            const float xhat = (xr[j] - mu) * rstd;
            dst[j] += rstd * (gr[j] * gamma2[j] - mean_dxhat - xhat * mean_dxhat_xhat);
          }
        }
      });
}

Var attention(Var q, Var k, Var v, int heads, const NdArray* mask) {
  require_same_shape("attention q/k", q, k);
  require_same_shape("attention q/v", q, v);
  const NdArray& qv = q.value();
  if (qv.rank() != 2 && qv.rank() != 3) {
    throw DimensionError("attention: inputs must be [T, H*dk] or [B, T, H*dk], got " + shape_str(qv.shape()));
  }
  const int64_t b = qv.rank() == 3 ? qv.dim(0) : 1;
  const int64_t tl = qv.dim(-2);
  const int64_t hidden = qv.dim(-1);
  if (heads < 1 || hidden % heads != 0) {
    throw ConfigError("attention: hidden size " + std::to_string(hidden) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (mask && (mask->rank() != 2 || mask->dim(0) != tl || mask->dim(1) != tl)) {
    throw DimensionError("attention: mask must be [" + std::to_string(tl) + ", " + std::to_string(tl) + "]");
  }
  const int64_t dk = hidden / heads;
  const float sc = 1.0f / std::sqrt(static_cast<float>(dk));
  auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(b * heads * tl * tl), 0.0f);
  NdArray out(qv.shape());
  MatR qh(tl, dk), kh(tl, dk), vh(tl, dk), sm(tl, tl), oh(tl, dk);
  auto gather = [&](const NdArray& src, int64_t bi, int64_t hi, MatR& dst) {
    for (int64_t r = 0; r < tl; ++r) std::copy_n(src.ptr() + (bi * tl + r) * hidden + hi * dk, dk, dst.data() + r * dk);
  };
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t hi = 0; hi < heads; ++hi) {
      gather(qv, bi, hi, qh);
      gather(k.value(), bi, hi, kh);
      gather(v.value(), bi, hi, vh);
      sm.noalias() = qh * kh.transpose();
      float* pbase = probs->data() + (bi * heads + hi) * tl * tl;
      for (int64_t r = 0; r < tl; ++r) {
        float* srow = sm.data() + r * tl;
        float* prow = pbase + r * tl;
        float mx = -std::numeric_limits<float>::infinity();
        bool any = false;
        for (int64_t c = 0; c < tl; ++c) {
          if (mask && is_masked((*mask)[r * tl + c])) continue;
          const float val = srow[c] * sc + (mask ? (*mask)[r * tl + c] : 0.0f);
          if (!std::isfinite(val)) throw NumericError("attention: non-finite logit at row " + std::to_string(r));
          srow[c] = val;
          mx = std::max(mx, val);
          any = true;
        }
        if (!any) throw NumericError("attention: fully masked row " + std::to_string(r));
        double z = 0.0;
        for (int64_t c = 0; c < tl; ++c) {
          if (mask && is_masked((*mask)[r * tl + c])) continue;
          const float e = std::exp(srow[c] - mx);
          prow[c] = e;
          z += e;
        }
        const float inv = static_cast<float>(1.0 / z);
        for (int64_t c = 0; c < tl; ++c) prow[c] *= inv;
      }
      oh.noalias() = CMapR(pbase, tl, tl) * vh;
      for (int64_t r = 0; r < tl; ++r) std::copy_n(oh.data() + r * dk, dk, out.ptr() + (bi * tl + r) * hidden + hi * dk);
    }
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return tape_of(q).record(
      std::move(out), {q, k, v}, [iq, ik, iv, b, tl, hidden, heads, dk, sc, probs](Tape& t, const NdArray& g, const NdArray&) {
        NdArray* gq = t.grad_sink(iq);
        NdArray* gk = t.grad_sink(ik);
        NdArray* gv = t.grad_sink(iv);
        MatR qh(tl, dk), kh(tl, dk), vh(tl, dk), go(tl, dk), dp(tl, tl), ds(tl, tl), tmp(tl, dk);
        auto gather = [&](const float* src, int64_t bi, int64_t hi, MatR& dst) {
          for (int64_t r = 0; r < tl; ++r) std::copy_n(src + (bi * tl + r) * hidden + hi * dk, dk, dst.data() + r * dk);
        };
        auto scatter_add = [&](const MatR& src, int64_t bi, int64_t hi, NdArray* dst) {
          for (int64_t r = 0; r < tl; ++r) {
            float* d = dst->ptr() + (bi * tl + r) * hidden + hi * dk;
            for (int64_t j = 0; j < dk; ++j) d[j] += src(r, j);
          }
        };
        for (int64_t bi = 0; bi < b; ++bi) {
          for (int64_t hi = 0; hi < heads; ++hi) {
            gather(t.value(iq).ptr(), bi, hi, qh);
            gather(t.value(ik).ptr(), bi, hi, kh);
            gather(t.value(iv).ptr(), bi, hi, vh);
            gather(g.ptr(), bi, hi, go);
            CMapR p(probs->data() + (bi * heads + hi) * tl * tl, tl, tl);
            if (gv) {
              tmp.noalias() = p.transpose() * go;
              scatter_add(tmp, bi, hi, gv);
            }
            dp.noalias() = go * vh.transpose();
            for (int64_t r = 0; r < tl; ++r) {
              double dot = 0.0;
              for (int64_t c = 0; c < tl; ++c) dot += static_cast<double>(dp(r, c)) * p(r, c);
              const float fdot = static_cast<float>(dot);
              for (int64_t c = 0; c < tl; ++c) ds(r, c) = p(r, c) * (dp(r, c) - fdot) * sc;
            }
            if (gq) {
              tmp.noalias() = ds * kh;
              scatter_add(tmp, bi, hi, gq);
            }
            if (gk) {
              tmp.noalias() = ds.transpose() * qh;
              scatter_add(tmp, bi, hi, gk);
            }
          }
        }
      });
}

Var softmax_cross_entropy(Var logits, const std::vector<int32_t>& targets) {
  const NdArray& lv = logits.value();
  if (lv.rank() != 2) throw DimensionError("softmax_cross_entropy: logits must be [N, K], got " + shape_str(lv.shape()));
  const int64_t n = lv.dim(0), kk = lv.dim(1);
  if (static_cast<int64_t>(targets.size()) != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " rows");
  }
  auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(n * kk));
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const int32_t tgt = targets[static_cast<size_t>(i)];
    if (tgt < 0 || tgt >= kk) {
      throw IndexError("softmax_cross_entropy: target " + std::to_string(tgt) + " outside [0, " + std::to_string(kk) + ")");
    }
    const float* row = lv.ptr() + i * kk;
    float mx = row[0];
    for (int64_t j = 1; j < kk; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < kk; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double logz = std::log(z) + mx;
    total += logz - row[tgt];
    for (int64_t j = 0; j < kk; ++j) (*probs)[i * kk + j] = static_cast<float>(std::exp(row[j] - logz));
  }
  const float loss = static_cast<float>(total / static_cast<double>(n));
  const int il = logits.id;
  return tape_of(logits).record(NdArray::scalar(loss), {logits},
                                [il, n, kk, probs, targets](Tape& t, const NdArray& g, const NdArray&) {
                                  NdArray* gl = t.grad_sink(il);
                                  const float f = g[0] / static_cast<float>(n);
                                  for (int64_t i = 0; i < n; ++i) {
                                    for (int64_t j = 0; j < kk; ++j) {
                                      const float onehot = (j == targets[static_cast<size_t>(i)]) ? 1.0f : 0.0f;
                                      (*gl)[i * kk + j] += f * ((*probs)[i * kk + j] - onehot);
                                    }
                                  }
                                });
}

Var mse(Var a, Var b) {
  require_same_shape("mse", a, b);
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  double acc = 0.0;
  for (int64_t i = 0; i < av.size(); ++i) {
    const double dlt = static_cast<double>(av[i]) - bv[i];
    acc += dlt * dlt;
  }
  const int64_t n = av.size();
  const int ia = a.id, ib = b.id;
  return tape_of(a).record(NdArray::scalar(static_cast<float>(acc / static_cast<double>(n))), {a, b},
                           [ia, ib, n](Tape& t, const NdArray& g, const NdArray&) {
                             const NdArray& av2 = t.value(ia);
                             const NdArray& bv2 = t.value(ib);
                             const float f = 2.0f * g[0] / static_cast<float>(n);
                             NdArray* ga = t.grad_sink(ia);
                             NdArray* gb = t.grad_sink(ib);
                             for (int64_t i = 0; i < n; ++i) {
                               const float dlt = av2[i] - bv2[i];
                               if (ga) (*ga)[i] += f * dlt;
                               if (gb) (*gb)[i] -= f * dlt;
                             }
                           });
}

Var l1(Var a, Var b) {
  require_same_shape("l1", a, b);
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  double acc = 0.0;
  for (int64_t i = 0; i < av.size(); ++i) acc += std::abs(static_cast<double>(av[i]) - bv[i]);
  const int64_t n = av.size();
  const int ia = a.id, ib = b.id;
  return tape_of(a).record(NdArray::scalar(static_cast<float>(acc / static_cast<double>(n))), {a, b},
                           [ia, ib, n](Tape& t, const NdArray& g, const NdArray&) {
                             const NdArray& av2 = t.value(ia);
                             const NdArray& bv2 = t.value(ib);
                             const float f = g[0] / static_cast<float>(n);
                             NdArray* ga = t.grad_sink(ia);
                             NdArray* gb = t.grad_sink(ib);
                             for (int64_t i = 0; i < n; ++i) {
                               const float dlt = av2[i] - bv2[i];
                               const float sgn = dlt > 0.0f ? 1.0f : (dlt < 0.0f ? -1.0f : 0.0f);
                               if (ga) (*ga)[i] += f * sgn;
                               if (gb) (*gb)[i] -= f * sgn;
                             }
                           });
}

Var sum(Var a) {
  double acc = 0.0;
  for (float x : a.value().data()) acc += x;
  const int ia = a.id;
  return tape_of(a).record(NdArray::scalar(static_cast<float>(acc)), {a},
                           [ia](Tape& t, const NdArray& g, const NdArray&) {
                             NdArray* ga = t.grad_sink(ia);
                             for (float& x : ga->data()) x += g[0];
                           });
}

NdArray causal_mask(int64_t length) {
  NdArray m(Shape{length, length}, 0.0f);
  for (int64_t r = 0; r < length; ++r) {
    for (int64_t c = r + 1; c < length; ++c) m[r * length + c] = kMaskedLogit;
  }
  return m;
}

std::vector<double> softmax_row(std::span<const float> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  double mx = logits[0];
  for (float x : logits) mx = std::max(mx, static_cast<double>(x));
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

}  // namespace voxprior::diff
