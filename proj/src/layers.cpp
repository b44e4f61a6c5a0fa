#include <algorithm>
#include <cmath>
#include <limits>

#include "ftcnn/error.hpp"
#include "ftcnn/nn.hpp"

namespace ftcnn::layers {

namespace {

// Output columns ox whose input column ox*stride + k - pad lies in [0, in).
struct Range {
  std::size_t lo;
  std::size_t hi;  // exclusive
};

Range validOutputs(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                   std::size_t pad) {
  // ox*stride + k >= pad  and  ox*stride + k - pad <= in - 1
  std::size_t lo = 0;
  if (k < pad) lo = (pad - k + stride - 1) / stride;
  const long long top = static_cast<long long>(in) - 1 + static_cast<long long>(pad) -
                        static_cast<long long>(k);
  if (top < 0) return {0, 0};
  std::size_t hi = std::min(out, static_cast<std::size_t>(top) / stride + 1);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

void requireRank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw InferenceError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                         shapeToString(t.shape()));
  }
}

}  // namespace

Tensor convForward(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                   std::size_t pad) {
  requireRank(x, 4, "convolution input");
  requireRank(w, 4, "convolution weights");
  const std::size_t batch = x.extent(0), cin = x.extent(1), h = x.extent(2), wd = x.extent(3);
  const std::size_t cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  if (w.extent(1) != cin || b.size() != cout) {
    throw InferenceError("convolution weights " + shapeToString(w.shape()) +
                         " do not match input " + shapeToString(x.shape()));
  }
  if (h + 2 * pad < kh || wd + 2 * pad < kw) throw InferenceError("convolution kernel too large");
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor y({batch, cout, oh, ow});
  const double* xd = x.data().data();
  const double* wdat = w.data().data();
  double* yd = y.data().data();

  std::vector<Range> colRanges(kw);
  for (std::size_t kx = 0; kx < kw; ++kx) colRanges[kx] = validOutputs(wd, ow, kx, stride, pad);
  std::vector<Range> rowRanges(kh);
  for (std::size_t ky = 0; ky < kh; ++ky) rowRanges[ky] = validOutputs(h, oh, ky, stride, pad);

  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < cout; ++oc) {
      double* yplane = yd + (n * cout + oc) * oh * ow;
      std::fill(yplane, yplane + oh * ow, b[oc]);
      for (std::size_t ic = 0; ic < cin; ++ic) {
        const double* xplane = xd + (n * cin + ic) * h * wd;
        const double* wk = wdat + (oc * cin + ic) * kh * kw;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const Range rr = rowRanges[ky];
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wv = wk[ky * kw + kx];
            const Range cr = colRanges[kx];
            for (std::size_t oy = rr.lo; oy < rr.hi; ++oy) {
              const double* xrow =
                  xplane + static_cast<std::ptrdiff_t>((oy * stride + ky - pad) * wd + kx) -
                  static_cast<std::ptrdiff_t>(pad);
              double* yrow = yplane + oy * ow;
              if (stride == 1) {
                for (std::size_t ox = cr.lo; ox < cr.hi; ++ox) yrow[ox] += wv * xrow[ox];
              } else {
                for (std::size_t ox = cr.lo; ox < cr.hi; ++ox) yrow[ox] += wv * xrow[ox * stride];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

void convBackward(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad,
                  const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db) {
  requireRank(x, 4, "convolution input");
  requireRank(dy, 4, "convolution output gradient");
  const std::size_t batch = x.extent(0), cin = x.extent(1), h = x.extent(2), wd = x.extent(3);
  const std::size_t cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  const std::size_t oh = dy.extent(2), ow = dy.extent(3);
  if (dy.extent(0) != batch || dy.extent(1) != cout) {
    throw InferenceError("convolution output gradient has the wrong shape");
  }
  if (dx && dx->shape() != x.shape()) *dx = Tensor(x.shape());
  if (dx) dx->fill(0.0);
  if (dw && dw->shape() != w.shape()) throw InferenceError("dw shape mismatch");
  if (db && db->size() != cout) throw InferenceError("db shape mismatch");

  const double* xd = x.data().data();
  const double* wdat = w.data().data();
  const double* dyd = dy.data().data();
  double* dxd = dx ? dx->data().data() : nullptr;
  double* dwd = dw ? dw->data().data() : nullptr;

  std::vector<Range> colRanges(kw);
  for (std::size_t kx = 0; kx < kw; ++kx) colRanges[kx] = validOutputs(wd, ow, kx, stride, pad);
  std::vector<Range> rowRanges(kh);
  for (std::size_t ky = 0; ky < kh; ++ky) rowRanges[ky] = validOutputs(h, oh, ky, stride, pad);

  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < cout; ++oc) {
      const double* dyplane = dyd + (n * cout + oc) * oh * ow;
      if (db) {
        double s = 0.0;
        for (std::size_t i = 0; i < oh * ow; ++i) s += dyplane[i];
        (*db)[oc] += s;
      }
      for (std::size_t ic = 0; ic < cin; ++ic) {
        const double* xplane = xd + (n * cin + ic) * h * wd;
        double* dxplane = dxd ? dxd + (n * cin + ic) * h * wd : nullptr;
        const std::size_t wbase = (oc * cin + ic) * kh * kw;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const Range rr = rowRanges[ky];
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wv = wdat[wbase + ky * kw + kx];
            const Range cr = colRanges[kx];
            double acc = 0.0;
            for (std::size_t oy = rr.lo; oy < rr.hi; ++oy) {
              const std::ptrdiff_t xoff =
                  static_cast<std::ptrdiff_t>((oy * stride + ky - pad) * wd + kx) -
                  static_cast<std::ptrdiff_t>(pad);
              const double* xrow = xplane + xoff;
              const double* dyrow = dyplane + oy * ow;
              if (stride == 1) {
                if (dwd) {
                  for (std::size_t ox = cr.lo; ox < cr.hi; ++ox) acc += dyrow[ox] * xrow[ox];
                }
                if (dxplane) {
                  double* dxrow = dxplane + xoff;
                  for (std::size_t ox = cr.lo; ox < cr.hi; ++ox) dxrow[ox] += wv * dyrow[ox];
                }
              } else {
                if (dwd) {
                  for (std::size_t ox = cr.lo; ox < cr.hi; ++ox) {
                    acc += dyrow[ox] * xrow[ox * stride];
                  }
                }
                if (dxplane) {
                  double* dxrow = dxplane + xoff;
                  for (std::size_t ox = cr.lo; ox < cr.hi; ++ox) {
                    dxrow[ox * stride] += wv * dyrow[ox];
                  }
                }
              }
            }
            if (dwd) dwd[wbase + ky * kw + kx] += acc;
          }
        }
      }
    }
  }
}

PoolResult maxPoolForward(const Tensor& x, Kernel kernel, std::size_t stride, std::size_t pad) {
  requireRank(x, 4, "max-pool input");
  const std::size_t batch = x.extent(0), c = x.extent(1), h = x.extent(2), wd = x.extent(3);
  if (h + 2 * pad < kernel.h || wd + 2 * pad < kernel.w || stride == 0) {
    throw InferenceError("max-pool window does not fit its input");
  }
  const std::size_t oh = (h + 2 * pad - kernel.h) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - kernel.w) / stride + 1;
  PoolResult r{Tensor({batch, c, oh, ow}), {}};
  r.argmax.resize(r.y.size());
  const double* xd = x.data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < batch * c; ++plane) {
    const std::size_t base = plane * h * wd;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t bestIdx = base;
        bool found = false;
        for (std::size_t ky = 0; ky < kernel.h; ++ky) {
          const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
          if (iy < 0 || iy >= static_cast<long long>(h)) continue;
          for (std::size_t kx = 0; kx < kernel.w; ++kx) {
            const long long ix =
                static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
            if (ix < 0 || ix >= static_cast<long long>(wd)) continue;
            const std::size_t idx = base + static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix);
            // Strict comparison: the first maximum in scan order wins ties.
            if (!found || xd[idx] > best) {
              best = xd[idx];
              bestIdx = idx;
              found = true;
            }
          }
        }
        r.y[o] = best;
        r.argmax[o] = bestIdx;
      }
    }
  }
  return r;
}

Tensor maxPoolBackward(const Shape& xShape, std::span<const std::size_t> argmax, const Tensor& dy) {
  if (argmax.size() != dy.size()) throw InferenceError("max-pool argmax/gradient size mismatch");
  Tensor dx(xShape);
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

Tensor denseForward(const Tensor& x, const Tensor& w, const Tensor& b) {
  requireRank(w, 2, "fully-connected weights");
  const std::size_t batch = x.extent(0);
  const std::size_t in = x.size() / batch;
  const std::size_t out = w.extent(0);
  if (w.extent(1) != in || b.size() != out) {
    throw InferenceError("fully-connected weights " + shapeToString(w.shape()) +
                         " do not match input " + shapeToString(x.shape()));
  }
  Tensor y({batch, out});
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xrow = xd + n * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wrow = wd + o * in;
      double s = 0.0;
      for (std::size_t i = 0; i < in; ++i) s += wrow[i] * xrow[i];
      y.at(n, o) = s + b[o];
    }
  }
  return y;
}

void denseBackward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw,
                   Tensor* db) {
  const std::size_t batch = x.extent(0);
  const std::size_t in = x.size() / batch;
  const std::size_t out = w.extent(0);
  if (dy.rank() != 2 || dy.extent(0) != batch || dy.extent(1) != out) {
    throw InferenceError("fully-connected output gradient has the wrong shape");
  }
  if (dx) *dx = Tensor(x.shape());
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xrow = xd + n * in;
    double* dxrow = dx ? dx->data().data() + n * in : nullptr;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dy.at(n, o);
      if (db) (*db)[o] += g;
      if (dw) {
        double* dwrow = dw->data().data() + o * in;
        for (std::size_t i = 0; i < in; ++i) dwrow[i] += g * xrow[i];
      }
      if (dxrow) {
        const double* wrow = wd + o * in;
        for (std::size_t i = 0; i < in; ++i) dxrow[i] += g * wrow[i];
      }
    }
  }
}

Tensor reluForward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor reluBackward(const Tensor& x, const Tensor& dy) {
  if (x.size() != dy.size()) throw InferenceError("relu gradient size mismatch");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

Tensor softmaxForward(const Tensor& logits) {
  requireRank(logits, 2, "softmax input");
  const std::size_t batch = logits.extent(0), classes = logits.extent(1);
  Tensor p(logits.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    double m = logits.at(n, 0);
    for (std::size_t c = 1; c < classes; ++c) m = std::max(m, logits.at(n, c));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = std::exp(logits.at(n, c) - m);
      p.at(n, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < classes; ++c) p.at(n, c) /= z;
  }
  return p;
}

Tensor softmaxBackward(const Tensor& probs, const Tensor& dprobs) {
  requireRank(probs, 2, "softmax output");
  if (probs.shape() != dprobs.shape()) throw InferenceError("softmax gradient shape mismatch");
  const std::size_t batch = probs.extent(0), classes = probs.extent(1);
  Tensor dz(probs.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    double dot = 0.0;
    for (std::size_t c = 0; c < classes; ++c) dot += probs.at(n, c) * dprobs.at(n, c);
    for (std::size_t c = 0; c < classes; ++c) {
      dz.at(n, c) = probs.at(n, c) * (dprobs.at(n, c) - dot);
    }
  }
  return dz;
}

}  // namespace ftcnn::layers
