#include "kgcicam/graph.hpp"

#include <algorithm>
#include <cmath>

namespace kgcicam {

Graph::Id Graph::emit(Tensor val, bool needs_grad, std::function<void(Graph&)> back) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  if (needs_grad) n.grad = Tensor(n.val.shape());
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Graph::Id Graph::constant(Tensor t) { return emit(std::move(t), false, nullptr); }

Graph::Id Graph::leaf(Tensor t) { return emit(std::move(t), true, nullptr); }

void Graph::backward(Id root) {
  Node& r = nodes_[static_cast<size_t>(root)];
  if (r.val.numel() != 1) throw DimensionError("backward: root must be scalar");
  if (!r.needs_grad) return;
  r.grad[0] = 1.0;
  for (Id i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.needs_grad && n.back) n.back(*this);
  }
}

Graph::Id Graph::add(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw DimensionError("add: shape mismatch");
  Tensor out(ta.shape());
  for (long i = 0; i < ta.numel(); ++i) out[i] = ta[i] + tb[i];
  bool ng = tracked(a) || tracked(b);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, a, b](Graph& g) {
      const Tensor& go = g.grad(self);
      if (g.tracked(a)) {
        Tensor& ga = g.grad_mut(a);
        for (long i = 0; i < go.numel(); ++i) ga[i] += go[i];
      }
      if (g.tracked(b)) {
        Tensor& gb = g.grad_mut(b);
        for (long i = 0; i < go.numel(); ++i) gb[i] += go[i];
      }
    };
  }
  return self;
}

Graph::Id Graph::sub(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw DimensionError("sub: shape mismatch");
  Tensor out(ta.shape());
  for (long i = 0; i < ta.numel(); ++i) out[i] = ta[i] - tb[i];
  bool ng = tracked(a) || tracked(b);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, a, b](Graph& g) {
      const Tensor& go = g.grad(self);
      if (g.tracked(a)) {
        Tensor& ga = g.grad_mut(a);
        for (long i = 0; i < go.numel(); ++i) ga[i] += go[i];
      }
      if (g.tracked(b)) {
        Tensor& gb = g.grad_mut(b);
        for (long i = 0; i < go.numel(); ++i) gb[i] -= go[i];
      }
    };
  }
  return self;
}

Graph::Id Graph::mul(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw DimensionError("mul: shape mismatch");
  Tensor out(ta.shape());
  for (long i = 0; i < ta.numel(); ++i) out[i] = ta[i] * tb[i];
  bool ng = tracked(a) || tracked(b);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, a, b](Graph& g) {
      const Tensor& go = g.grad(self);
      const Tensor& ta = g.val(a);
      const Tensor& tb = g.val(b);
      if (g.tracked(a)) {
        Tensor& ga = g.grad_mut(a);
        for (long i = 0; i < go.numel(); ++i) ga[i] += go[i] * tb[i];
      }
      if (g.tracked(b)) {
        Tensor& gb = g.grad_mut(b);
        for (long i = 0; i < go.numel(); ++i) gb[i] += go[i] * ta[i];
      }
    };
  }
  return self;
}

Graph::Id Graph::scale(Id a, double c) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (long i = 0; i < ta.numel(); ++i) out[i] = c * ta[i];
  bool ng = tracked(a);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, a, c](Graph& g) {
      const Tensor& go = g.grad(self);
      Tensor& ga = g.grad_mut(a);
      for (long i = 0; i < go.numel(); ++i) ga[i] += c * go[i];
    };
  }
  return self;
}

Graph::Id Graph::relu(Id a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape());
  for (long i = 0; i < ta.numel(); ++i) out[i] = ta[i] > 0.0 ? ta[i] : 0.0;
  bool ng = tracked(a);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, a](Graph& g) {
      const Tensor& go = g.grad(self);
      const Tensor& ta = g.val(a);
      Tensor& ga = g.grad_mut(a);
      for (long i = 0; i < go.numel(); ++i)
        if (ta[i] > 0.0) ga[i] += go[i];
    };
  }
  return self;
}

Graph::Id Graph::conv2d(Id x, Id w, Id b, int stride, int pad) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  if (tx.rank() != 3 || tw.rank() != 4 || tb.rank() != 1)
    throw DimensionError("conv2d: bad ranks");
  int ci = tx.dim(0), hx = tx.dim(1), wx = tx.dim(2);
  int co = tw.dim(0), kh = tw.dim(2), kw = tw.dim(3);
  if (tw.dim(1) != ci || tb.dim(0) != co)
    throw DimensionError("conv2d: channel mismatch");
  int ho = (hx + 2 * pad - kh) / stride + 1;
  int wo = (wx + 2 * pad - kw) / stride + 1;
  Tensor out({co, ho, wo});
  const double* X = tx.data();
  const double* W = tw.data();
  double* O = out.data();
  for (int oc = 0; oc < co; ++oc) {
    double bias = tb[oc];
    for (int oh = 0; oh < ho; ++oh)
      for (int ow = 0; ow < wo; ++ow) O[(oc * ho + oh) * wo + ow] = bias;
    for (int ic = 0; ic < ci; ++ic) {
      const double* Wk = W + ((oc * ci + ic) * kh) * kw;
      const double* Xc = X + (static_cast<long>(ic) * hx) * wx;
      for (int oh = 0; oh < ho; ++oh) {
        double* Orow = O + (oc * ho + oh) * wo;
        for (int fh = 0; fh < kh; ++fh) {
          int ih = oh * stride - pad + fh;
          if (ih < 0 || ih >= hx) continue;
          const double* Xrow = Xc + ih * wx;
          const double* Wrow = Wk + fh * kw;
          for (int fw = 0; fw < kw; ++fw) {
            double wv = Wrow[fw];
            int base = -pad + fw;
            for (int ow = 0; ow < wo; ++ow) {
              int iw = ow * stride + base;
              if (iw < 0 || iw >= wx) continue;
              Orow[ow] += wv * Xrow[iw];
            }
          }
        }
      }
    }
  }
  bool ng = tracked(x) || tracked(w) || tracked(b);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, x, w, b, stride, pad, ci, hx, wx, co, kh, kw, ho,
                          wo](Graph& g) {
      const Tensor& go = g.grad(self);
      const double* GO = go.data();
      if (g.tracked(b)) {
        Tensor& gb = g.grad_mut(b);
        for (int oc = 0; oc < co; ++oc) {
          double s = 0.0;
          const double* Goc = GO + (static_cast<long>(oc) * ho) * wo;
          for (int i = 0; i < ho * wo; ++i) s += Goc[i];
          gb[oc] += s;
        }
      }
      if (g.tracked(w)) {
        Tensor& gw = g.grad_mut(w);
        const double* X = g.val(x).data();
        double* GW = gw.data();
        for (int oc = 0; oc < co; ++oc)
          for (int ic = 0; ic < ci; ++ic) {
            double* GWk = GW + ((oc * ci + ic) * kh) * kw;
            const double* Xc = X + (static_cast<long>(ic) * hx) * wx;
            for (int fh = 0; fh < kh; ++fh)
              for (int fw = 0; fw < kw; ++fw) {
                double s = 0.0;
                for (int oh = 0; oh < ho; ++oh) {
                  int ih = oh * stride - pad + fh;
                  if (ih < 0 || ih >= hx) continue;
                  const double* Xrow = Xc + ih * wx;
                  const double* Grow = GO + (oc * ho + oh) * wo;
                  for (int ow = 0; ow < wo; ++ow) {
                    int iw = ow * stride - pad + fw;
                    if (iw < 0 || iw >= wx) continue;
                    s += Grow[ow] * Xrow[iw];
                  }
                }
                GWk[fh * kw + fw] += s;
              }
          }
      }
      if (g.tracked(x)) {
        Tensor& gx = g.grad_mut(x);
        const double* W = g.val(w).data();
        double* GX = gx.data();
        for (int oc = 0; oc < co; ++oc)
          for (int ic = 0; ic < ci; ++ic) {
            const double* Wk = W + ((oc * ci + ic) * kh) * kw;
            double* GXc = GX + (static_cast<long>(ic) * hx) * wx;
            for (int oh = 0; oh < ho; ++oh) {
              const double* Grow = GO + (oc * ho + oh) * wo;
              for (int fh = 0; fh < kh; ++fh) {
                int ih = oh * stride - pad + fh;
                if (ih < 0 || ih >= hx) continue;
                double* GXrow = GXc + ih * wx;
                const double* Wrow = Wk + fh * kw;
                for (int fw = 0; fw < kw; ++fw) {
                  double wv = Wrow[fw];
                  int base = -pad + fw;
                  for (int ow = 0; ow < wo; ++ow) {
                    int iw = ow * stride + base;
                    if (iw < 0 || iw >= wx) continue;
                    GXrow[iw] += wv * Grow[ow];
                  }
                }
              }
            }
          }
      }
    };
  }
  return self;
}

Graph::Id Graph::gap(Id x) {
  const Tensor& tx = val(x);
  if (tx.rank() != 3) throw DimensionError("gap: expected rank-3 input");
  int d = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
  Tensor out({d});
  double inv = 1.0 / (h * w);
  for (int c = 0; c < d; ++c) {
    double s = 0.0;
    const double* p = tx.data() + static_cast<long>(c) * h * w;
    for (int i = 0; i < h * w; ++i) s += p[i];
    out[c] = s * inv;
  }
  bool ng = tracked(x);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, x, d, h, w, inv](Graph& g) {
      const Tensor& go = g.grad(self);
      Tensor& gx = g.grad_mut(x);
      for (int c = 0; c < d; ++c) {
        double gv = go[c] * inv;
        double* p = gx.data() + static_cast<long>(c) * h * w;
        for (int i = 0; i < h * w; ++i) p[i] += gv;
      }
    };
  }
  return self;
}

Graph::Id Graph::linear(Id x, Id w, Id b) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  if (tx.rank() != 1 || tw.rank() != 2 || tb.rank() != 1)
    throw DimensionError("linear: bad ranks");
  int d = tx.dim(0), n = tw.dim(0);
  if (tw.dim(1) != d || tb.dim(0) != n) throw DimensionError("linear: shape mismatch");
  Tensor out({n});
  for (int i = 0; i < n; ++i) {
    double s = tb[i];
    const double* wr = tw.data() + static_cast<long>(i) * d;
    for (int k = 0; k < d; ++k) s += wr[k] * tx[k];
    out[i] = s;
  }
  bool ng = tracked(x) || tracked(w) || tracked(b);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, x, w, b, d, n](Graph& g) {
      const Tensor& go = g.grad(self);
      const Tensor& tx = g.val(x);
      const Tensor& tw = g.val(w);
      if (g.tracked(b)) {
        Tensor& gb = g.grad_mut(b);
        for (int i = 0; i < n; ++i) gb[i] += go[i];
      }
      if (g.tracked(w)) {
        Tensor& gw = g.grad_mut(w);
        for (int i = 0; i < n; ++i) {
          double gv = go[i];
          double* wr = gw.data() + static_cast<long>(i) * d;
          for (int k = 0; k < d; ++k) wr[k] += gv * tx[k];
        }
      }
      if (g.tracked(x)) {
        Tensor& gx = g.grad_mut(x);
        for (int i = 0; i < n; ++i) {
          double gv = go[i];
          const double* wr = tw.data() + static_cast<long>(i) * d;
          for (int k = 0; k < d; ++k) gx[k] += gv * wr[k];
        }
      }
    };
  }
  return self;
}

Graph::Id Graph::channel_mix(Id x, Id w) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  if (tx.rank() != 3 || tw.rank() != 2) throw DimensionError("channel_mix: bad ranks");
  int d = tx.dim(0), h = tx.dim(1), wd = tx.dim(2);
  int n = tw.dim(0);
  if (tw.dim(1) != d) throw DimensionError("channel_mix: channel mismatch");
  int N = h * wd;
  Tensor out({n, h, wd});
  for (int i = 0; i < n; ++i) {
    double* orow = out.data() + static_cast<long>(i) * N;
    const double* wr = tw.data() + static_cast<long>(i) * d;
    for (int p = 0; p < N; ++p) orow[p] = 0.0;
    for (int k = 0; k < d; ++k) {
      double wv = wr[k];
      const double* xr = tx.data() + static_cast<long>(k) * N;
      for (int p = 0; p < N; ++p) orow[p] += wv * xr[p];
    }
  }
  bool ng = tracked(x) || tracked(w);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, x, w, d, n, N](Graph& g) {
      const Tensor& go = g.grad(self);
      const Tensor& tx = g.val(x);
      const Tensor& tw = g.val(w);
      if (g.tracked(w)) {
        Tensor& gw = g.grad_mut(w);
        for (int i = 0; i < n; ++i) {
          const double* gorow = go.data() + static_cast<long>(i) * N;
          double* gwr = gw.data() + static_cast<long>(i) * d;
          for (int k = 0; k < d; ++k) {
            const double* xr = tx.data() + static_cast<long>(k) * N;
            double s = 0.0;
            for (int p = 0; p < N; ++p) s += gorow[p] * xr[p];
            gwr[k] += s;
          }
        }
      }
      if (g.tracked(x)) {
        Tensor& gx = g.grad_mut(x);
        for (int i = 0; i < n; ++i) {
          const double* gorow = go.data() + static_cast<long>(i) * N;
          const double* wr = tw.data() + static_cast<long>(i) * d;
          for (int k = 0; k < d; ++k) {
            double wv = wr[k];
            double* gxr = gx.data() + static_cast<long>(k) * N;
            for (int p = 0; p < N; ++p) gxr[p] += wv * gorow[p];
          }
        }
      }
    };
  }
  return self;
}

Graph::Id Graph::matmul_tn(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(0) != tb.dim(0))
    throw DimensionError("matmul_tn: shape mismatch");
  int k = ta.dim(0), m = ta.dim(1), n = tb.dim(1);
  Tensor out({m, n});
  double* O = out.data();
  for (int kk = 0; kk < k; ++kk) {
    const double* ar = ta.data() + static_cast<long>(kk) * m;
    const double* br = tb.data() + static_cast<long>(kk) * n;
    for (int i = 0; i < m; ++i) {
      double av = ar[i];
      double* orow = O + static_cast<long>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * br[j];
    }
  }
  bool ng = tracked(a) || tracked(b);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, a, b, k, m, n](Graph& g) {
      const Tensor& go = g.grad(self);
      const Tensor& ta = g.val(a);
      const Tensor& tb = g.val(b);
      if (g.tracked(a)) {
        Tensor& ga = g.grad_mut(a);
        // ga[kk,i] += sum_j go[i,j] * b[kk,j]
        for (int kk = 0; kk < k; ++kk) {
          double* gar = ga.data() + static_cast<long>(kk) * m;
          const double* br = tb.data() + static_cast<long>(kk) * n;
          for (int i = 0; i < m; ++i) {
            const double* gorow = go.data() + static_cast<long>(i) * n;
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += gorow[j] * br[j];
            gar[i] += s;
          }
        }
      }
      if (g.tracked(b)) {
        Tensor& gb = g.grad_mut(b);
        // gb[kk,j] += sum_i a[kk,i] * go[i,j]
        for (int kk = 0; kk < k; ++kk) {
          const double* ar = ta.data() + static_cast<long>(kk) * m;
          double* gbr = gb.data() + static_cast<long>(kk) * n;
          for (int i = 0; i < m; ++i) {
            double av = ar[i];
            const double* gorow = go.data() + static_cast<long>(i) * n;
            for (int j = 0; j < n; ++j) gbr[j] += av * gorow[j];
          }
        }
      }
    };
  }
  return self;
}

Graph::Id Graph::matmul_nt(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(1))
    throw DimensionError("matmul_nt: shape mismatch");
  int m = ta.dim(0), k = ta.dim(1), n = tb.dim(0);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    const double* ar = ta.data() + static_cast<long>(i) * k;
    double* orow = out.data() + static_cast<long>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* br = tb.data() + static_cast<long>(j) * k;
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk) s += ar[kk] * br[kk];
      orow[j] = s;
    }
  }
  bool ng = tracked(a) || tracked(b);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, a, b, m, k, n](Graph& g) {
      const Tensor& go = g.grad(self);
      const Tensor& ta = g.val(a);
      const Tensor& tb = g.val(b);
      if (g.tracked(a)) {
        Tensor& ga = g.grad_mut(a);
        for (int i = 0; i < m; ++i) {
          const double* gorow = go.data() + static_cast<long>(i) * n;
          double* gar = ga.data() + static_cast<long>(i) * k;
          for (int j = 0; j < n; ++j) {
            double gv = gorow[j];
            const double* br = tb.data() + static_cast<long>(j) * k;
            for (int kk = 0; kk < k; ++kk) gar[kk] += gv * br[kk];
          }
        }
      }
      if (g.tracked(b)) {
        Tensor& gb = g.grad_mut(b);
        for (int i = 0; i < m; ++i) {
          const double* gorow = go.data() + static_cast<long>(i) * n;
          const double* ar = ta.data() + static_cast<long>(i) * k;
          for (int j = 0; j < n; ++j) {
            double gv = gorow[j];
            double* gbr = gb.data() + static_cast<long>(j) * k;
            for (int kk = 0; kk < k; ++kk) gbr[kk] += gv * ar[kk];
          }
        }
      }
    };
  }
  return self;
}

namespace {
// softmax over a contiguous block, returns nothing; out may alias in
void softmax_block(const double* in, double* out, int n, double inv_t) {
  double mx = in[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp((in[i] - mx) * inv_t);
    s += out[i];
  }
  double inv = 1.0 / s;
  for (int i = 0; i < n; ++i) out[i] *= inv;
}
}  // namespace

Graph::Id Graph::softmax_rows(Id a) {
  const Tensor& ta = val(a);
  if (ta.rank() != 2) throw DimensionError("softmax_rows: expected rank-2");
  int m = ta.dim(0), n = ta.dim(1);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    softmax_block(ta.data() + static_cast<long>(i) * n,
                  out.data() + static_cast<long>(i) * n, n, 1.0);
  bool ng = tracked(a);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, a, m, n](Graph& g) {
      const Tensor& go = g.grad(self);
      const Tensor& p = g.val(self);
      Tensor& ga = g.grad_mut(a);
      for (int i = 0; i < m; ++i) {
        const double* pr = p.data() + static_cast<long>(i) * n;
        const double* gr = go.data() + static_cast<long>(i) * n;
        double* gar = ga.data() + static_cast<long>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += gr[j] * pr[j];
        for (int j = 0; j < n; ++j) gar[j] += pr[j] * (gr[j] - dot);
      }
    };
  }
  return self;
}

Graph::Id Graph::reshape(Id a, std::vector<int> shape) {
  const Tensor& ta = val(a);
  if (Tensor::numel_of(shape) != ta.numel())
    throw DimensionError("reshape: element count mismatch");
  Tensor out(shape, std::vector<double>(ta.data(), ta.data() + ta.numel()));
  bool ng = tracked(a);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, a](Graph& g) {
      const Tensor& go = g.grad(self);
      Tensor& ga = g.grad_mut(a);
      for (long i = 0; i < go.numel(); ++i) ga[i] += go[i];
    };
  }
  return self;
}

Graph::Id Graph::softmax(Id z) {
  const Tensor& tz = val(z);
  if (tz.rank() != 1) throw DimensionError("softmax: expected vector");
  int n = tz.dim(0);
  Tensor out({n});
  softmax_block(tz.data(), out.data(), n, 1.0);
  bool ng = tracked(z);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, z, n](Graph& g) {
      const Tensor& go = g.grad(self);
      const Tensor& p = g.val(self);
      Tensor& gz = g.grad_mut(z);
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += go[j] * p[j];
      for (int j = 0; j < n; ++j) gz[j] += p[j] * (go[j] - dot);
    };
  }
  return self;
}

Graph::Id Graph::cross_entropy(Id logits, int label) {
  const Tensor& tz = val(logits);
  if (tz.rank() != 1) throw DimensionError("cross_entropy: expected logit vector");
  int n = tz.dim(0);
  if (label < 0 || label >= n) throw LabelError("cross_entropy: label out of range");
  double mx = tz[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, tz[i]);
  double lse = 0.0;
  for (int i = 0; i < n; ++i) lse += std::exp(tz[i] - mx);
  lse = mx + std::log(lse);
  Tensor out = Tensor::scalar(lse - tz[label]);
  bool ng = tracked(logits);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, logits, label, n](Graph& g) {
      double gv = g.grad(self)[0];
      const Tensor& tz = g.val(logits);
      Tensor& gz = g.grad_mut(logits);
      std::vector<double> p(static_cast<size_t>(n));
      softmax_block(tz.data(), p.data(), n, 1.0);
      for (int i = 0; i < n; ++i) gz[i] += gv * (p[i] - (i == label ? 1.0 : 0.0));
    };
  }
  return self;
}

Graph::Id Graph::ce_probs(Id probs, int label, double floor) {
  const Tensor& tp = val(probs);
  if (tp.rank() != 1) throw DimensionError("ce_probs: expected vector");
  int n = tp.dim(0);
  if (label < 0 || label >= n) throw LabelError("ce_probs: label out of range");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::max(tp[i], floor);
  double vy = std::max(tp[label], floor);
  Tensor out = Tensor::scalar(std::log(sum) - std::log(vy));
  bool ng = tracked(probs);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, probs, label, n, floor](Graph& g) {
      double gv = g.grad(self)[0];
      const Tensor& tp = g.val(probs);
      Tensor& gp = g.grad_mut(probs);
      double sum = 0.0;
      for (int i = 0; i < n; ++i) sum += std::max(tp[i], floor);
      double vy = std::max(tp[label], floor);
      for (int i = 0; i < n; ++i) {
        if (tp[i] <= floor) continue;
        double d = 1.0 / sum - (i == label ? 1.0 / vy : 0.0);
        gp[i] += gv * d;
      }
    };
  }
  return self;
}

Graph::Id Graph::kl_to_const(Id z, const Tensor& q_const, double temperature) {
  if (temperature <= 0.0) throw ConfigError("kl_to_const: temperature must be > 0");
  const Tensor& tz = val(z);
  if (tz.rank() != 1 || !tz.same_shape(q_const))
    throw DimensionError("kl_to_const: shape mismatch");
  int n = tz.dim(0);
  std::vector<double> p(static_cast<size_t>(n));
  softmax_block(tz.data(), p.data(), n, 1.0 / temperature);
  double loss = 0.0;
  for (int i = 0; i < n; ++i)
    loss += p[i] * (std::log(p[i]) - std::log(q_const[i]));
  Tensor out = Tensor::scalar(loss);
  bool ng = tracked(z);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    Tensor q = q_const;
    nodes_.back().back = [self, z, q, temperature, n, loss](Graph& g) {
      double gv = g.grad(self)[0];
      const Tensor& tz = g.val(z);
      Tensor& gz = g.grad_mut(z);
      std::vector<double> p(static_cast<size_t>(n));
      softmax_block(tz.data(), p.data(), n, 1.0 / temperature);
      for (int i = 0; i < n; ++i) {
        double ai = std::log(p[i]) - std::log(q[i]);
        gz[i] += gv * p[i] * (ai - loss) / temperature;
      }
    };
  }
  return self;
}

Graph::Id Graph::kl_from_const(Id z, const Tensor& q_const, double temperature) {
  if (temperature <= 0.0) throw ConfigError("kl_from_const: temperature must be > 0");
  const Tensor& tz = val(z);
  if (tz.rank() != 1 || !tz.same_shape(q_const))
    throw DimensionError("kl_from_const: shape mismatch");
  int n = tz.dim(0);
  std::vector<double> p(static_cast<size_t>(n));
  softmax_block(tz.data(), p.data(), n, 1.0 / temperature);
  double loss = 0.0;
  for (int i = 0; i < n; ++i)
    if (q_const[i] > 0.0) loss += q_const[i] * (std::log(q_const[i]) - std::log(p[i]));
  Tensor out = Tensor::scalar(loss);
  bool ng = tracked(z);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    Tensor q = q_const;
    nodes_.back().back = [self, z, q, temperature, n](Graph& g) {
      double gv = g.grad(self)[0];
      const Tensor& tz = g.val(z);
      Tensor& gz = g.grad_mut(z);
      std::vector<double> p(static_cast<size_t>(n));
      softmax_block(tz.data(), p.data(), n, 1.0 / temperature);
      for (int i = 0; i < n; ++i) gz[i] += gv * (p[i] - q[i]) / temperature;
    };
  }
  return self;
}

Graph::Id Graph::spatial_softmax(Id maps, double temperature) {
  if (temperature <= 0.0) throw ConfigError("spatial_softmax: temperature must be > 0");
  const Tensor& tm = val(maps);
  if (tm.rank() != 3) throw DimensionError("spatial_softmax: expected [n,h,w]");
  int n = tm.dim(0), N = tm.dim(1) * tm.dim(2);
  Tensor out(tm.shape());
  for (int i = 0; i < n; ++i)
    softmax_block(tm.data() + static_cast<long>(i) * N,
                  out.data() + static_cast<long>(i) * N, N, 1.0 / temperature);
  bool ng = tracked(maps);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, maps, n, N, temperature](Graph& g) {
      const Tensor& go = g.grad(self);
      const Tensor& p = g.val(self);
      Tensor& gm = g.grad_mut(maps);
      for (int i = 0; i < n; ++i) {
        const double* pr = p.data() + static_cast<long>(i) * N;
        const double* gr = go.data() + static_cast<long>(i) * N;
        double* gmr = gm.data() + static_cast<long>(i) * N;
        double dot = 0.0;
        for (int j = 0; j < N; ++j) dot += gr[j] * pr[j];
        double inv_t = 1.0 / temperature;
        for (int j = 0; j < N; ++j) gmr[j] += inv_t * pr[j] * (gr[j] - dot);
      }
    };
  }
  return self;
}

Graph::Id Graph::mse(Id a, Id b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw DimensionError("mse: shape mismatch");
  long N = ta.numel();
  double s = 0.0;
  for (long i = 0; i < N; ++i) {
    double d = ta[i] - tb[i];
    s += d * d;
  }
  Tensor out = Tensor::scalar(s / static_cast<double>(N));
  bool ng = tracked(a) || tracked(b);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, a, b, N](Graph& g) {
      double gv = g.grad(self)[0] * 2.0 / static_cast<double>(N);
      const Tensor& ta = g.val(a);
      const Tensor& tb = g.val(b);
      if (g.tracked(a)) {
        Tensor& ga = g.grad_mut(a);
        for (long i = 0; i < N; ++i) ga[i] += gv * (ta[i] - tb[i]);
      }
      if (g.tracked(b)) {
        Tensor& gb = g.grad_mut(b);
        for (long i = 0; i < N; ++i) gb[i] -= gv * (ta[i] - tb[i]);
      }
    };
  }
  return self;
}

Graph::Id Graph::mean_all(Id a) {
  const Tensor& ta = val(a);
  long N = ta.numel();
  double s = 0.0;
  for (long i = 0; i < N; ++i) s += ta[i];
  Tensor out = Tensor::scalar(s / static_cast<double>(N));
  bool ng = tracked(a);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    nodes_.back().back = [self, a, N](Graph& g) {
      double gv = g.grad(self)[0] / static_cast<double>(N);
      Tensor& ga = g.grad_mut(a);
      for (long i = 0; i < N; ++i) ga[i] += gv;
    };
  }
  return self;
}

Graph::Id Graph::normalize_minmax(Id a) {
  const Tensor& ta = val(a);
  long N = ta.numel();
  long imin = 0, imax = 0;
  for (long i = 1; i < N; ++i) {
    if (ta[i] < ta[imin]) imin = i;
    if (ta[i] > ta[imax]) imax = i;
  }
  double mn = ta[imin], mx = ta[imax];
  Tensor out(ta.shape());
  bool degenerate = !(mx > mn);
  if (!degenerate) {
    double inv = 1.0 / (mx - mn);
    for (long i = 0; i < N; ++i) out[i] = (ta[i] - mn) * inv;
  }
  bool ng = tracked(a);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng && !degenerate) {
    double inv = 1.0 / (mx - mn);
    nodes_.back().back = [self, a, N, imin, imax, inv](Graph& g) {
      const Tensor& go = g.grad(self);
      const Tensor& y = g.val(self);
      Tensor& ga = g.grad_mut(a);
      double gsum = 0.0, gysum = 0.0;
      for (long i = 0; i < N; ++i) {
        gsum += go[i];
        gysum += go[i] * y[i];
      }
      for (long i = 0; i < N; ++i) ga[i] += go[i] * inv;
      ga[imin] += (gysum - gsum) * inv;
      ga[imax] -= gysum * inv;
    };
  }
  return self;
}

Graph::Id Graph::weighted_map_sum(Id maps, const std::vector<double>& class_weights) {
  const Tensor& tm = val(maps);
  if (tm.rank() != 3) throw DimensionError("weighted_map_sum: expected [n,h,w]");
  int n = tm.dim(0), h = tm.dim(1), w = tm.dim(2);
  if (static_cast<int>(class_weights.size()) != n)
    throw DimensionError("weighted_map_sum: weight length mismatch");
  int N = h * w;
  Tensor out({h, w});
  for (int i = 0; i < n; ++i) {
    double wv = class_weights[static_cast<size_t>(i)];
    const double* mr = tm.data() + static_cast<long>(i) * N;
    for (int p = 0; p < N; ++p) out[p] += wv * mr[p];
  }
  bool ng = tracked(maps);
  Id self = emit(std::move(out), ng, nullptr);
  if (ng) {
    std::vector<double> cw = class_weights;
    nodes_.back().back = [self, maps, cw, n, N](Graph& g) {
      const Tensor& go = g.grad(self);
      Tensor& gm = g.grad_mut(maps);
      for (int i = 0; i < n; ++i) {
        double wv = cw[static_cast<size_t>(i)];
        double* gmr = gm.data() + static_cast<long>(i) * N;
        for (int p = 0; p < N; ++p) gmr[p] += wv * go[p];
      }
    };
  }
  return self;
}

Graph::Id Graph::weighted_sum_scalars(const std::vector<Id>& terms,
                                      const std::vector<double>& coeffs) {
  if (terms.size() != coeffs.size() || terms.empty())
    throw DimensionError("weighted_sum_scalars: bad arity");
  double s = 0.0;
  bool ng = false;
  for (size_t i = 0; i < terms.size(); ++i) {
    s += coeffs[i] * val(terms[i]).item();
    ng = ng || tracked(terms[i]);
  }
  Id self = emit(Tensor::scalar(s), ng, nullptr);
  if (ng) {
    std::vector<Id> ts = terms;
    std::vector<double> cs = coeffs;
    nodes_.back().back = [self, ts, cs](Graph& g) {
      double gv = g.grad(self)[0];
      for (size_t i = 0; i < ts.size(); ++i)
        if (g.tracked(ts[i])) g.grad_mut(ts[i])[0] += cs[i] * gv;
    };
  }
  return self;
}

}  // namespace kgcicam
