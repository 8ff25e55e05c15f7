#include "sfocda/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace sfocda {

namespace {

std::atomic<uint64_t> g_next_id{1};

std::shared_ptr<detail::Node> new_node(const Shape4& s) {
  auto n = std::make_shared<detail::Node>();
  n->shape = s;
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
}

bool any_requires(const std::vector<Tensor>& ts) {
  for (const auto& t : ts)
    if (t.defined() && t.requires_grad()) return true;
  return false;
}

}  // namespace

std::string Shape4::str() const {
  std::ostringstream os;
  os << "[" << n << "," << c << "," << h << "," << w << "]";
  return os.str();
}

Tensor Tensor::zeros(const Shape4& s, bool requires_grad) {
  return full(s, 0.0f, requires_grad);
}

Tensor Tensor::full(const Shape4& s, float v, bool requires_grad) {
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0)
    throw ShapeError("tensor dims must be positive, got " + s.str());
  auto n = new_node(s);
  n->value.assign(static_cast<size_t>(s.numel()), v);
  n->requires_grad = requires_grad;
  return wrap(n);
}

Tensor Tensor::from_data(const Shape4& s, std::vector<float> data,
                         bool requires_grad) {
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0)
    throw ShapeError("tensor dims must be positive, got " + s.str());
  if (static_cast<int64_t>(data.size()) != s.numel())
    throw ShapeError("from_data: " + std::to_string(data.size()) +
                     " values for shape " + s.str());
  auto n = new_node(s);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return wrap(n);
}

const Shape4& Tensor::shape() const {
  if (!node_) throw ContractError("undefined tensor");
  return node_->shape;
}

int64_t Tensor::numel() const { return shape().numel(); }

const std::vector<float>& Tensor::data() const {
  if (!node_) throw ContractError("undefined tensor");
  return node_->value;
}

std::vector<float>& Tensor::mutable_data() {
  if (!node_) throw ContractError("undefined tensor");
  if (!node_->parents.empty())
    throw ContractError("mutable_data: op outputs are immutable");
  return node_->value;
}

const std::vector<float>* Tensor::grad() const {
  if (!node_) throw ContractError("undefined tensor");
  return node_->grad.empty() ? nullptr : &node_->grad;
}

std::vector<float>& Tensor::grad_buffer() {
  if (!node_) throw ContractError("undefined tensor");
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_) throw ContractError("undefined tensor");
  node_->grad.assign(node_->value.size(), 0.0f);
}

bool Tensor::requires_grad() const {
  if (!node_) throw ContractError("undefined tensor");
  return node_->requires_grad;
}

void Tensor::set_requires_grad(bool v) {
  if (!node_) throw ContractError("undefined tensor");
  if (!node_->parents.empty())
    throw ContractError("set_requires_grad: only valid on leaves");
  node_->requires_grad = v;
}

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor has more than one element");
  return node_->value[0];
}

Tensor Tensor::clone() const {
  if (!node_) throw ContractError("undefined tensor");
  auto n = new_node(node_->shape);
  n->value = node_->value;
  n->requires_grad = node_->requires_grad;
  return wrap(n);
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor make_op_node(const Shape4& out_shape, std::vector<float> value,
                    const std::vector<Tensor>& parents,
                    std::function<void(detail::Node&)> backward_fn) {
  if (static_cast<int64_t>(value.size()) != out_shape.numel())
    throw ShapeError("make_op_node: value size does not match " +
                     out_shape.str());
  auto n = new_node(out_shape);
  n->value = std::move(value);
  n->requires_grad = any_requires(parents);
  n->parents.reserve(parents.size());
  for (const auto& p : parents) n->parents.push_back(p.node());
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return Tensor::wrap(n);
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return make_op_node(a.shape(), std::move(out), {a, b},
                      [](detail::Node& self) {
                        for (int k = 0; k < 2; ++k) {
                          auto& p = *self.parents[k];
                          if (!p.requires_grad) continue;
                          p.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            p.grad[i] += self.grad[i];
                        }
                      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return make_op_node(a.shape(), std::move(out), {a, b},
                      [](detail::Node& self) {
                        auto& pa = *self.parents[0];
                        if (pa.requires_grad) {
                          pa.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            pa.grad[i] += self.grad[i];
                        }
                        auto& pb = *self.parents[1];
                        if (pb.requires_grad) {
                          pb.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            pb.grad[i] -= self.grad[i];
                        }
                      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return make_op_node(a.shape(), std::move(out), {a, b},
                      [](detail::Node& self) {
                        auto& pa = *self.parents[0];
                        auto& pb = *self.parents[1];
                        if (pa.requires_grad) {
                          pa.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            pa.grad[i] += self.grad[i] * pb.value[i];
                        }
                        if (pb.requires_grad) {
                          pb.ensure_grad();
                          for (size_t i = 0; i < self.grad.size(); ++i)
                            pb.grad[i] += self.grad[i] * pa.value[i];
                        }
                      });
}

Tensor scale(const Tensor& a, float s) {
  const auto& av = a.data();
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
  return make_op_node(a.shape(), std::move(out), {a},
                      [s](detail::Node& self) {
                        auto& p = *self.parents[0];
                        if (!p.requires_grad) return;
                        p.ensure_grad();
                        for (size_t i = 0; i < self.grad.size(); ++i)
                          p.grad[i] += self.grad[i] * s;
                      });
}

Tensor relu(const Tensor& a) {
  const auto& av = a.data();
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0f ? av[i] : 0.0f;
  return make_op_node(a.shape(), std::move(out), {a},
                      [](detail::Node& self) {
                        auto& p = *self.parents[0];
                        if (!p.requires_grad) return;
                        p.ensure_grad();
                        for (size_t i = 0; i < self.grad.size(); ++i)
                          if (p.value[i] > 0.0f) p.grad[i] += self.grad[i];
                      });
}

// ---- convolution ----

namespace {

// C[m,:] += sum_k A[m,k] * B[k,:], k strictly ascending per output element
// so float rounding is identical on every run. Four chained FMAs per k-block
// keep the inner loop wide enough to vectorize over n.
void gemm_axpy(int64_t M, int64_t K, int64_t N, const float* A, const float* B,
               float* C) {
  for (int64_t m = 0; m < M; ++m) {
    float* crow = C + m * N;
    const float* arow = A + m * K;
    int64_t k = 0;
    for (; k + 4 <= K; k += 4) {
      const float a0 = arow[k + 0];
      const float a1 = arow[k + 1];
      const float a2 = arow[k + 2];
      const float a3 = arow[k + 3];
      const float* b0 = B + (k + 0) * N;
      const float* b1 = B + (k + 1) * N;
      const float* b2 = B + (k + 2) * N;
      const float* b3 = B + (k + 3) * N;
      for (int64_t n = 0; n < N; ++n) {
        float acc = crow[n];
        acc = std::fma(a0, b0[n], acc);
        acc = std::fma(a1, b1[n], acc);
        acc = std::fma(a2, b2[n], acc);
        acc = std::fma(a3, b3[n], acc);
        crow[n] = acc;
      }
    }
    for (; k < K; ++k) {
      const float a0 = arow[k];
      const float* b0 = B + k * N;
      for (int64_t n = 0; n < N; ++n)
        crow[n] = std::fma(a0, b0[n], crow[n]);
    }
  }
}

void transpose(int64_t M, int64_t N, const float* src, float* dst) {
  constexpr int64_t T = 32;
  for (int64_t m0 = 0; m0 < M; m0 += T)
    for (int64_t n0 = 0; n0 < N; n0 += T) {
      const int64_t m1 = std::min(m0 + T, M);
      const int64_t n1 = std::min(n0 + T, N);
      for (int64_t m = m0; m < m1; ++m)
        for (int64_t n = n0; n < n1; ++n) dst[n * M + m] = src[m * N + n];
    }
}

struct ConvGeom {
  int64_t ci, hi, wi, co, kh, kw, ho, wo;
  int stride, pad;
  int64_t patch() const { return ci * kh * kw; }
  int64_t area() const { return ho * wo; }
};

// col[k, n] layout: k = (ci, kh, kw), n = (oh, ow).
void im2col(const ConvGeom& g, const float* x, float* col) {
  for (int64_t ci = 0; ci < g.ci; ++ci) {
    const float* xc = x + ci * g.hi * g.wi;
    for (int64_t kh = 0; kh < g.kh; ++kh)
      for (int64_t kw = 0; kw < g.kw; ++kw) {
        float* crow = col + ((ci * g.kh + kh) * g.kw + kw) * g.area();
        for (int64_t oh = 0; oh < g.ho; ++oh) {
          const int64_t ih = oh * g.stride - g.pad + kh;
          float* dst = crow + oh * g.wo;
          if (ih < 0 || ih >= g.hi) {
            std::memset(dst, 0, sizeof(float) * g.wo);
            continue;
          }
          const float* srow = xc + ih * g.wi;
          if (g.stride == 1) {
            const int64_t iw0 = kw - g.pad;
            int64_t lo = std::max<int64_t>(0, -iw0);
            int64_t hi = std::min<int64_t>(g.wo, g.wi - iw0);
            if (hi < lo) hi = lo;
            if (lo > 0) std::memset(dst, 0, sizeof(float) * lo);
            if (hi > lo)
              std::memcpy(dst + lo, srow + iw0 + lo, sizeof(float) * (hi - lo));
            if (hi < g.wo) std::memset(dst + hi, 0, sizeof(float) * (g.wo - hi));
          } else {
            for (int64_t ow = 0; ow < g.wo; ++ow) {
              const int64_t iw = ow * g.stride - g.pad + kw;
              dst[ow] = (iw >= 0 && iw < g.wi) ? srow[iw] : 0.0f;
            }
          }
        }
      }
  }
}

// Scatter-add of dcol back onto the input gradient, fixed (k, oh, ow) order.
void col2im_add(const ConvGeom& g, const float* dcol, float* dx) {
  for (int64_t ci = 0; ci < g.ci; ++ci) {
    float* xc = dx + ci * g.hi * g.wi;
    for (int64_t kh = 0; kh < g.kh; ++kh)
      for (int64_t kw = 0; kw < g.kw; ++kw) {
        const float* crow = dcol + ((ci * g.kh + kh) * g.kw + kw) * g.area();
        for (int64_t oh = 0; oh < g.ho; ++oh) {
          const int64_t ih = oh * g.stride - g.pad + kh;
          if (ih < 0 || ih >= g.hi) continue;
          float* drow = xc + ih * g.wi;
          const float* srow = crow + oh * g.wo;
          if (g.stride == 1) {
            const int64_t iw0 = kw - g.pad;
            int64_t lo = std::max<int64_t>(0, -iw0);
            int64_t hi = std::min<int64_t>(g.wo, g.wi - iw0);
            for (int64_t ow = lo; ow < hi; ++ow) drow[iw0 + ow] += srow[ow];
          } else {
            for (int64_t ow = 0; ow < g.wo; ++ow) {
              const int64_t iw = ow * g.stride - g.pad + kw;
              if (iw >= 0 && iw < g.wi) drow[iw] += srow[ow];
            }
          }
        }
      }
  }
}

struct ConvScratch {
  std::vector<float> col, colt, wt, dcol;
};

ConvScratch& conv_scratch() {
  thread_local ConvScratch s;
  return s;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad) {
  const Shape4& xs = input.shape();
  const Shape4& ws = weight.shape();
  if (ws.c != xs.c)
    throw ShapeError("conv2d: weight expects " + std::to_string(ws.c) +
                     " input channels, got " + std::to_string(xs.c));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
  const bool has_bias = bias.defined();
  if (has_bias) {
    const Shape4& bs = bias.shape();
    if (bs.n != 1 || bs.c != ws.n || bs.h != 1 || bs.w != 1)
      throw ShapeError("conv2d: bias must be [1," + std::to_string(ws.n) +
                       ",1,1], got " + bs.str());
  }

  ConvGeom g;
  g.ci = xs.c;
  g.hi = xs.h;
  g.wi = xs.w;
  g.co = ws.n;
  g.kh = ws.h;
  g.kw = ws.w;
  g.stride = stride;
  g.pad = pad;
  g.ho = (xs.h + 2 * pad - ws.h) / stride + 1;
  g.wo = (xs.w + 2 * pad - ws.w) / stride + 1;
  if (xs.h + 2 * pad < ws.h || xs.w + 2 * pad < ws.w)
    throw ShapeError("conv2d: kernel larger than padded input");

  const Shape4 os{xs.n, g.co, g.ho, g.wo};
  std::vector<float> out(static_cast<size_t>(os.numel()));

  const int64_t K = g.patch();
  const int64_t A = g.area();
  auto& scratch = conv_scratch();
  scratch.col.resize(static_cast<size_t>(K * A));

  const float* xd = input.data().data();
  const float* wd = weight.data().data();
  const float* bd = has_bias ? bias.data().data() : nullptr;

  for (int64_t n = 0; n < xs.n; ++n) {
    im2col(g, xd + n * xs.c * xs.h * xs.w, scratch.col.data());
    float* od = out.data() + n * g.co * A;
    for (int64_t co = 0; co < g.co; ++co) {
      const float b = bd ? bd[co] : 0.0f;
      std::fill(od + co * A, od + (co + 1) * A, b);
    }
    gemm_axpy(g.co, K, A, wd, scratch.col.data(), od);
  }

  std::vector<Tensor> parents{input, weight};
  if (has_bias) parents.push_back(bias);

  auto backward_fn = [g, has_bias](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    detail::Node* pb = has_bias ? self.parents[2].get() : nullptr;
    const int64_t N = self.shape.n;
    const int64_t K = g.patch();
    const int64_t A = g.area();
    auto& scratch = conv_scratch();

    if (pb && pb->requires_grad) {
      pb->ensure_grad();
      for (int64_t co = 0; co < g.co; ++co) {
        double acc = 0.0;
        for (int64_t n = 0; n < N; ++n) {
          const float* gr = self.grad.data() + (n * g.co + co) * A;
          for (int64_t i = 0; i < A; ++i) acc += gr[i];
        }
        pb->grad[co] += static_cast<float>(acc);
      }
    }

    const bool need_w = pw.requires_grad;
    const bool need_x = px.requires_grad;
    if (!need_w && !need_x) return;

    if (need_w) {
      pw.ensure_grad();
      scratch.colt.resize(static_cast<size_t>(K * A));
    }
    if (need_x) {
      px.ensure_grad();
      scratch.wt.resize(static_cast<size_t>(K * g.co));
      scratch.dcol.assign(static_cast<size_t>(K * A), 0.0f);
      transpose(g.co, K, pw.value.data(), scratch.wt.data());
    }
    scratch.col.resize(static_cast<size_t>(K * A));

    for (int64_t n = 0; n < N; ++n) {
      const float* gr = self.grad.data() + n * g.co * A;
      if (need_w) {
        im2col(g, px.value.data() + n * g.ci * g.hi * g.wi, scratch.col.data());
        // dW[co,k] += sum_n' G[co,n'] colT[n',k]; the shared axpy kernel keeps
        // the n' reduction in ascending order.
        transpose(K, A, scratch.col.data(), scratch.colt.data());
        gemm_axpy(g.co, A, K, gr, scratch.colt.data(), pw.grad.data());
      }
      if (need_x) {
        std::fill(scratch.dcol.begin(), scratch.dcol.end(), 0.0f);
        gemm_axpy(K, g.co, A, scratch.wt.data(), gr, scratch.dcol.data());
        col2im_add(g, scratch.dcol.data(),
                   px.grad.data() + n * g.ci * g.hi * g.wi);
      }
    }
  };

  return make_op_node(os, std::move(out), parents, backward_fn);
}

// ---- pooling / upsampling ----

Tensor maxpool2d(const Tensor& input, int factor) {
  const Shape4& s = input.shape();
  if (factor < 1) throw ShapeError("maxpool2d: factor must be >= 1");
  if (s.h % factor != 0 || s.w % factor != 0)
    throw ShapeError("maxpool2d: " + s.str() + " not divisible by " +
                     std::to_string(factor));
  const int64_t ho = s.h / factor;
  const int64_t wo = s.w / factor;
  const Shape4 os{s.n, s.c, ho, wo};
  std::vector<float> out(static_cast<size_t>(os.numel()));
  auto argmax = std::make_shared<std::vector<int64_t>>(out.size());

  const auto& x = input.data();
  for (int64_t nc = 0; nc < s.n * s.c; ++nc) {
    const float* plane = x.data() + nc * s.h * s.w;
    float* oplane = out.data() + nc * ho * wo;
    int64_t* aplane = argmax->data() + nc * ho * wo;
    for (int64_t oh = 0; oh < ho; ++oh)
      for (int64_t ow = 0; ow < wo; ++ow) {
        int64_t best = (oh * factor) * s.w + ow * factor;
        float bv = plane[best];
        for (int64_t dh = 0; dh < factor; ++dh)
          for (int64_t dw = 0; dw < factor; ++dw) {
            const int64_t idx = (oh * factor + dh) * s.w + (ow * factor + dw);
            if (plane[idx] > bv) {  // strict: ties keep the lowest index
              bv = plane[idx];
              best = idx;
            }
          }
        oplane[oh * wo + ow] = bv;
        aplane[oh * wo + ow] = nc * s.h * s.w + best;
      }
  }

  return make_op_node(os, std::move(out), {input},
                      [argmax](detail::Node& self) {
                        auto& p = *self.parents[0];
                        if (!p.requires_grad) return;
                        p.ensure_grad();
                        for (size_t i = 0; i < self.grad.size(); ++i)
                          p.grad[(*argmax)[i]] += self.grad[i];
                      });
}

Tensor upsample_nearest(const Tensor& input, int factor) {
  const Shape4& s = input.shape();
  if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
  const Shape4 os{s.n, s.c, s.h * factor, s.w * factor};
  std::vector<float> out(static_cast<size_t>(os.numel()));
  const auto& x = input.data();
  for (int64_t nc = 0; nc < s.n * s.c; ++nc) {
    const float* plane = x.data() + nc * s.h * s.w;
    float* oplane = out.data() + nc * os.h * os.w;
    for (int64_t oh = 0; oh < os.h; ++oh) {
      const float* srow = plane + (oh / factor) * s.w;
      float* drow = oplane + oh * os.w;
      for (int64_t ow = 0; ow < os.w; ++ow) drow[ow] = srow[ow / factor];
    }
  }
  const int f = factor;
  return make_op_node(
      os, std::move(out), {input}, [f](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const Shape4& s = p.shape;
        const Shape4& os = self.shape;
        for (int64_t nc = 0; nc < s.n * s.c; ++nc) {
          float* gplane = p.grad.data() + nc * s.h * s.w;
          const float* oplane = self.grad.data() + nc * os.h * os.w;
          for (int64_t oh = 0; oh < os.h; ++oh) {
            float* grow = gplane + (oh / f) * s.w;
            const float* orow = oplane + oh * os.w;
            for (int64_t ow = 0; ow < os.w; ++ow) grow[ow / f] += orow[ow];
          }
        }
      });
}

// ---- softmax / reductions ----

Tensor softmax_channels(const Tensor& input) {
  const Shape4& s = input.shape();
  std::vector<float> out(input.data().size());
  const auto& x = input.data();
  const int64_t plane = s.h * s.w;
  for (int64_t n = 0; n < s.n; ++n) {
    const float* xb = x.data() + n * s.c * plane;
    float* ob = out.data() + n * s.c * plane;
    for (int64_t i = 0; i < plane; ++i) {
      float mx = xb[i];
      for (int64_t c = 1; c < s.c; ++c) mx = std::max(mx, xb[c * plane + i]);
      double denom = 0.0;
      for (int64_t c = 0; c < s.c; ++c) {
        const float e = std::exp(xb[c * plane + i] - mx);
        ob[c * plane + i] = e;
        denom += e;
      }
      const float inv = static_cast<float>(1.0 / denom);
      for (int64_t c = 0; c < s.c; ++c) ob[c * plane + i] *= inv;
    }
  }
  return make_op_node(
      s, std::move(out), {input}, [](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const Shape4& s = self.shape;
        const int64_t plane = s.h * s.w;
        for (int64_t n = 0; n < s.n; ++n) {
          const float* y = self.value.data() + n * s.c * plane;
          const float* gy = self.grad.data() + n * s.c * plane;
          float* gx = p.grad.data() + n * s.c * plane;
          for (int64_t i = 0; i < plane; ++i) {
            double dot = 0.0;
            for (int64_t c = 0; c < s.c; ++c)
              dot += static_cast<double>(gy[c * plane + i]) * y[c * plane + i];
            for (int64_t c = 0; c < s.c; ++c)
              gx[c * plane + i] += static_cast<float>(
                  y[c * plane + i] * (gy[c * plane + i] - dot));
          }
        }
      });
}

Tensor sum(const Tensor& a) {
  const auto& av = a.data();
  double acc = 0.0;
  for (float v : av) acc += v;
  return make_op_node(Shape4{1, 1, 1, 1}, {static_cast<float>(acc)}, {a},
                      [](detail::Node& self) {
                        auto& p = *self.parents[0];
                        if (!p.requires_grad) return;
                        p.ensure_grad();
                        const float g = self.grad[0];
                        for (size_t i = 0; i < p.grad.size(); ++i)
                          p.grad[i] += g;
                      });
}

// ---- backward ----

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward: undefined tensor");
  if (loss.numel() != 1)
    throw ContractError("backward: root must be a scalar, got " +
                        loss.shape().str());
  auto root = loss.node();
  if (!root->requires_grad) return;

  // Reachable requires-grad subgraph. Node ids increase at creation and
  // parents always predate children, so descending id is a topological order.
  std::unordered_set<detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> order;
  std::vector<std::shared_ptr<detail::Node>> stack{root};
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    order.push_back(n);
    for (auto& p : n->parents)
      if (p->requires_grad && !seen.count(p.get())) stack.push_back(p);
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->id > b->id; });

  // Interior grads are per-call scratch; leaf grads accumulate across calls.
  for (auto& n : order)
    if (!n->parents.empty()) n->grad.assign(n->value.size(), 0.0f);
  root->ensure_grad();
  root->grad[0] += 1.0f;

  for (auto& n : order)
    if (n->backward_fn) n->backward_fn(*n);
}

}  // namespace sfocda
