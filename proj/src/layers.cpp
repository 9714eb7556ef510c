#include "pelfa/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pelfa/nn/gemm.hpp"

namespace pelfa::nn {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// col is (in_ch*k*k) x (out_h*out_w) for one batch item.
void im2col(const double* x, int ch, int h, int w, int k, int stride, int pad, int oh, int ow,
            double* col) {
    for (int c = 0; c < ch; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* dst = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) *
                                        (static_cast<std::size_t>(oh) * ow);
                const double* src = x + static_cast<std::size_t>(c) * h * w;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        std::memset(dst, 0, sizeof(double) * ow);
                        dst += ow;
                        continue;
                    }
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        *dst++ = (ix >= 0 && ix < w) ? src[static_cast<std::size_t>(iy) * w + ix]
                                                     : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, int ch, int h, int w, int k, int stride, int pad, int oh,
                int ow, double* x) {
    for (int c = 0; c < ch; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* src = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) *
                                              (static_cast<std::size_t>(oh) * ow);
                double* dst = x + static_cast<std::size_t>(c) * h * w;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        src += ow;
                        continue;
                    }
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[static_cast<std::size_t>(iy) * w + ix] += *src;
                        ++src;
                    }
                }
            }
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_c, int out_c, int k, int s, int p, bool bias_on)
    : in_ch(in_c),
      out_ch(out_c),
      ksize(k),
      stride(s),
      pad(p < 0 ? (k - 1) / 2 : p),
      has_bias(bias_on),
      weight({out_c, in_c * k * k}),
      bias({out_c}),
      gw({out_c, in_c * k * k}),
      gb({out_c}) {}

void Conv2d::init_he(Rng& rng) {
    const double std = std::sqrt(2.0 / (static_cast<double>(in_ch) * ksize * ksize));
    std::normal_distribution<double> dist(0.0, std);
    for (std::size_t i = 0; i < weight.size(); ++i) weight[i] = dist(rng);
    bias.fill(0.0);
}

Tensor Conv2d::forward(const Tensor& x) {
    require_feature_map(x, "Conv2d");
    if (x.dim(1) != in_ch)
        throw ContractViolation("Conv2d: input has " + std::to_string(x.dim(1)) +
                                " channels, layer expects " + std::to_string(in_ch));
    cached_x = x;
    const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = out_h(h), ow = out_w(w);
    if (oh < 1 || ow < 1) throw ContractViolation("Conv2d: input too small for kernel");
    Tensor y({b, out_ch, oh, ow});
    const int kk = in_ch * ksize * ksize;
    const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
    std::vector<double> col(static_cast<std::size_t>(kk) * ohw);
    for (int i = 0; i < b; ++i) {
        im2col(x.data() + static_cast<std::size_t>(i) * in_ch * h * w, in_ch, h, w, ksize, stride,
               pad, oh, ow, col.data());
        matmul(weight.data(), col.data(), y.data() + static_cast<std::size_t>(i) * out_ch * ohw,
               out_ch, kk, static_cast<int>(ohw));
    }
    if (has_bias) {
        for (int i = 0; i < b; ++i)
            for (int oc = 0; oc < out_ch; ++oc) {
                double* dst = y.data() + (static_cast<std::size_t>(i) * out_ch + oc) * ohw;
                const double bv = bias[oc];
                for (std::size_t j = 0; j < ohw; ++j) dst[j] += bv;
            }
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const Tensor& x = cached_x;
    const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = dy.dim(2), ow = dy.dim(3);
    const int kk = in_ch * ksize * ksize;
    const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
    Tensor dx(x.shape());
    std::vector<double> col(static_cast<std::size_t>(kk) * ohw);
    std::vector<double> dcol(static_cast<std::size_t>(kk) * ohw);
    for (int i = 0; i < b; ++i) {
        const double* dyb = dy.data() + static_cast<std::size_t>(i) * out_ch * ohw;
        im2col(x.data() + static_cast<std::size_t>(i) * in_ch * h * w, in_ch, h, w, ksize, stride,
               pad, oh, ow, col.data());
        // dW += dY_b * col_b^T
        matmul_bt(dyb, col.data(), gw.data(), out_ch, static_cast<int>(ohw), kk, true);
        // dcol = W^T * dY_b
        matmul_at(weight.data(), dyb, dcol.data(), kk, out_ch, static_cast<int>(ohw));
        col2im_add(dcol.data(), in_ch, h, w, ksize, stride, pad, oh, ow,
                   dx.data() + static_cast<std::size_t>(i) * in_ch * h * w);
        if (has_bias) {
            for (int oc = 0; oc < out_ch; ++oc) {
                const double* src = dyb + static_cast<std::size_t>(oc) * ohw;
                double s = 0.0;
                for (std::size_t j = 0; j < ohw; ++j) s += src[j];
                gb[oc] += s;
            }
        }
    }
    return dx;
}

void Conv2d::zero_grad() {
    gw.fill(0.0);
    gb.fill(0.0);
}

void Conv2d::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v({prefix + ".weight", &weight, &gw});
    if (has_bias) v({prefix + ".bias", &bias, &gb});
}

// ---------------------------------------------------------------------------
// DepthwiseConv3x3

DepthwiseConv3x3::DepthwiseConv3x3(int c)
    : ch(c), weight({c, 9}), bias({c}), gw({c, 9}), gb({c}) {}

void DepthwiseConv3x3::init_he(Rng& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / 9.0));
    for (std::size_t i = 0; i < weight.size(); ++i) weight[i] = dist(rng);
    bias.fill(0.0);
}

Tensor DepthwiseConv3x3::forward(const Tensor& x) {
    require_feature_map(x, "DepthwiseConv3x3");
    cached_x = x;
    const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
    Tensor y(x.shape());
    for (int i = 0; i < b; ++i) {
        for (int c = 0; c < ch; ++c) {
            const double* k = weight.data() + static_cast<std::size_t>(c) * 9;
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx) {
                    double s = bias[c];
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = yy + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = xx + kx - 1;
                            if (ix < 0 || ix >= w) continue;
                            s += k[ky * 3 + kx] * x.at(i, c, iy, ix);
                        }
                    }
                    y.at(i, c, yy, xx) = s;
                }
        }
    }
    return y;
}

Tensor DepthwiseConv3x3::backward(const Tensor& dy) {
    const Tensor& x = cached_x;
    const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
    Tensor dx(x.shape());
    for (int i = 0; i < b; ++i) {
        for (int c = 0; c < ch; ++c) {
            double* gk = gw.data() + static_cast<std::size_t>(c) * 9;
            const double* k = weight.data() + static_cast<std::size_t>(c) * 9;
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx) {
                    const double g = dy.at(i, c, yy, xx);
                    gb[c] += g;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = yy + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = xx + kx - 1;
                            if (ix < 0 || ix >= w) continue;
                            gk[ky * 3 + kx] += g * x.at(i, c, iy, ix);
                            dx.at(i, c, iy, ix) += g * k[ky * 3 + kx];
                        }
                    }
                }
        }
    }
    return dx;
}

void DepthwiseConv3x3::zero_grad() {
    gw.fill(0.0);
    gb.fill(0.0);
}

void DepthwiseConv3x3::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v({prefix + ".weight", &weight, &gw});
    v({prefix + ".bias", &bias, &gb});
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(int c)
    : ch(c),
      gamma({c}, 1.0),
      beta({c}),
      gg({c}),
      gb({c}),
      running_mean({c}),
      running_var({c}, 1.0) {}

Tensor BatchNorm2d::forward(const Tensor& x) {
    require_feature_map(x, "BatchNorm2d");
    const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const double n = static_cast<double>(b) * h * w;
    Tensor y(x.shape());
    xhat = Tensor(x.shape());
    batch_inv_std = Tensor({ch});
    for (int c = 0; c < ch; ++c) {
        double mean, var;
        if (training) {
            double s = 0.0;
            for (int i = 0; i < b; ++i) {
                const double* src = x.data() + (static_cast<std::size_t>(i) * ch + c) * hw;
                for (std::size_t j = 0; j < hw; ++j) s += src[j];
            }
            mean = s / n;
            double sq = 0.0;
            for (int i = 0; i < b; ++i) {
                const double* src = x.data() + (static_cast<std::size_t>(i) * ch + c) * hw;
                for (std::size_t j = 0; j < hw; ++j) {
                    const double d = src[j] - mean;
                    sq += d * d;
                }
            }
            var = sq / n;
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean;
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var;
        } else {
            mean = running_mean[c];
            var = running_var[c];
        }
        const double inv_std = 1.0 / std::sqrt(var + eps);
        batch_inv_std[c] = inv_std;
        const double g = gamma[c], bt = beta[c];
        for (int i = 0; i < b; ++i) {
            const double* src = x.data() + (static_cast<std::size_t>(i) * ch + c) * hw;
            double* xh = xhat.data() + (static_cast<std::size_t>(i) * ch + c) * hw;
            double* dst = y.data() + (static_cast<std::size_t>(i) * ch + c) * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                xh[j] = (src[j] - mean) * inv_std;
                dst[j] = g * xh[j] + bt;
            }
        }
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
    const int b = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const double n = static_cast<double>(b) * h * w;
    Tensor dx(dy.shape());
    for (int c = 0; c < ch; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int i = 0; i < b; ++i) {
            const double* g = dy.data() + (static_cast<std::size_t>(i) * ch + c) * hw;
            const double* xh = xhat.data() + (static_cast<std::size_t>(i) * ch + c) * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                sum_dy += g[j];
                sum_dy_xhat += g[j] * xh[j];
            }
        }
        gg[c] += sum_dy_xhat;
        gb[c] += sum_dy;
        const double gm = gamma[c], inv_std = batch_inv_std[c];
        for (int i = 0; i < b; ++i) {
            const double* g = dy.data() + (static_cast<std::size_t>(i) * ch + c) * hw;
            const double* xh = xhat.data() + (static_cast<std::size_t>(i) * ch + c) * hw;
            double* d = dx.data() + (static_cast<std::size_t>(i) * ch + c) * hw;
            if (training) {
                for (std::size_t j = 0; j < hw; ++j)
                    d[j] = gm * inv_std * (g[j] - sum_dy / n - xh[j] * sum_dy_xhat / n);
            } else {
                for (std::size_t j = 0; j < hw; ++j) d[j] = gm * inv_std * g[j];
            }
        }
    }
    return dx;
}

void BatchNorm2d::zero_grad() {
    gg.fill(0.0);
    gb.fill(0.0);
}

void BatchNorm2d::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v({prefix + ".gamma", &gamma, &gg});
    v({prefix + ".beta", &beta, &gb});
    // running stats carry no gradient but must persist through checkpoints
    v({prefix + ".running_mean", &running_mean, nullptr});
    v({prefix + ".running_var", &running_var, nullptr});
}

// ---------------------------------------------------------------------------
// LayerNormChannels

LayerNormChannels::LayerNormChannels(int c)
    : ch(c), gamma({c}, 1.0), beta({c}), gg({c}), gb({c}) {}

Tensor LayerNormChannels::forward(const Tensor& x) {
    require_feature_map(x, "LayerNormChannels");
    const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    Tensor y(x.shape());
    cached_xhat = Tensor(x.shape());
    cached_inv_std = Tensor({b, 1, h, w});
    for (int i = 0; i < b; ++i)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                double m = 0.0;
                for (int c = 0; c < ch; ++c) m += x.at(i, c, yy, xx);
                m /= ch;
                double var = 0.0;
                for (int c = 0; c < ch; ++c) {
                    const double d = x.at(i, c, yy, xx) - m;
                    var += d * d;
                }
                var /= ch;
                const double inv_std = 1.0 / std::sqrt(var + eps);
                cached_inv_std.at(i, 0, yy, xx) = inv_std;
                for (int c = 0; c < ch; ++c) {
                    const double xh = (x.at(i, c, yy, xx) - m) * inv_std;
                    cached_xhat.at(i, c, yy, xx) = xh;
                    y.at(i, c, yy, xx) = gamma[c] * xh + beta[c];
                }
            }
    (void)hw;
    return y;
}

Tensor LayerNormChannels::backward(const Tensor& dy) {
    const int b = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    Tensor dx(dy.shape());
    for (int i = 0; i < b; ++i)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                double sum_g = 0.0, sum_g_xhat = 0.0;
                for (int c = 0; c < ch; ++c) {
                    const double g = dy.at(i, c, yy, xx) * gamma[c];
                    sum_g += g;
                    sum_g_xhat += g * cached_xhat.at(i, c, yy, xx);
                }
                const double inv_std = cached_inv_std.at(i, 0, yy, xx);
                for (int c = 0; c < ch; ++c) {
                    const double g = dy.at(i, c, yy, xx) * gamma[c];
                    const double xh = cached_xhat.at(i, c, yy, xx);
                    dx.at(i, c, yy, xx) =
                        inv_std * (g - sum_g / ch - xh * sum_g_xhat / ch);
                    gg[c] += dy.at(i, c, yy, xx) * xh;
                    gb[c] += dy.at(i, c, yy, xx);
                }
            }
    return dx;
}

void LayerNormChannels::zero_grad() {
    gg.fill(0.0);
    gb.fill(0.0);
}

void LayerNormChannels::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v({prefix + ".gamma", &gamma, &gg});
    v({prefix + ".beta", &beta, &gb});
}

// ---------------------------------------------------------------------------
// Activations

Tensor Relu::forward(const Tensor& x) {
    cached_x = x;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Tensor Relu::backward(const Tensor& dy) const {
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = cached_x[i] > 0.0 ? dy[i] : 0.0;
    return dx;
}

Tensor Gelu::forward(const Tensor& x) {
    cached_x = x;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
    return y;
}

Tensor Gelu::backward(const Tensor& dy) const {
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) {
        const double v = cached_x[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx[i] = dy[i] * (cdf + v * pdf);
    }
    return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    cached_y = y;
    return y;
}

Tensor Sigmoid::backward(const Tensor& dy) const {
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * cached_y[i] * (1.0 - cached_y[i]);
    return dx;
}

// ---------------------------------------------------------------------------
// Pooling

Tensor MaxPool2x2::forward(const Tensor& x) {
    require_feature_map(x, "MaxPool2x2");
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h < 2 || w < 2) throw ContractViolation("MaxPool2x2: H and W must be >= 2");
    const int oh = h / 2, ow = w / 2;
    in_shape = x.shape();
    Tensor y({b, c, oh, ow});
    argmax.assign(y.size(), 0);
    std::size_t oidx = 0;
    for (int i = 0; i < b; ++i)
        for (int cc = 0; cc < c; ++cc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double best = -1e300;
                    std::int64_t best_idx = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx2 = 0; dx2 < 2; ++dx2) {
                            const int iy = oy * 2 + dy, ix = ox * 2 + dx2;
                            const std::int64_t idx =
                                ((static_cast<std::int64_t>(i) * c + cc) * h + iy) * w + ix;
                            const double v = x[static_cast<std::size_t>(idx)];
                            if (v > best) {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    y[oidx] = best;
                    argmax[oidx] = best_idx;
                    ++oidx;
                }
    return y;
}

Tensor MaxPool2x2::backward(const Tensor& dy) const {
    Tensor dx(in_shape);
    for (std::size_t i = 0; i < dy.size(); ++i)
        dx[static_cast<std::size_t>(argmax[i])] += dy[i];
    return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) {
    require_feature_map(x, "GlobalAvgPool");
    const int b = x.dim(0), c = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    in_shape = x.shape();
    Tensor y({b, c});
    for (int i = 0; i < b; ++i)
        for (int cc = 0; cc < c; ++cc) {
            const double* src = x.data() + (static_cast<std::size_t>(i) * c + cc) * hw;
            double s = 0.0;
            for (std::size_t j = 0; j < hw; ++j) s += src[j];
            y.at(i, cc) = s / static_cast<double>(hw);
        }
    return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) const {
    Tensor dx(in_shape);
    const int b = in_shape[0], c = in_shape[1];
    const std::size_t hw = static_cast<std::size_t>(in_shape[2]) * in_shape[3];
    for (int i = 0; i < b; ++i)
        for (int cc = 0; cc < c; ++cc) {
            const double g = dy.at(i, cc) / static_cast<double>(hw);
            double* dst = dx.data() + (static_cast<std::size_t>(i) * c + cc) * hw;
            for (std::size_t j = 0; j < hw; ++j) dst[j] = g;
        }
    return dx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(int in_features, int out_features)
    : in_f(in_features),
      out_f(out_features),
      weight({out_features, in_features}),
      bias({out_features}),
      gw({out_features, in_features}),
      gb({out_features}) {}

void Linear::init_he(Rng& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / in_f));
    for (std::size_t i = 0; i < weight.size(); ++i) weight[i] = dist(rng);
    bias.fill(0.0);
}

Tensor Linear::forward(const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != in_f)
        throw ContractViolation("Linear: expected (B," + std::to_string(in_f) + "), got " +
                                x.shape_str());
    cached_x = x;
    const int b = x.dim(0);
    Tensor y({b, out_f});
    matmul_bt(x.data(), weight.data(), y.data(), b, in_f, out_f);
    for (int i = 0; i < b; ++i)
        for (int o = 0; o < out_f; ++o) y.at(i, o) += bias[o];
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    const int b = dy.dim(0);
    // gw += dy^T * x
    matmul_at(dy.data(), cached_x.data(), gw.data(), out_f, b, in_f, true);
    for (int i = 0; i < b; ++i)
        for (int o = 0; o < out_f; ++o) gb[o] += dy.at(i, o);
    Tensor dx({b, in_f});
    matmul(dy.data(), weight.data(), dx.data(), b, out_f, in_f);
    return dx;
}

void Linear::zero_grad() {
    gw.fill(0.0);
    gb.fill(0.0);
}

void Linear::visit_params(const std::string& prefix, const ParamVisitor& v) {
    v({prefix + ".weight", &weight, &gw});
    v({prefix + ".bias", &bias, &gb});
}

// ---------------------------------------------------------------------------
// Resizing

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
    require_feature_map(x, "bilinear_resize");
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({b, c, out_h, out_w});
    const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::max(0.0, std::min(fy, static_cast<double>(h - 1)));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::max(0.0, std::min(fx, static_cast<double>(w - 1)));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            for (int i = 0; i < b; ++i)
                for (int cc = 0; cc < c; ++cc) {
                    const double v00 = x.at(i, cc, y0, x0), v01 = x.at(i, cc, y0, x1);
                    const double v10 = x.at(i, cc, y1, x0), v11 = x.at(i, cc, y1, x1);
                    y.at(i, cc, oy, ox) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                          wy * ((1 - wx) * v10 + wx * v11);
                }
        }
    }
    return y;
}

Tensor bilinear_resize_backward(const Tensor& dy, int in_h, int in_w) {
    const int b = dy.dim(0), c = dy.dim(1), out_h = dy.dim(2), out_w = dy.dim(3);
    Tensor dx({b, c, in_h, in_w});
    const double sy = static_cast<double>(in_h) / out_h, sx = static_cast<double>(in_w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::max(0.0, std::min(fy, static_cast<double>(in_h - 1)));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::max(0.0, std::min(fx, static_cast<double>(in_w - 1)));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - x0;
            for (int i = 0; i < b; ++i)
                for (int cc = 0; cc < c; ++cc) {
                    const double g = dy.at(i, cc, oy, ox);
                    dx.at(i, cc, y0, x0) += g * (1 - wy) * (1 - wx);
                    dx.at(i, cc, y0, x1) += g * (1 - wy) * wx;
                    dx.at(i, cc, y1, x0) += g * wy * (1 - wx);
                    dx.at(i, cc, y1, x1) += g * wy * wx;
                }
        }
    }
    return dx;
}

Tensor nearest_resize(const Tensor& x, int out_h, int out_w) {
    require_feature_map(x, "nearest_resize");
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({b, c, out_h, out_w});
    for (int oy = 0; oy < out_h; ++oy) {
        const int iy = std::min(h - 1, static_cast<int>((oy + 0.5) * h / out_h));
        for (int ox = 0; ox < out_w; ++ox) {
            const int ix = std::min(w - 1, static_cast<int>((ox + 0.5) * w / out_w));
            for (int i = 0; i < b; ++i)
                for (int cc = 0; cc < c; ++cc) y.at(i, cc, oy, ox) = x.at(i, cc, iy, ix);
        }
    }
    return y;
}

// ---------------------------------------------------------------------------
// Loss

Tensor softmax_rows(const Tensor& logits) {
    const int b = logits.dim(0), k = logits.dim(1);
    Tensor p({b, k});
    for (int i = 0; i < b; ++i) {
        double mx = -1e300;
        for (int j = 0; j < k; ++j) mx = std::max(mx, logits.at(i, j));
        double z = 0.0;
        for (int j = 0; j < k; ++j) {
            p.at(i, j) = std::exp(logits.at(i, j) - mx);
            z += p.at(i, j);
        }
        for (int j = 0; j < k; ++j) p.at(i, j) /= z;
    }
    return p;
}

double SoftmaxCrossEntropy::forward(const Tensor& logits, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != logits.dim(0))
        throw ContractViolation("SoftmaxCrossEntropy: batch/label count mismatch");
    probs = softmax_rows(logits);
    double loss = 0.0;
    for (int i = 0; i < logits.dim(0); ++i)
        loss -= std::log(std::max(probs.at(i, labels[i]), 1e-300));
    return loss / logits.dim(0);
}

Tensor SoftmaxCrossEntropy::backward(const std::vector<int>& labels) const {
    Tensor d(probs.shape());
    const int b = probs.dim(0), k = probs.dim(1);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < k; ++j)
            d.at(i, j) = (probs.at(i, j) - (labels[i] == j ? 1.0 : 0.0)) / b;
    return d;
}

// ---------------------------------------------------------------------------
// Parameter utilities

std::vector<ParamRef> collect_params(const std::function<void(const ParamVisitor&)>& visit) {
    std::vector<ParamRef> out;
    visit([&](const ParamRef& p) { out.push_back(p); });
    return out;
}

std::uint64_t params_checksum(const std::vector<ParamRef>& params,
                              const std::string& exclude_prefix) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        if (!exclude_prefix.empty() && p.name.rfind(exclude_prefix, 0) == 0) continue;
        for (unsigned char c : p.name) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.value->data());
        for (std::size_t i = 0; i < p.value->size() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace pelfa::nn
