#pragma once

// Scalar-loop reference implementations used as independent oracles. These
// stay deliberately naive (no GEMM, no shared code with src/) so they can
// arbitrate the fast paths.

#include <cmath>
#include <functional>
#include <vector>

#include "pelfa/tensor.hpp"

namespace oracle {

using pelfa::Tensor;

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// weight laid out (out_ch, in_ch*k*k) to match the production layer's storage.
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int out_ch,
                     int k, int stride, int pad, bool has_bias = true) {
    const int b = x.dim(0), in_ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (w + 2 * pad - k) / stride + 1;
    Tensor y({b, out_ch, oh, ow});
    for (int i = 0; i < b; ++i)
        for (int oc = 0; oc < out_ch; ++oc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double s = has_bias ? bias.at(oc) : 0.0;
                    for (int ic = 0; ic < in_ch; ++ic)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = oy * stride - pad + ky;
                                const int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                s += weight.at(oc, (ic * k + ky) * k + kx) * x.at(i, ic, iy, ix);
                            }
                    y.at(i, oc, oy, ox) = s;
                }
    return y;
}

// batch-norm in eval mode: y = (x - mean) / sqrt(var + eps) * gamma + beta
inline Tensor batchnorm_eval(const Tensor& x, const Tensor& mean, const Tensor& var,
                             const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
    Tensor y(x.shape());
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    for (int i = 0; i < b; ++i)
        for (int cc = 0; cc < c; ++cc)
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx)
                    y.at(i, cc, yy, xx) = (x.at(i, cc, yy, xx) - mean.at(cc)) /
                                              std::sqrt(var.at(cc) + eps) * gamma.at(cc) +
                                          beta.at(cc);
    return y;
}

inline Tensor relu(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
    return y;
}

// shared-MLP channel attention: sigmoid(mlp(avgpool) + mlp(maxpool))
inline Tensor channel_attention(const Tensor& f, const Tensor& w1, const Tensor& b1,
                                const Tensor& w2, int hidden) {
    const int b = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
    Tensor gate({b, c});
    auto mlp = [&](const std::vector<double>& desc, int i) {
        std::vector<double> hid(hidden);
        for (int hh = 0; hh < hidden; ++hh) {
            double s = b1.at(hh);
            for (int cc = 0; cc < c; ++cc) s += w1.at(hh, cc) * desc[cc];
            hid[hh] = s > 0 ? s : 0.0;
        }
        std::vector<double> out(c);
        for (int cc = 0; cc < c; ++cc) {
            double s = 0.0;
            for (int hh = 0; hh < hidden; ++hh) s += w2.at(cc, hh) * hid[hh];
            out[cc] = s;
        }
        (void)i;
        return out;
    };
    for (int i = 0; i < b; ++i) {
        std::vector<double> avg(c, 0.0), mx(c, -1e300);
        for (int cc = 0; cc < c; ++cc)
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx) {
                    avg[cc] += f.at(i, cc, yy, xx);
                    mx[cc] = std::max(mx[cc], f.at(i, cc, yy, xx));
                }
        for (int cc = 0; cc < c; ++cc) avg[cc] /= h * w;
        const auto ya = mlp(avg, i);
        const auto ym = mlp(mx, i);
        for (int cc = 0; cc < c; ++cc) gate.at(i, cc) = sigmoid(ya[cc] + ym[cc]);
    }
    return gate;
}

inline Tensor spatial_attention(const Tensor& f, const Tensor& kernel, const Tensor& kbias,
                                int k) {
    const int b = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
    Tensor stacked({b, 2, h, w});
    for (int i = 0; i < b; ++i)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                double s = 0.0, mx = -1e300;
                for (int cc = 0; cc < c; ++cc) {
                    s += f.at(i, cc, yy, xx);
                    mx = std::max(mx, f.at(i, cc, yy, xx));
                }
                stacked.at(i, 0, yy, xx) = s / c;
                stacked.at(i, 1, yy, xx) = mx;
            }
    Tensor z = conv2d(stacked, kernel, kbias, 1, k, 1, (k - 1) / 2);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = sigmoid(z[i]);
    return z;
}

inline Tensor cbam(const Tensor& f, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                   int hidden, const Tensor& kernel, const Tensor& kbias, int k) {
    const int b = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
    const Tensor mc = channel_attention(f, w1, b1, w2, hidden);
    Tensor fp(f.shape());
    for (int i = 0; i < b; ++i)
        for (int cc = 0; cc < c; ++cc)
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx)
                    fp.at(i, cc, yy, xx) = f.at(i, cc, yy, xx) * mc.at(i, cc);
    const Tensor ms = spatial_attention(fp, kernel, kbias, k);
    Tensor out(f.shape());
    for (int i = 0; i < b; ++i)
        for (int cc = 0; cc < c; ++cc)
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx)
                    out.at(i, cc, yy, xx) = fp.at(i, cc, yy, xx) * ms.at(i, 0, yy, xx);
    return out;
}

inline Tensor maxpool2x2(const Tensor& x) {
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({b, c, h / 2, w / 2});
    for (int i = 0; i < b; ++i)
        for (int cc = 0; cc < c; ++cc)
            for (int oy = 0; oy < h / 2; ++oy)
                for (int ox = 0; ox < w / 2; ++ox) {
                    double m = -1e300;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            m = std::max(m, x.at(i, cc, oy * 2 + dy, ox * 2 + dx));
                    y.at(i, cc, oy, ox) = m;
                }
    return y;
}

// brute-force pair-counting AUC: fraction of (pos, neg) pairs ordered
// correctly, ties 1/2
inline double auc_pairs(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// Central finite differences of loss() w.r.t. one scalar location.
inline double central_diff(double& slot, const std::function<double()>& loss,
                           double eps = 1e-4) {
    const double saved = slot;
    slot = saved + eps;
    const double lp = loss();
    slot = saved - eps;
    const double lm = loss();
    slot = saved;
    return (lp - lm) / (2.0 * eps);
}

inline double rel_err(double a, double b) {
    const double mag = std::max(std::fabs(a), std::fabs(b));
    if (mag < 1e-8) return 0.0;
    return std::fabs(a - b) / mag;
}

}  // namespace oracle
