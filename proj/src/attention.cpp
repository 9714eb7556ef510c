#include "pelfa/attention.hpp"

#include <cmath>

namespace pelfa {

namespace {
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}

Cbam::Cbam(int c, int r, int k, bool bias2)
    : channels(c), reduction(r), kernel(k), second_bias(bias2) {
    if (c < 1) throw ConfigError("Cbam: channels must be >= 1");
    if (r < 1) throw ConfigError("Cbam: reduction ratio must be a positive integer");
    if (k < 1 || k % 2 == 0) throw ConfigError("Cbam: spatial kernel size must be odd");
    hidden = std::max(c / r, 1);
    mlp_w1 = Tensor({hidden, c});
    mlp_b1 = Tensor({hidden});
    mlp_w2 = Tensor({c, hidden});
    mlp_b2 = Tensor({c});
    g_w1 = Tensor({hidden, c});
    g_b1 = Tensor({hidden});
    g_w2 = Tensor({c, hidden});
    g_b2 = Tensor({c});
    spatial_conv = nn::Conv2d(2, 1, k);
}

void Cbam::init(Rng& rng) {
    std::normal_distribution<double> d1(0.0, std::sqrt(2.0 / channels));
    for (std::size_t i = 0; i < mlp_w1.size(); ++i) mlp_w1[i] = d1(rng);
    std::normal_distribution<double> d2(0.0, std::sqrt(2.0 / hidden));
    for (std::size_t i = 0; i < mlp_w2.size(); ++i) mlp_w2[i] = d2(rng);
    mlp_b1.fill(0.0);
    mlp_b2.fill(0.0);
    spatial_conv.init_he(rng);
}

Tensor Cbam::mlp_apply(const Tensor& desc, Tensor& hidden_pre_cache) {
    const int b = desc.dim(0);
    hidden_pre_cache = Tensor({b, hidden});
    Tensor out({b, channels});
    for (int i = 0; i < b; ++i) {
        for (int hh = 0; hh < hidden; ++hh) {
            double s = mlp_b1[hh];
            for (int c = 0; c < channels; ++c) s += mlp_w1.at(hh, c) * desc.at(i, c);
            hidden_pre_cache.at(i, hh) = s;
        }
        for (int c = 0; c < channels; ++c) {
            double s = second_bias ? mlp_b2[c] : 0.0;
            for (int hh = 0; hh < hidden; ++hh) {
                const double a = std::max(hidden_pre_cache.at(i, hh), 0.0);
                s += mlp_w2.at(c, hh) * a;
            }
            out.at(i, c) = s;
        }
    }
    return out;
}

void Cbam::mlp_backward(const Tensor& dout, const Tensor& desc, const Tensor& hidden_pre,
                        Tensor& ddesc) {
    const int b = dout.dim(0);
    for (int i = 0; i < b; ++i) {
        std::vector<double> dh(hidden, 0.0);
        for (int c = 0; c < channels; ++c) {
            const double g = dout.at(i, c);
            if (second_bias) g_b2[c] += g;
            for (int hh = 0; hh < hidden; ++hh) {
                const double a = std::max(hidden_pre.at(i, hh), 0.0);
                g_w2.at(c, hh) += g * a;
                dh[hh] += g * mlp_w2.at(c, hh);
            }
        }
        for (int hh = 0; hh < hidden; ++hh) {
            if (hidden_pre.at(i, hh) <= 0.0) continue;
            g_b1[hh] += dh[hh];
            for (int c = 0; c < channels; ++c) {
                g_w1.at(hh, c) += dh[hh] * desc.at(i, c);
                ddesc.at(i, c) += dh[hh] * mlp_w1.at(hh, c);
            }
        }
    }
}

Tensor Cbam::channel_attention(const Tensor& f) {
    require_feature_map(f, "channel_attention");
    if (f.dim(1) != channels)
        throw ConfigError("channel_attention: feature map has " + std::to_string(f.dim(1)) +
                          " channels, params built for " + std::to_string(channels));
    const int b = f.dim(0), h = f.dim(2), w = f.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    avg_desc_ = Tensor({b, channels});
    max_desc_ = Tensor({b, channels});
    chan_argmax_.assign(static_cast<std::size_t>(b) * channels, 0);
    for (int i = 0; i < b; ++i)
        for (int c = 0; c < channels; ++c) {
            const double* src = f.data() + (static_cast<std::size_t>(i) * channels + c) * hw;
            double s = 0.0, mx = src[0];
            std::int64_t mi = 0;
            for (std::size_t j = 0; j < hw; ++j) {
                s += src[j];
                if (src[j] > mx) {
                    mx = src[j];
                    mi = static_cast<std::int64_t>(j);
                }
            }
            avg_desc_.at(i, c) = s / static_cast<double>(hw);
            max_desc_.at(i, c) = mx;
            chan_argmax_[static_cast<std::size_t>(i) * channels + c] =
                (static_cast<std::int64_t>(i) * channels + c) * static_cast<std::int64_t>(hw) + mi;
        }
    const Tensor ya = mlp_apply(avg_desc_, hid_avg_pre_);
    const Tensor ym = mlp_apply(max_desc_, hid_max_pre_);
    Tensor gate({b, channels});
    for (std::size_t i = 0; i < gate.size(); ++i) gate[i] = sigmoid(ya[i] + ym[i]);
    return gate;
}

Tensor Cbam::spatial_attention(const Tensor& f) {
    require_feature_map(f, "spatial_attention");
    const int b = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
    mean_map_ = Tensor({b, 1, h, w});
    max_map_ = Tensor({b, 1, h, w});
    spat_argmax_.assign(static_cast<std::size_t>(b) * h * w, 0);
    for (int i = 0; i < b; ++i)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                double s = 0.0, mx = f.at(i, 0, yy, xx);
                int mc = 0;
                for (int cc = 0; cc < c; ++cc) {
                    const double v = f.at(i, cc, yy, xx);
                    s += v;
                    if (v > mx) {
                        mx = v;
                        mc = cc;
                    }
                }
                mean_map_.at(i, 0, yy, xx) = s / c;
                max_map_.at(i, 0, yy, xx) = mx;
                spat_argmax_[(static_cast<std::size_t>(i) * h + yy) * w + xx] = mc;
            }
    Tensor stacked({b, 2, h, w});
    for (int i = 0; i < b; ++i)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                stacked.at(i, 0, yy, xx) = mean_map_.at(i, 0, yy, xx);
                stacked.at(i, 1, yy, xx) = max_map_.at(i, 0, yy, xx);
            }
    Tensor z = spatial_conv.forward(stacked);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = sigmoid(z[i]);
    return z;
}

Tensor Cbam::forward(const Tensor& f) {
    in_ = f;
    mc_ = channel_attention(f);
    const int b = f.dim(0), h = f.dim(2), w = f.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    fprime_ = Tensor(f.shape());
    for (int i = 0; i < b; ++i)
        for (int c = 0; c < channels; ++c) {
            const double g = mc_.at(i, c);
            const double* src = f.data() + (static_cast<std::size_t>(i) * channels + c) * hw;
            double* dst = fprime_.data() + (static_cast<std::size_t>(i) * channels + c) * hw;
            for (std::size_t j = 0; j < hw; ++j) dst[j] = g * src[j];
        }
    ms_ = spatial_attention(fprime_);
    Tensor out(f.shape());
    for (int i = 0; i < b; ++i)
        for (int c = 0; c < channels; ++c)
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx)
                    out.at(i, c, yy, xx) = fprime_.at(i, c, yy, xx) * ms_.at(i, 0, yy, xx);
    return out;
}

Tensor Cbam::backward(const Tensor& dout) {
    const int b = in_.dim(0), h = in_.dim(2), w = in_.dim(3);
    const int c = channels;

    // out = F' * Ms
    Tensor dms({b, 1, h, w});
    Tensor dfprime(in_.shape());
    for (int i = 0; i < b; ++i)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                double s = 0.0;
                for (int cc = 0; cc < c; ++cc) {
                    s += dout.at(i, cc, yy, xx) * fprime_.at(i, cc, yy, xx);
                    dfprime.at(i, cc, yy, xx) = dout.at(i, cc, yy, xx) * ms_.at(i, 0, yy, xx);
                }
                dms.at(i, 0, yy, xx) = s;
            }

    // Ms = sigmoid(conv(stack(mean, max)))
    Tensor dz(dms.shape());
    for (std::size_t i = 0; i < dms.size(); ++i) {
        const double m = ms_[i];
        dz[i] = dms[i] * m * (1.0 - m);
    }
    Tensor dstacked = spatial_conv.backward(dz);
    for (int i = 0; i < b; ++i)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                const double dmean = dstacked.at(i, 0, yy, xx);
                const double dmax = dstacked.at(i, 1, yy, xx);
                for (int cc = 0; cc < c; ++cc) dfprime.at(i, cc, yy, xx) += dmean / c;
                dfprime.at(i, spat_argmax_[(static_cast<std::size_t>(i) * h + yy) * w + xx], yy,
                           xx) += dmax;
            }

    // F' = Mc * F
    Tensor dmc({b, c});
    Tensor din(in_.shape());
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < b; ++i)
        for (int cc = 0; cc < c; ++cc) {
            const double g = mc_.at(i, cc);
            const double* df = dfprime.data() + (static_cast<std::size_t>(i) * c + cc) * hw;
            const double* fv = in_.data() + (static_cast<std::size_t>(i) * c + cc) * hw;
            double* di = din.data() + (static_cast<std::size_t>(i) * c + cc) * hw;
            double s = 0.0;
            for (std::size_t j = 0; j < hw; ++j) {
                s += df[j] * fv[j];
                di[j] = df[j] * g;
            }
            dmc.at(i, cc) = s;
        }

    // Mc = sigmoid(mlp(avg) + mlp(max)); shared weights, both paths get ds
    Tensor ds({b, c});
    for (std::size_t i = 0; i < ds.size(); ++i) ds[i] = dmc[i] * mc_[i] * (1.0 - mc_[i]);
    Tensor davg({b, c}), dmax_desc({b, c});
    mlp_backward(ds, avg_desc_, hid_avg_pre_, davg);
    mlp_backward(ds, max_desc_, hid_max_pre_, dmax_desc);

    for (int i = 0; i < b; ++i)
        for (int cc = 0; cc < c; ++cc) {
            const double ga = davg.at(i, cc) / static_cast<double>(hw);
            double* di = din.data() + (static_cast<std::size_t>(i) * c + cc) * hw;
            for (std::size_t j = 0; j < hw; ++j) di[j] += ga;
            din[static_cast<std::size_t>(
                chan_argmax_[static_cast<std::size_t>(i) * c + cc])] += dmax_desc.at(i, cc);
        }
    return din;
}

void Cbam::zero_grad() {
    g_w1.fill(0.0);
    g_b1.fill(0.0);
    g_w2.fill(0.0);
    g_b2.fill(0.0);
    spatial_conv.zero_grad();
}

void Cbam::visit_params(const std::string& prefix, const nn::ParamVisitor& v) {
    v({prefix + ".mlp_w1", &mlp_w1, &g_w1});
    v({prefix + ".mlp_b1", &mlp_b1, &g_b1});
    v({prefix + ".mlp_w2", &mlp_w2, &g_w2});
    if (second_bias) v({prefix + ".mlp_b2", &mlp_b2, &g_b2});
    spatial_conv.visit_params(prefix + ".spatial_conv", v);
}

}  // namespace pelfa
