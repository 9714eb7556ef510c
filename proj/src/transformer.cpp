#include "pelfa/nn/transformer.hpp"

#include <cmath>

#include "pelfa/nn/gemm.hpp"

namespace pelfa::nn {

namespace {

// (B,C,H,W) channel-plane layout -> per-item token matrix (N, C)
void map_to_tokens(const Tensor& m, int b, double* tok, int c0, int c1) {
    const int c = m.dim(1), n = m.dim(2) * m.dim(3);
    const double* base = m.data() + static_cast<std::size_t>(b) * c * n;
    for (int cc = c0; cc < c1; ++cc)
        for (int i = 0; i < n; ++i)
            tok[static_cast<std::size_t>(i) * (c1 - c0) + (cc - c0)] =
                base[static_cast<std::size_t>(cc) * n + i];
}

void tokens_to_map(const double* tok, Tensor& m, int b, int c0, int c1, bool add = false) {
    const int c = m.dim(1), n = m.dim(2) * m.dim(3);
    double* base = m.data() + static_cast<std::size_t>(b) * c * n;
    for (int cc = c0; cc < c1; ++cc)
        for (int i = 0; i < n; ++i) {
            const double v = tok[static_cast<std::size_t>(i) * (c1 - c0) + (cc - c0)];
            if (add)
                base[static_cast<std::size_t>(cc) * n + i] += v;
            else
                base[static_cast<std::size_t>(cc) * n + i] = v;
        }
}

}  // namespace

EfficientSelfAttention::EfficientSelfAttention(int c, int num_heads, int sr)
    : ch(c),
      heads(num_heads),
      sr_ratio(sr),
      q_proj(c, c, 1),
      k_proj(c, c, 1),
      v_proj(c, c, 1),
      out_proj(c, c, 1),
      sr_norm(c) {
    if (c % num_heads != 0)
        throw ConfigError("EfficientSelfAttention: channels must divide evenly into heads");
    if (sr > 1) kv_reduce = Conv2d(c, c, sr, sr, 0);
}

void EfficientSelfAttention::init(Rng& rng) {
    q_proj.init_he(rng);
    k_proj.init_he(rng);
    v_proj.init_he(rng);
    out_proj.init_he(rng);
    if (sr_ratio > 1) kv_reduce.init_he(rng);
}

Tensor EfficientSelfAttention::forward(const Tensor& x) {
    const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
    in_shape_ = x.shape();
    q_ = q_proj.forward(x);
    Tensor red = x;
    if (sr_ratio > 1) red = sr_norm.forward(kv_reduce.forward(x));
    red_shape_ = red.shape();
    k_ = k_proj.forward(red);
    v_ = v_proj.forward(red);

    const int n = h * w;
    const int nr = red.dim(2) * red.dim(3);
    const int dh = ch / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor out(x.shape());
    probs_.assign(static_cast<std::size_t>(b) * heads, Tensor());
    std::vector<double> qh(static_cast<std::size_t>(n) * dh), kh(static_cast<std::size_t>(nr) * dh),
        vh(static_cast<std::size_t>(nr) * dh), oh(static_cast<std::size_t>(n) * dh);
    for (int i = 0; i < b; ++i) {
        for (int hd = 0; hd < heads; ++hd) {
            map_to_tokens(q_, i, qh.data(), hd * dh, (hd + 1) * dh);
            map_to_tokens(k_, i, kh.data(), hd * dh, (hd + 1) * dh);
            map_to_tokens(v_, i, vh.data(), hd * dh, (hd + 1) * dh);
            Tensor p({n, nr});
            matmul_bt(qh.data(), kh.data(), p.data(), n, dh, nr);
            for (int r = 0; r < n; ++r) {
                double mx = -1e300;
                for (int cidx = 0; cidx < nr; ++cidx) mx = std::max(mx, p.at(r, cidx) * scale);
                double z = 0.0;
                for (int cidx = 0; cidx < nr; ++cidx) {
                    p.at(r, cidx) = std::exp(p.at(r, cidx) * scale - mx);
                    z += p.at(r, cidx);
                }
                for (int cidx = 0; cidx < nr; ++cidx) p.at(r, cidx) /= z;
            }
            matmul(p.data(), vh.data(), oh.data(), n, nr, dh);
            tokens_to_map(oh.data(), out, i, hd * dh, (hd + 1) * dh);
            probs_[static_cast<std::size_t>(i) * heads + hd] = std::move(p);
        }
    }
    return out_proj.forward(out);
}

Tensor EfficientSelfAttention::backward(const Tensor& dy) {
    Tensor dout = out_proj.backward(dy);
    const int b = in_shape_[0], h = in_shape_[2], w = in_shape_[3];
    const int n = h * w;
    const int nr = red_shape_[2] * red_shape_[3];
    const int dh = ch / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor dq_map(q_.shape()), dk_map(k_.shape()), dv_map(v_.shape());
    std::vector<double> qh(static_cast<std::size_t>(n) * dh), kh(static_cast<std::size_t>(nr) * dh),
        vh(static_cast<std::size_t>(nr) * dh), doh(static_cast<std::size_t>(n) * dh),
        dvh(static_cast<std::size_t>(nr) * dh), dqh(static_cast<std::size_t>(n) * dh),
        dkh(static_cast<std::size_t>(nr) * dh);
    Tensor dp({n, nr}), ds({n, nr});
    for (int i = 0; i < b; ++i) {
        for (int hd = 0; hd < heads; ++hd) {
            const Tensor& p = probs_[static_cast<std::size_t>(i) * heads + hd];
            map_to_tokens(q_, i, qh.data(), hd * dh, (hd + 1) * dh);
            map_to_tokens(k_, i, kh.data(), hd * dh, (hd + 1) * dh);
            map_to_tokens(v_, i, vh.data(), hd * dh, (hd + 1) * dh);
            map_to_tokens(dout, i, doh.data(), hd * dh, (hd + 1) * dh);
            // dV = P^T dO
            matmul_at(p.data(), doh.data(), dvh.data(), nr, n, dh);
            // dP = dO V^T
            matmul_bt(doh.data(), vh.data(), dp.data(), n, dh, nr);
            // softmax backward, scale folded into dS
            for (int r = 0; r < n; ++r) {
                double dot = 0.0;
                for (int cidx = 0; cidx < nr; ++cidx) dot += dp.at(r, cidx) * p.at(r, cidx);
                for (int cidx = 0; cidx < nr; ++cidx)
                    ds.at(r, cidx) = p.at(r, cidx) * (dp.at(r, cidx) - dot) * scale;
            }
            matmul(ds.data(), kh.data(), dqh.data(), n, nr, dh);
            matmul_at(ds.data(), qh.data(), dkh.data(), nr, n, dh);
            tokens_to_map(dqh.data(), dq_map, i, hd * dh, (hd + 1) * dh);
            tokens_to_map(dkh.data(), dk_map, i, hd * dh, (hd + 1) * dh);
            tokens_to_map(dvh.data(), dv_map, i, hd * dh, (hd + 1) * dh);
        }
    }

    Tensor dred = k_proj.backward(dk_map);
    dred += v_proj.backward(dv_map);
    Tensor dx = q_proj.backward(dq_map);
    if (sr_ratio > 1)
        dx += kv_reduce.backward(sr_norm.backward(dred));
    else
        dx += dred;
    return dx;
}

void EfficientSelfAttention::zero_grad() {
    q_proj.zero_grad();
    k_proj.zero_grad();
    v_proj.zero_grad();
    out_proj.zero_grad();
    if (sr_ratio > 1) {
        kv_reduce.zero_grad();
        sr_norm.zero_grad();
    }
}

void EfficientSelfAttention::visit_params(const std::string& p, const ParamVisitor& v) {
    q_proj.visit_params(p + ".q_proj", v);
    k_proj.visit_params(p + ".k_proj", v);
    v_proj.visit_params(p + ".v_proj", v);
    out_proj.visit_params(p + ".out_proj", v);
    if (sr_ratio > 1) {
        kv_reduce.visit_params(p + ".kv_reduce", v);
        sr_norm.visit_params(p + ".sr_norm", v);
    }
}

MixFfn::MixFfn(int c, int expansion)
    : ch(c), hidden(c * expansion), fc1(c, c * expansion, 1), fc2(c * expansion, c, 1),
      dw(c * expansion) {}

void MixFfn::init(Rng& rng) {
    fc1.init_he(rng);
    fc2.init_he(rng);
    dw.init_he(rng);
}

Tensor MixFfn::forward(const Tensor& x) {
    return fc2.forward(gelu.forward(dw.forward(fc1.forward(x))));
}

Tensor MixFfn::backward(const Tensor& dy) {
    return fc1.backward(dw.backward(gelu.backward(fc2.backward(dy))));
}

void MixFfn::zero_grad() {
    fc1.zero_grad();
    fc2.zero_grad();
    dw.zero_grad();
}

void MixFfn::visit_params(const std::string& p, const ParamVisitor& v) {
    fc1.visit_params(p + ".fc1", v);
    dw.visit_params(p + ".dw", v);
    fc2.visit_params(p + ".fc2", v);
}

TransformerBlock::TransformerBlock(int c, int heads, int sr, int expansion)
    : norm1(c), norm2(c), attn(c, heads, sr), ffn(c, expansion) {}

void TransformerBlock::init(Rng& rng) {
    attn.init(rng);
    ffn.init(rng);
}

Tensor TransformerBlock::forward(const Tensor& x) {
    Tensor a = attn.forward(norm1.forward(x));
    a += x;
    Tensor f = ffn.forward(norm2.forward(a));
    f += a;
    return f;
}

Tensor TransformerBlock::backward(const Tensor& dy) {
    Tensor da = norm2.backward(ffn.backward(dy));
    da += dy;
    Tensor dx = norm1.backward(attn.backward(da));
    dx += da;
    return dx;
}

void TransformerBlock::zero_grad() {
    norm1.zero_grad();
    norm2.zero_grad();
    attn.zero_grad();
    ffn.zero_grad();
}

void TransformerBlock::visit_params(const std::string& p, const ParamVisitor& v) {
    norm1.visit_params(p + ".norm1", v);
    attn.visit_params(p + ".attn", v);
    norm2.visit_params(p + ".norm2", v);
    ffn.visit_params(p + ".ffn", v);
}

}  // namespace pelfa::nn
