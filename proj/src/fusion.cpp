#include "pelfa/fusion.hpp"

namespace pelfa {

FABlock::FABlock(int c, int cbam_reduction, int cbam_kernel, bool redistribution)
    : channels(c),
      with_redistribution(redistribution),
      stream_conv1(c, c, 3),
      stream_conv2(c, c, 3),
      cbam(2 * c, cbam_reduction, cbam_kernel),
      fuse_proj(2 * c, c, 1) {
    if (with_redistribution) {
        redist_conv1 = nn::ConvBn(c, c, 3);
        redist_conv2 = nn::ConvBn(c, c, 3);
    }
}

void FABlock::init(Rng& rng) {
    stream_conv1.init(rng);
    stream_conv2.init(rng);
    cbam.init(rng);
    fuse_proj.init(rng);
    if (with_redistribution) {
        redist_conv1.init(rng);
        redist_conv2.init(rng);
    }
}

void FABlock::set_training(bool t) {
    stream_conv1.set_training(t);
    stream_conv2.set_training(t);
    fuse_proj.set_training(t);
    if (with_redistribution) {
        redist_conv1.set_training(t);
        redist_conv2.set_training(t);
    }
}

FABlockOut FABlock::forward(const Tensor& f1, const Tensor& f2) {
    require_feature_map(f1, "FABlock");
    require_same_shape(f1, f2, "FABlock: stream inputs");
    if (f1.dim(1) != channels)
        throw ContractViolation("FABlock: expected " + std::to_string(channels) +
                                " channels, got " + std::to_string(f1.dim(1)));

    const Tensor fp1 = stream_conv1.forward(f1);
    const Tensor fp2 = stream_conv2.forward(f2);

    const int b = f1.dim(0), h = f1.dim(2), w = f1.dim(3);
    Tensor cat({b, 2 * channels, h, w});
    const std::size_t chw = static_cast<std::size_t>(channels) * h * w;
    for (int i = 0; i < b; ++i) {
        double* dst = cat.data() + static_cast<std::size_t>(i) * 2 * chw;
        std::copy_n(fp1.data() + static_cast<std::size_t>(i) * chw, chw, dst);
        std::copy_n(fp2.data() + static_cast<std::size_t>(i) * chw, chw, dst + chw);
    }

    const Tensor refined = cbam.forward(cat);
    Tensor cfa = fuse_proj.forward(refined);
    cfa_cache_ = cfa;

    FABlockOut out;
    if (with_redistribution) {
        Tensor r1 = redist_conv1.forward(cfa);
        Tensor r2 = redist_conv2.forward(cfa);
        r1 += f1;
        r2 += f2;
        out.nf1 = std::move(r1);
        out.nf2 = std::move(r2);
    } else {
        out.nf1 = f1;
        out.nf2 = f2;
    }
    out.cfa = std::move(cfa);
    return out;
}

std::pair<Tensor, Tensor> FABlock::backward(const Tensor& dnf1, const Tensor& dnf2,
                                            const Tensor* dcfa, Tensor* dcfa_total_out) {
    // residual: dF_i gets dnf_i directly
    Tensor df1 = dnf1;
    Tensor df2 = dnf2;

    Tensor dcfa_total = dcfa ? *dcfa : Tensor(cfa_cache_.shape());
    if (with_redistribution) {
        dcfa_total += redist_conv1.backward(dnf1);
        dcfa_total += redist_conv2.backward(dnf2);
    }
    if (dcfa_total_out) *dcfa_total_out = dcfa_total;

    const Tensor drefined = fuse_proj.backward(dcfa_total);
    const Tensor dcat = cbam.backward(drefined);

    const int b = dcat.dim(0), h = dcat.dim(2), w = dcat.dim(3);
    const std::size_t chw = static_cast<std::size_t>(channels) * h * w;
    Tensor dfp1({b, channels, h, w}), dfp2({b, channels, h, w});
    for (int i = 0; i < b; ++i) {
        const double* src = dcat.data() + static_cast<std::size_t>(i) * 2 * chw;
        std::copy_n(src, chw, dfp1.data() + static_cast<std::size_t>(i) * chw);
        std::copy_n(src + chw, chw, dfp2.data() + static_cast<std::size_t>(i) * chw);
    }

    df1 += stream_conv1.backward(dfp1);
    df2 += stream_conv2.backward(dfp2);
    return {std::move(df1), std::move(df2)};
}

void FABlock::zero_grad() {
    stream_conv1.zero_grad();
    stream_conv2.zero_grad();
    cbam.zero_grad();
    fuse_proj.zero_grad();
    if (with_redistribution) {
        redist_conv1.zero_grad();
        redist_conv2.zero_grad();
    }
}

void FABlock::visit_params(const std::string& prefix, const nn::ParamVisitor& v) {
    stream_conv1.visit_params(prefix + ".stream_conv1", v);
    stream_conv2.visit_params(prefix + ".stream_conv2", v);
    cbam.visit_params(prefix + ".cbam", v);
    fuse_proj.visit_params(prefix + ".fuse_proj", v);
    if (with_redistribution) {
        redist_conv1.visit_params(prefix + ".redist_conv1", v);
        redist_conv2.visit_params(prefix + ".redist_conv2", v);
    }
}

Transition::Transition(int c) : channels(c), proj(c, 2 * c, 1) {}

void Transition::init(Rng& rng) { proj.init_he(rng); }

Tensor Transition::forward(const Tensor& f) {
    require_feature_map(f, "Transition");
    if (f.dim(2) < 2 || f.dim(3) < 2)
        throw ContractViolation("Transition: H and W must be >= 2, got " + f.shape_str());
    return pool.forward(proj.forward(f));
}

Tensor Transition::backward(const Tensor& dy) { return proj.backward(pool.backward(dy)); }

void Transition::zero_grad() { proj.zero_grad(); }

void Transition::visit_params(const std::string& prefix, const nn::ParamVisitor& v) {
    proj.visit_params(prefix + ".proj", v);
}

}  // namespace pelfa
