#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "pelfa/fusion.hpp"

using namespace pelfa;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> d(0.0, scale);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

void randomize_bn(nn::BatchNorm2d& bn, Rng& rng) {
    std::normal_distribution<double> d(0.0, 0.3);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (int c = 0; c < bn.ch; ++c) {
        bn.gamma[c] = 1.0 + d(rng);
        bn.beta[c] = d(rng);
        bn.running_mean[c] = d(rng);
        bn.running_var[c] = u(rng);
    }
}

// straight-line scalar evaluation of the four block equations, eval-mode
// batch norm folded in per the declared conv ordering
FABlockOut ref_fablock(const Tensor& f1, const Tensor& f2, FABlock& blk) {
    auto conv_bn_relu = [](const Tensor& x, nn::ConvBnRelu& l) {
        Tensor y = oracle::conv2d(x, l.conv.weight, l.conv.bias, l.conv.out_ch, l.conv.ksize,
                                  l.conv.stride, l.conv.pad);
        y = oracle::batchnorm_eval(y, l.bn.running_mean, l.bn.running_var, l.bn.gamma, l.bn.beta);
        return oracle::relu(y);
    };
    auto conv_bn = [](const Tensor& x, nn::ConvBn& l) {
        Tensor y = oracle::conv2d(x, l.conv.weight, l.conv.bias, l.conv.out_ch, l.conv.ksize,
                                  l.conv.stride, l.conv.pad);
        return oracle::batchnorm_eval(y, l.bn.running_mean, l.bn.running_var, l.bn.gamma,
                                      l.bn.beta);
    };

    const int b = f1.dim(0), c = f1.dim(1), h = f1.dim(2), w = f1.dim(3);
    // Eq. (1)
    Tensor fp1 = conv_bn_relu(f1, blk.stream_conv1);
    Tensor fp2 = conv_bn_relu(f2, blk.stream_conv2);
    // Eq. (2)
    Tensor cat({b, 2 * c, h, w});
    for (int i = 0; i < b; ++i)
        for (int cc = 0; cc < c; ++cc)
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx) {
                    cat.at(i, cc, yy, xx) = fp1.at(i, cc, yy, xx);
                    cat.at(i, c + cc, yy, xx) = fp2.at(i, cc, yy, xx);
                }
    // Eq. (3)
    Tensor refined = oracle::cbam(cat, blk.cbam.mlp_w1, blk.cbam.mlp_b1, blk.cbam.mlp_w2,
                                  blk.cbam.hidden, blk.cbam.spatial_conv.weight,
                                  blk.cbam.spatial_conv.bias, blk.cbam.kernel);
    Tensor cfa = conv_bn_relu(refined, blk.fuse_proj);
    // Eq. (4)
    Tensor r1 = conv_bn(cfa, blk.redist_conv1);
    Tensor r2 = conv_bn(cfa, blk.redist_conv2);
    FABlockOut out;
    out.nf1 = Tensor(f1.shape());
    out.nf2 = Tensor(f2.shape());
    for (std::size_t i = 0; i < f1.size(); ++i) {
        out.nf1[i] = f1[i] + r1[i];
        out.nf2[i] = f2[i] + r2[i];
    }
    out.cfa = cfa;
    return out;
}

void randomize_block(FABlock& blk, Rng& rng) {
    blk.init(rng);
    randomize_bn(blk.stream_conv1.bn, rng);
    randomize_bn(blk.stream_conv2.bn, rng);
    randomize_bn(blk.fuse_proj.bn, rng);
    randomize_bn(blk.redist_conv1.bn, rng);
    randomize_bn(blk.redist_conv2.bn, rng);
    std::normal_distribution<double> d(0.0, 0.2);
    auto jitter_bias = [&](Tensor& t) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    };
    jitter_bias(blk.stream_conv1.conv.bias);
    jitter_bias(blk.stream_conv2.conv.bias);
    jitter_bias(blk.fuse_proj.conv.bias);
    jitter_bias(blk.redist_conv1.conv.bias);
    jitter_bias(blk.redist_conv2.conv.bias);
}

}  // namespace

TEST_CASE("zero-initialized block is the exact identity on both streams, cfa = 0") {
    Rng rng = make_rng(50, "identity");
    FABlock blk(3, 2, 7);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor f1 = random_tensor({2, 3, 4, 4}, rng, 2.0);
        Tensor f2 = random_tensor({2, 3, 4, 4}, rng, 2.0);
        FABlockOut out = blk.forward(f1, f2);
        CHECK(out.nf1 == f1);
        CHECK(out.nf2 == f2);
        for (std::size_t i = 0; i < out.cfa.size(); ++i) CHECK(out.cfa[i] == 0.0);
    }
}

TEST_CASE("block is symmetric when the streams and their parameters coincide") {
    Rng rng = make_rng(51, "symmetry");
    FABlock blk(2, 2, 3);
    randomize_block(blk, rng);
    blk.stream_conv2 = blk.stream_conv1;
    blk.redist_conv2 = blk.redist_conv1;
    Tensor f = random_tensor({1, 2, 4, 4}, rng);
    FABlockOut out = blk.forward(f, f);
    CHECK(out.nf1 == out.nf2);
}

TEST_CASE("random block matches the equation-by-equation scalar reference (C=2, 4x4)") {
    Rng rng = make_rng(52, "fab_oracle");
    FABlock blk(2, 2, 7);
    randomize_block(blk, rng);
    Tensor f1 = random_tensor({1, 2, 4, 4}, rng);
    Tensor f2 = random_tensor({1, 2, 4, 4}, rng);
    FABlockOut out = blk.forward(f1, f2);
    FABlockOut ref = ref_fablock(f1, f2, blk);
    for (std::size_t i = 0; i < out.nf1.size(); ++i) {
        CHECK(std::fabs(out.nf1[i] - ref.nf1[i]) < 1e-6);
        CHECK(std::fabs(out.nf2[i] - ref.nf2[i]) < 1e-6);
    }
    for (std::size_t i = 0; i < out.cfa.size(); ++i)
        CHECK(std::fabs(out.cfa[i] - ref.cfa[i]) < 1e-6);
}

TEST_CASE("shape contract: outputs match inputs; mismatched streams rejected") {
    Rng rng = make_rng(53, "fab_shape");
    std::uniform_int_distribution<int> dim(1, 6);
    for (int trial = 0; trial < 8; ++trial) {
        const int b = dim(rng), c = dim(rng), h = dim(rng), w = dim(rng);
        FABlock blk(c, 16, 7);
        randomize_block(blk, rng);
        Tensor f1 = random_tensor({b, c, h, w}, rng);
        Tensor f2 = random_tensor({b, c, h, w}, rng);
        FABlockOut out = blk.forward(f1, f2);
        CHECK(out.nf1.shape() == f1.shape());
        CHECK(out.nf2.shape() == f2.shape());
        CHECK(out.cfa.shape() == f1.shape());
    }
    FABlock blk(2, 2, 3);
    Tensor a({1, 2, 4, 4}), b({1, 2, 4, 5});
    CHECK_THROWS_AS(blk.forward(a, b), ContractViolation);
}

TEST_CASE("fusion couples the streams: perturbing f2 moves nf1") {
    Rng rng = make_rng(54, "coupling");
    FABlock blk(2, 2, 3);
    randomize_block(blk, rng);
    Tensor f1 = random_tensor({1, 2, 4, 4}, rng);
    Tensor f2 = random_tensor({1, 2, 4, 4}, rng);
    Tensor nf1_a = blk.forward(f1, f2).nf1;
    Tensor f2b = f2;
    f2b[5] += 1e-3;
    Tensor nf1_b = blk.forward(f1, f2b).nf1;
    double diff = 0.0;
    for (std::size_t i = 0; i < nf1_a.size(); ++i) diff += std::fabs(nf1_a[i] - nf1_b[i]);
    CHECK(diff / 1e-3 > 1e-6);  // finite-difference sensitivity is nonzero
}

TEST_CASE("fablock parameter gradients match central finite differences") {
    Rng rng = make_rng(55, "fab_fd");
    FABlock blk(2, 2, 3);
    randomize_block(blk, rng);
    blk.set_training(true);

    Tensor f1 = random_tensor({1, 2, 4, 4}, rng);
    Tensor f2 = random_tensor({1, 2, 4, 4}, rng);
    Tensor p1 = random_tensor({1, 2, 4, 4}, rng);
    Tensor p2 = random_tensor({1, 2, 4, 4}, rng);
    Tensor pc = random_tensor({1, 2, 4, 4}, rng);

    auto loss_of = [&](FABlock& m) {
        FABlockOut out = m.forward(f1, f2);
        double s = 0.0;
        for (std::size_t i = 0; i < out.nf1.size(); ++i)
            s += p1[i] * out.nf1[i] + p2[i] * out.nf2[i] + pc[i] * out.cfa[i];
        return s;
    };

    blk.zero_grad();
    blk.forward(f1, f2);
    blk.backward(p1, p2, &pc);

    auto params = nn::collect_params(
        [&](const nn::ParamVisitor& v) { blk.visit_params("blk", v); });
    int checked = 0;
    for (const auto& p : params) {
        if (!p.grad) continue;  // running stats
        const std::size_t stride = std::max<std::size_t>(1, p.value->size() / 6);
        for (std::size_t i = 0; i < p.value->size(); i += stride) {
            FABlock m2 = blk;
            auto p2ref = nn::collect_params(
                [&](const nn::ParamVisitor& v) { m2.visit_params("blk", v); });
            double* slot = nullptr;
            for (auto& q : p2ref)
                if (q.name == p.name) slot = q.value->data() + i;
            REQUIRE(slot != nullptr);
            const double num = oracle::central_diff(*slot, [&] { return loss_of(m2); });
            CHECK(oracle::rel_err(num, (*p.grad)[i]) < 1e-3);
            ++checked;
        }
    }
    CHECK(checked > 30);
}

TEST_CASE("transition: identity proj on a 2x2 plane reduces to the window max") {
    Transition tr(1);
    tr.proj.weight.fill(1.0);
    tr.proj.bias.fill(0.0);
    Tensor f({1, 1, 2, 2});
    f.at(0, 0, 0, 0) = 1;
    f.at(0, 0, 0, 1) = 2;
    f.at(0, 0, 1, 0) = 3;
    f.at(0, 0, 1, 1) = 4;
    Tensor y = tr.forward(f);
    REQUIRE(y.shape() == std::vector<int>{1, 2, 1, 1});
    CHECK(y.at(0, 0, 0, 0) == 4.0);
    CHECK(y.at(0, 1, 0, 0) == 4.0);
}

TEST_CASE("transition shape law and the doubling/halving property") {
    Rng rng = make_rng(56, "trans_shape");
    {
        Transition tr(64);
        tr.init(rng);
        Tensor f = random_tensor({1, 64, 16, 16}, rng);  // stands in for 112x112
        Tensor y = tr.forward(f);
        CHECK(y.shape() == std::vector<int>{1, 128, 8, 8});
    }
    std::uniform_int_distribution<int> even(1, 32);
    for (int trial = 0; trial < 10; ++trial) {
        const int c = even(rng) % 4 + 1, h = even(rng) * 2, w = even(rng) * 2;
        Transition tr(c);
        tr.init(rng);
        Tensor f = random_tensor({1, c, h, w}, rng);
        Tensor y = tr.forward(f);
        CHECK(y.shape() == std::vector<int>{1, 2 * c, h / 2, w / 2});
    }
    Transition tr(2);
    Tensor tiny({1, 2, 1, 4});
    CHECK_THROWS_AS(tr.forward(tiny), ContractViolation);
}

TEST_CASE("transition matches naive conv+pool oracle") {
    Rng rng = make_rng(57, "trans_oracle");
    Transition tr(3);
    tr.init(rng);
    std::normal_distribution<double> d(0.0, 0.2);
    for (std::size_t i = 0; i < tr.proj.bias.size(); ++i) tr.proj.bias[i] = d(rng);
    Tensor f = random_tensor({2, 3, 6, 6}, rng);
    Tensor y = tr.forward(f);
    Tensor ref = oracle::maxpool2x2(oracle::conv2d(f, tr.proj.weight, tr.proj.bias, 6, 1, 1, 0));
    REQUIRE(y.same_shape(ref));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::fabs(y[i] - ref[i]) < 1e-10);
}
