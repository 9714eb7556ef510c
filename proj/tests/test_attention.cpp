#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "pelfa/attention.hpp"

using namespace pelfa;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> d(0.0, scale);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

}  // namespace

TEST_CASE("channel attention with all-zero MLP gives 0.5 everywhere") {
    Rng rng = make_rng(1, "ca_zero");
    Cbam cbam(4, 2, 7);
    Tensor f = random_tensor({2, 4, 3, 3}, rng);
    Tensor gate = cbam.channel_attention(f);
    REQUIRE(gate.shape() == std::vector<int>{2, 4});
    for (std::size_t i = 0; i < gate.size(); ++i) CHECK(gate[i] == doctest::Approx(0.5));
}

TEST_CASE("constant-per-channel maps collapse avg and max descriptors") {
    Rng rng = make_rng(2, "ca_const");
    Cbam cbam(3, 1, 7);
    cbam.init(rng);
    Tensor f({1, 3, 4, 4});
    const double vals[3] = {0.7, -1.2, 2.4};
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) f.at(0, c, y, x) = vals[c];
    Tensor gate = cbam.channel_attention(f);

    // avg == max, so the gate equals sigmoid(2 * mlp(desc))
    Tensor desc({1, 3});
    for (int c = 0; c < 3; ++c) desc.at(0, c) = vals[c];
    for (int c = 0; c < 3; ++c) {
        double hid_sum = 0.0;
        std::vector<double> hid(cbam.hidden);
        for (int h = 0; h < cbam.hidden; ++h) {
            double s = cbam.mlp_b1[h];
            for (int cc = 0; cc < 3; ++cc) s += cbam.mlp_w1.at(h, cc) * desc.at(0, cc);
            hid[h] = s > 0 ? s : 0.0;
        }
        double out = 0.0;
        for (int h = 0; h < cbam.hidden; ++h) out += cbam.mlp_w2.at(c, h) * hid[h];
        hid_sum = out;
        CHECK(gate.at(0, c) == doctest::Approx(oracle::sigmoid(2.0 * hid_sum)).epsilon(1e-12));
    }
}

TEST_CASE("channel attention matches scalar-loop reference on a random instance") {
    Rng rng = make_rng(3, "ca_oracle");
    Cbam cbam(4, 2, 7);
    cbam.init(rng);
    Tensor f = random_tensor({2, 4, 3, 3}, rng);
    Tensor gate = cbam.channel_attention(f);
    Tensor ref = oracle::channel_attention(f, cbam.mlp_w1, cbam.mlp_b1, cbam.mlp_w2, cbam.hidden);
    for (std::size_t i = 0; i < gate.size(); ++i)
        CHECK(std::fabs(gate[i] - ref[i]) < 1e-6);
}

TEST_CASE("spatial attention with zero kernel gives 0.5; mean==max when channels identical") {
    Rng rng = make_rng(4, "sa_zero");
    Cbam cbam(3, 2, 5);
    Tensor f = random_tensor({1, 3, 4, 4}, rng);
    Tensor gate = cbam.spatial_attention(f);
    REQUIRE(gate.shape() == std::vector<int>{1, 1, 4, 4});
    for (std::size_t i = 0; i < gate.size(); ++i) CHECK(gate[i] == doctest::Approx(0.5));

    // identical channels: stacked mean and max planes coincide
    Tensor g({1, 3, 2, 2});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i) g[static_cast<std::size_t>(c) * 4 + i] = 0.25 * i - 0.3;
    cbam.spatial_attention(g);
    nn::Conv2d& sc = cbam.spatial_conv;
    const Tensor& cached = sc.cached_x;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            CHECK(cached.at(0, 0, y, x) == doctest::Approx(cached.at(0, 1, y, x)));
}

TEST_CASE("spatial attention matches the naive convolution oracle (C=2, 5x5, k=7)") {
    Rng rng = make_rng(5, "sa_oracle");
    Cbam cbam(2, 2, 7);
    cbam.init(rng);
    Tensor f = random_tensor({1, 2, 5, 5}, rng);
    Tensor gate = cbam.spatial_attention(f);
    Tensor ref = oracle::spatial_attention(f, cbam.spatial_conv.weight, cbam.spatial_conv.bias, 7);
    for (std::size_t i = 0; i < gate.size(); ++i) CHECK(std::fabs(gate[i] - ref[i]) < 1e-6);
}

TEST_CASE("cbam: zero parameters damp by 0.25, zero input stays zero") {
    Rng rng = make_rng(6, "cbam_zero");
    Cbam cbam(3, 2, 7);
    Tensor f = random_tensor({2, 3, 4, 4}, rng);
    Tensor out = cbam.forward(f);
    for (std::size_t i = 0; i < f.size(); ++i)
        CHECK(out[i] == doctest::Approx(0.25 * f[i]).epsilon(1e-12));

    cbam.init(rng);
    Tensor zero({2, 3, 4, 4});
    Tensor out0 = cbam.forward(zero);
    for (std::size_t i = 0; i < out0.size(); ++i) CHECK(out0[i] == 0.0);
}

TEST_CASE("cbam matches the composed channel->spatial oracle") {
    Rng rng = make_rng(7, "cbam_oracle");
    Cbam cbam(4, 2, 3);
    cbam.init(rng);
    Tensor f = random_tensor({2, 4, 5, 5}, rng);
    Tensor out = cbam.forward(f);
    Tensor ref = oracle::cbam(f, cbam.mlp_w1, cbam.mlp_b1, cbam.mlp_w2, cbam.hidden,
                              cbam.spatial_conv.weight, cbam.spatial_conv.bias, 3);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::fabs(out[i] - ref[i]) < 1e-6);
}

TEST_CASE("shape preservation and gate boundedness over random shapes") {
    Rng rng = make_rng(8, "cbam_prop");
    std::uniform_int_distribution<int> dim(1, 8);
    for (int trial = 0; trial < 25; ++trial) {
        const int b = dim(rng), c = dim(rng), h = dim(rng), w = dim(rng);
        Cbam cbam(c, 16, 7);
        cbam.init(rng);
        Tensor f = random_tensor({b, c, h, w}, rng);
        Tensor mc = cbam.channel_attention(f);
        Tensor ms = cbam.spatial_attention(f);
        for (std::size_t i = 0; i < mc.size(); ++i) {
            CHECK(mc[i] > 0.0);
            CHECK(mc[i] < 1.0);
        }
        for (std::size_t i = 0; i < ms.size(); ++i) {
            CHECK(ms[i] > 0.0);
            CHECK(ms[i] < 1.0);
        }
        Tensor out = cbam.forward(f);
        CHECK(out.shape() == f.shape());
        CHECK(out.all_finite());
        // multiplicative gates < 1 cannot grow the max magnitude
        CHECK(out.max_abs() <= f.max_abs() + 1e-12);
    }
}

TEST_CASE("cbam analytic gradients match central finite differences") {
    Rng rng = make_rng(9, "cbam_fd");
    Cbam cbam(3, 2, 3);
    cbam.init(rng);
    Tensor f = random_tensor({1, 3, 4, 4}, rng);
    Tensor probe = random_tensor({1, 3, 4, 4}, rng);
    auto loss_of = [&](Cbam& m, const Tensor& in) {
        Tensor y = m.forward(in);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += probe[i] * y[i];
        return s;
    };

    cbam.zero_grad();
    cbam.forward(f);
    Tensor din = cbam.backward(probe);

    auto check_param = [&](auto field, const Tensor& grad) {
        const std::size_t n = field(cbam).size();
        for (std::size_t i = 0; i < n; ++i) {
            Cbam m2 = cbam;
            const double num =
                oracle::central_diff(field(m2)[i], [&] { return loss_of(m2, f); });
            CHECK(oracle::rel_err(num, grad[i]) < 1e-3);
        }
    };
    check_param([](Cbam& m) -> Tensor& { return m.mlp_w1; }, cbam.g_w1);
    check_param([](Cbam& m) -> Tensor& { return m.mlp_b1; }, cbam.g_b1);
    check_param([](Cbam& m) -> Tensor& { return m.mlp_w2; }, cbam.g_w2);
    check_param([](Cbam& m) -> Tensor& { return m.spatial_conv.weight; }, cbam.spatial_conv.gw);
    check_param([](Cbam& m) -> Tensor& { return m.spatial_conv.bias; }, cbam.spatial_conv.gb);

    for (std::size_t i = 0; i < f.size(); i += 2) {
        Tensor f2 = f;
        Cbam m2 = cbam;
        const double num = oracle::central_diff(f2[i], [&] { return loss_of(m2, f2); });
        CHECK(oracle::rel_err(num, din[i]) < 1e-3);
    }
}

TEST_CASE("configuration errors: even kernel, channel mismatch, bad reduction") {
    CHECK_THROWS_AS(Cbam(4, 16, 4), ConfigError);
    CHECK_THROWS_AS(Cbam(4, 0, 7), ConfigError);
    Cbam cbam(4, 2, 7);
    Tensor f({1, 3, 2, 2});
    CHECK_THROWS_AS(cbam.channel_attention(f), ConfigError);
}

TEST_CASE("hidden width clamps to 1 when C < reduction") {
    Cbam cbam(3, 16, 7);
    CHECK(cbam.hidden == 1);
}
