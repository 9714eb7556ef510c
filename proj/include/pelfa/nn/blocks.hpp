#pragma once

#include "pelfa/nn/layers.hpp"

namespace pelfa::nn {

struct ConvBnRelu {
    Conv2d conv;
    BatchNorm2d bn;
    Relu relu;

    ConvBnRelu() = default;
    ConvBnRelu(int in_c, int out_c, int k, int s = 1)
        : conv(in_c, out_c, k, s), bn(out_c) {}

    void init(Rng& rng) { conv.init_he(rng); }
    void set_training(bool t) { bn.training = t; }

    Tensor forward(const Tensor& x) { return relu.forward(bn.forward(conv.forward(x))); }
    Tensor backward(const Tensor& dy) { return conv.backward(bn.backward(relu.backward(dy))); }

    void zero_grad() {
        conv.zero_grad();
        bn.zero_grad();
    }
    void visit_params(const std::string& p, const ParamVisitor& v) {
        conv.visit_params(p + ".conv", v);
        bn.visit_params(p + ".bn", v);
    }
};

// conv -> batch-norm with no activation; used where the nonlinearity (if any)
// belongs to the caller, e.g. before a residual addition.
struct ConvBn {
    Conv2d conv;
    BatchNorm2d bn;

    ConvBn() = default;
    ConvBn(int in_c, int out_c, int k, int s = 1) : conv(in_c, out_c, k, s), bn(out_c) {}

    void init(Rng& rng) { conv.init_he(rng); }
    void set_training(bool t) { bn.training = t; }

    Tensor forward(const Tensor& x) { return bn.forward(conv.forward(x)); }
    Tensor backward(const Tensor& dy) { return conv.backward(bn.backward(dy)); }

    void zero_grad() {
        conv.zero_grad();
        bn.zero_grad();
    }
    void visit_params(const std::string& p, const ParamVisitor& v) {
        conv.visit_params(p + ".conv", v);
        bn.visit_params(p + ".bn", v);
    }
};

}  // namespace pelfa::nn
