#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pelfa/rng.hpp"
#include "pelfa/tensor.hpp"

namespace pelfa::nn {

// Named view of one parameter tensor and its gradient buffer.
struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

using ParamVisitor = std::function<void(const ParamRef&)>;

// 2-D convolution, square kernel, stride/pad configurable. Weight is stored
// flat as (out_ch, in_ch*k*k) so forward is one GEMM against the im2col'd
// input. Backward recomputes im2col from the cached input.
struct Conv2d {
    int in_ch = 0, out_ch = 0, ksize = 0, stride = 1, pad = 0;
    bool has_bias = true;
    Tensor weight, bias;
    Tensor gw, gb;
    Tensor cached_x;

    Conv2d() = default;
    Conv2d(int in_c, int out_c, int k, int s = 1, int p = -1, bool bias_on = true);

    void init_he(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void zero_grad();
    void visit_params(const std::string& prefix, const ParamVisitor& v);

    int out_h(int h) const { return (h + 2 * pad - ksize) / stride + 1; }
    int out_w(int w) const { return (w + 2 * pad - ksize) / stride + 1; }
};

// Per-channel 3x3 depthwise convolution, stride 1, same padding.
struct DepthwiseConv3x3 {
    int ch = 0;
    Tensor weight, bias;  // weight (ch, 9)
    Tensor gw, gb;
    Tensor cached_x;

    DepthwiseConv3x3() = default;
    explicit DepthwiseConv3x3(int c);

    void init_he(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void zero_grad();
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

struct BatchNorm2d {
    int ch = 0;
    double eps = 1e-5, momentum = 0.1;
    bool training = false;
    Tensor gamma, beta, gg, gb;
    Tensor running_mean, running_var;
    // caches for backward
    Tensor xhat, batch_inv_std;

    BatchNorm2d() = default;
    explicit BatchNorm2d(int c);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void zero_grad();
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

// Layer norm over the channel dimension of each (b, h, w) token.
struct LayerNormChannels {
    int ch = 0;
    double eps = 1e-6;
    Tensor gamma, beta, gg, gb;
    Tensor cached_xhat, cached_inv_std;

    LayerNormChannels() = default;
    explicit LayerNormChannels(int c);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void zero_grad();
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

struct Relu {
    Tensor cached_x;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;
};

struct Gelu {
    Tensor cached_x;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;
};

struct Sigmoid {
    Tensor cached_y;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;
};

// 2x2 max pool, stride 2, floor semantics on odd dims.
struct MaxPool2x2 {
    std::vector<std::int64_t> argmax;
    std::vector<int> in_shape;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;
};

// Adaptive average pool to 1x1: (B,C,H,W) -> (B,C).
struct GlobalAvgPool {
    std::vector<int> in_shape;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;
};

struct Linear {
    int in_f = 0, out_f = 0;
    Tensor weight, bias;  // weight (out_f, in_f)
    Tensor gw, gb;
    Tensor cached_x;

    Linear() = default;
    Linear(int in_features, int out_features);

    void init_he(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void zero_grad();
    void visit_params(const std::string& prefix, const ParamVisitor& v);
};

// Bilinear resize (align_corners=false). Backward is the exact transpose of
// the forward interpolation weights.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);
Tensor bilinear_resize_backward(const Tensor& dy, int in_h, int in_w);

Tensor nearest_resize(const Tensor& x, int out_h, int out_w);

// Mean cross entropy over the batch from raw logits (B, K).
struct SoftmaxCrossEntropy {
    Tensor probs;  // (B, K), cached by forward
    double forward(const Tensor& logits, const std::vector<int>& labels);
    Tensor backward(const std::vector<int>& labels) const;
};

Tensor softmax_rows(const Tensor& logits);

// Utilities over parameter sets.
std::vector<ParamRef> collect_params(const std::function<void(const ParamVisitor&)>& visit);
std::uint64_t params_checksum(const std::vector<ParamRef>& params,
                              const std::string& exclude_prefix = "");

}  // namespace pelfa::nn
