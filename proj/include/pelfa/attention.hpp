#pragma once

#include "pelfa/nn/layers.hpp"
#include "pelfa/tensor.hpp"

namespace pelfa {

// Convolutional Block Attention Module: sequential channel gating then
// spatial gating, both multiplicative. The channel MLP is shared between the
// average- and max-pooled descriptors; the spatial gate is a kxk conv over
// the stacked channel-mean / channel-max maps.
struct Cbam {
    int channels = 0;
    int reduction = 16;
    int kernel = 7;
    bool second_bias = false;  // bias on the second MLP layer
    int hidden = 0;

    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;  // w1 (hidden, C), w2 (C, hidden)
    Tensor g_w1, g_b1, g_w2, g_b2;
    nn::Conv2d spatial_conv;  // 2 -> 1, kxk, same padding

    Cbam() = default;
    Cbam(int c, int r = 16, int k = 7, bool bias2 = false);

    void init(Rng& rng);

    // Per-channel gate, shape (B, C), every value strictly in (0,1).
    Tensor channel_attention(const Tensor& f);
    // Per-pixel gate, shape (B, 1, H, W), every value strictly in (0,1).
    Tensor spatial_attention(const Tensor& f);

    Tensor forward(const Tensor& f);
    Tensor backward(const Tensor& dout);

    void zero_grad();
    void visit_params(const std::string& prefix, const nn::ParamVisitor& v);

private:
    // caches from the last forward
    Tensor in_, mc_, fprime_, ms_;
    Tensor avg_desc_, max_desc_;
    std::vector<std::int64_t> chan_argmax_;     // (B*C) flat index of spatial max
    Tensor hid_avg_pre_, hid_max_pre_;          // pre-ReLU hidden activations
    Tensor mean_map_, max_map_;
    std::vector<int> spat_argmax_;              // (B*H*W) channel of max

    Tensor mlp_apply(const Tensor& desc, Tensor& hidden_pre_cache);
    void mlp_backward(const Tensor& dout, const Tensor& desc, const Tensor& hidden_pre,
                      Tensor& ddesc);
};

}  // namespace pelfa
