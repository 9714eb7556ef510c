#pragma once

#include "pelfa/nn/layers.hpp"

namespace pelfa::nn {

// Efficient (spatially reduced) multi-head self-attention over a feature map
// treated as H*W tokens of width C. Keys/values come from a stride-sr conv
// reduction of the input.
struct EfficientSelfAttention {
    int ch = 0, heads = 1, sr_ratio = 1;
    Conv2d q_proj, kv_reduce, k_proj, v_proj, out_proj;  // all 1x1 except kv_reduce
    LayerNormChannels sr_norm;

    EfficientSelfAttention() = default;
    EfficientSelfAttention(int c, int num_heads, int sr);

    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void zero_grad();
    void visit_params(const std::string& p, const ParamVisitor& v);

private:
    // caches
    Tensor q_, k_, v_;            // (B, C, H, W) / reduced
    std::vector<Tensor> probs_;   // per (batch*head): (N, N') softmax rows
    std::vector<int> in_shape_, red_shape_;
};

// fc -> 3x3 depthwise conv -> GELU -> fc, the Mix-FFN token mixer.
struct MixFfn {
    int ch = 0, hidden = 0;
    Conv2d fc1, fc2;  // 1x1
    DepthwiseConv3x3 dw;
    Gelu gelu;

    MixFfn() = default;
    MixFfn(int c, int expansion = 4);

    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void zero_grad();
    void visit_params(const std::string& p, const ParamVisitor& v);
};

// pre-norm transformer block: x + Attn(LN(x)), then x + FFN(LN(x))
struct TransformerBlock {
    LayerNormChannels norm1, norm2;
    EfficientSelfAttention attn;
    MixFfn ffn;

    TransformerBlock() = default;
    TransformerBlock(int c, int heads, int sr, int expansion = 4);

    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void zero_grad();
    void visit_params(const std::string& p, const ParamVisitor& v);
};

// strided overlapping conv + layer norm
struct OverlapPatchEmbed {
    Conv2d conv;
    LayerNormChannels norm;

    OverlapPatchEmbed() = default;
    OverlapPatchEmbed(int in_c, int out_c, int k, int stride)
        : conv(in_c, out_c, k, stride), norm(out_c) {}

    void init(Rng& rng) { conv.init_he(rng); }
    Tensor forward(const Tensor& x) { return norm.forward(conv.forward(x)); }
    Tensor backward(const Tensor& dy) { return conv.backward(norm.backward(dy)); }
    void zero_grad() {
        conv.zero_grad();
        norm.zero_grad();
    }
    void visit_params(const std::string& p, const ParamVisitor& v) {
        conv.visit_params(p + ".conv", v);
        norm.visit_params(p + ".norm", v);
    }
};

}  // namespace pelfa::nn
