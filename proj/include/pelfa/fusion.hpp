#pragma once

#include "pelfa/attention.hpp"
#include "pelfa/nn/blocks.hpp"

namespace pelfa {

struct FABlockOut {
    Tensor nf1, nf2, cfa;
};

// Fused Attention Block. Each stream passes through its own 3x3 conv, the
// results are concatenated channel-wise, gated by CBAM, projected back to C
// channels by a 1x1 conv (the CFA map), and redistributed into both streams
// through 3x3 convs with residual addition:
//
//   F'_i  = conv3x3_i(F_i)
//   F_cat = concat(F'_1, F'_2)
//   CFA   = conv1x1(CBAM(F_cat))
//   NF_i  = F_i + conv3x3_redist_i(CFA)
//
// There is no activation after the residual addition, so zero-initialized
// redistribution convs make the block an exact identity on both streams.
struct FABlock {
    int channels = 0;
    bool with_redistribution = true;

    nn::ConvBnRelu stream_conv1, stream_conv2;
    Cbam cbam;
    nn::ConvBnRelu fuse_proj;
    nn::ConvBn redist_conv1, redist_conv2;

    FABlock() = default;
    FABlock(int c, int cbam_reduction, int cbam_kernel, bool redistribution = true);

    void init(Rng& rng);
    void set_training(bool t);

    FABlockOut forward(const Tensor& f1, const Tensor& f2);
    // dcfa is the gradient arriving at the block's CFA output from outside
    // the block (zero for every block except the one feeding the head).
    // dcfa_total_out, when given, receives the full gradient w.r.t. the CFA
    // activation including the redistribution paths.
    std::pair<Tensor, Tensor> backward(const Tensor& dnf1, const Tensor& dnf2,
                                       const Tensor* dcfa = nullptr,
                                       Tensor* dcfa_total_out = nullptr);

    void zero_grad();
    void visit_params(const std::string& prefix, const nn::ParamVisitor& v);

private:
    Tensor cfa_cache_;
};

// Stage boundary between FABlocks: a 1x1 projection doubling the channel
// count followed by a 2x2 max pool halving the spatial dims.
struct Transition {
    int channels = 0;
    nn::Conv2d proj;  // C -> 2C
    nn::MaxPool2x2 pool;

    Transition() = default;
    explicit Transition(int c);

    void init(Rng& rng);
    Tensor forward(const Tensor& f);
    Tensor backward(const Tensor& dy);
    void zero_grad();
    void visit_params(const std::string& prefix, const nn::ParamVisitor& v);
};

}  // namespace pelfa
