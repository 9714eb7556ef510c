#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pelfa/fusion.hpp"

namespace pelfa {

struct ModelConfig {
    int input_size = 224;
    int in_channels = 1;
    int stem_channels = 64;
    int num_blocks = 8;
    std::vector<int> transition_after = {2, 4, 6};
    int head_width = 1024;
    int num_classes = 2;
    int cbam_reduction = 16;
    int cbam_kernel = 7;
    double width_multiplier = 1.0;
    std::string head_input = "cfa";  // "cfa" or "concat_streams"

    void validate() const;

    int scaled_stem() const;
    int scaled_head() const;
    // channel count entering block i (0-based)
    int block_channels(int i) const;
    int final_channels() const { return block_channels(num_blocks - 1); }
    // spatial size at block i (0-based)
    int block_size(int i) const;
};

// Dual-stream PelFANet: per-stream stems, a chain of FABlocks with stage
// transitions, and an aggregation head over the final block's fused map.
class PelFANet {
public:
    PelFANet() = default;
    explicit PelFANet(const ModelConfig& cfg, std::uint64_t init_seed = 0);

    Tensor forward(const Tensor& raw, const Tensor& seg);
    // Seeds backward with d(loss)/d(logits); accumulates parameter grads.
    void backward(const Tensor& dlogits);

    void set_training(bool t);
    bool training() const { return training_; }
    void zero_grad();
    void visit_params(const nn::ParamVisitor& v);

    // Replaces only the final fully-connected layer with a freshly
    // initialized one of n_out outputs; every other tensor is untouched.
    void swap_head(int n_out, Rng& rng);

    const ModelConfig& config() const { return cfg_; }

    // Grad-CAM support: activation/gradient capture at named spatial layers.
    std::vector<std::string> capture_layer_names() const;
    void set_capture(bool on) { capture_ = on; }
    const Tensor& captured_activation(const std::string& layer) const;
    const Tensor& captured_gradient(const std::string& layer) const;

private:
    ModelConfig cfg_;
    bool training_ = false;
    bool capture_ = false;

    nn::ConvBnRelu stem1_, stem2_;
    nn::MaxPool2x2 stem_pool1_, stem_pool2_;
    std::vector<FABlock> blocks_;
    std::vector<Transition> trans1_, trans2_;  // parallel to cfg.transition_after
    nn::Conv2d head_conv_;
    Cbam head_cbam_;
    nn::BatchNorm2d head_bn_;
    nn::Relu head_relu_;
    nn::GlobalAvgPool head_pool_;
    nn::Linear fc_;

    std::map<std::string, Tensor> acts_, act_grads_;
    int trans_index_after_block(int block_idx) const;
};

// Fig. 1(a) ablation: single raw-PXR stream with the fusion blocks reduced to
// single-stream residual attention blocks.
class BaselineNet {
public:
    BaselineNet() = default;
    explicit BaselineNet(const ModelConfig& cfg, std::uint64_t init_seed = 0);

    Tensor forward(const Tensor& raw);
    void backward(const Tensor& dlogits);
    void set_training(bool t);
    void zero_grad();
    void visit_params(const nn::ParamVisitor& v);
    const ModelConfig& config() const { return cfg_; }

private:
    struct SBlock {
        int channels = 0;
        bool with_redistribution = true;
        nn::ConvBnRelu stream_conv;
        Cbam cbam;
        nn::ConvBnRelu fuse_proj;
        nn::ConvBn redist_conv;
        Tensor cfa_cache;

        SBlock() = default;
        SBlock(int c, int r, int k, bool redist);
        void init(Rng& rng);
        void set_training(bool t);
        std::pair<Tensor, Tensor> forward(const Tensor& f);  // (nf, cfa)
        Tensor backward(const Tensor& dnf, const Tensor* dcfa);
        void zero_grad();
        void visit_params(const std::string& p, const nn::ParamVisitor& v);
    };

    ModelConfig cfg_;
    bool training_ = false;
    nn::ConvBnRelu stem_;
    nn::MaxPool2x2 stem_pool_;
    std::vector<SBlock> blocks_;
    std::vector<Transition> trans_;
    nn::Conv2d head_conv_;
    Cbam head_cbam_;
    nn::BatchNorm2d head_bn_;
    nn::Relu head_relu_;
    nn::GlobalAvgPool head_pool_;
    nn::Linear fc_;
    int trans_index_after_block(int block_idx) const;
};

std::size_t count_params(const std::function<void(const nn::ParamVisitor&)>& visit);

}  // namespace pelfa
