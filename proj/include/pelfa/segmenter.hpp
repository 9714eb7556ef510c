#pragma once

#include <opencv2/core.hpp>

#include <memory>
#include <string>
#include <vector>

#include "pelfa/nn/blocks.hpp"
#include "pelfa/nn/transformer.hpp"

namespace pelfa {

struct SegConfig {
    std::string encoder = "mit_b0";  // "mit_b0" or "small_cnn"
    int in_channels = 3;             // grayscale replicated, keeps pretrained encoders loadable
    int input_size = 224;            // must be divisible by 32
    double width_multiplier = 1.0;

    void validate() const;
};

// U-Net style segmentation model over a 4-level feature pyramid (strides
// 4/8/16/32). The default encoder follows the MiT-B0 configuration
// (overlapping patch embeds, efficient self-attention, Mix-FFN); the small
// CNN encoder is the cheap alternative for desk-scale runs.
class SegModel {
public:
    SegModel() = default;
    explicit SegModel(const SegConfig& cfg, std::uint64_t init_seed = 0);

    // (B, in_channels, H, W) with H, W divisible by 32 -> sigmoid map
    // (B, 1, H, W)
    Tensor forward(const Tensor& image);
    // dprob: gradient w.r.t. the probability output
    void backward(const Tensor& dprob);

    void set_training(bool t);
    void zero_grad();
    void visit_params(const nn::ParamVisitor& v);
    const SegConfig& config() const { return cfg_; }

private:
    struct MitStage {
        nn::OverlapPatchEmbed embed;
        std::vector<nn::TransformerBlock> blocks;
        nn::LayerNormChannels out_norm;
    };
    struct CnnStage {
        nn::ConvBnRelu down;  // stride-2
        nn::ConvBnRelu conv;
    };
    struct DecoderStage {
        nn::ConvBnRelu conv;
        std::vector<int> skip_shape;
        std::vector<int> up_in_shape;
    };

    SegConfig cfg_;
    bool training_ = false;

    // mit encoder
    std::vector<MitStage> mit_stages_;
    // small cnn encoder
    nn::ConvBnRelu cnn_stem1_, cnn_stem2_;
    std::vector<CnnStage> cnn_stages_;

    std::vector<int> enc_channels_;
    std::vector<DecoderStage> dec_;
    nn::Conv2d final_conv_;
    nn::Sigmoid sigmoid_;

    std::vector<Tensor> encode(const Tensor& x);
    std::vector<Tensor> encode_backward_seed_;  // gradients per pyramid level
};

// mask = [p >= threshold], threshold in (0,1)
Tensor binarize(const Tensor& prob, double threshold = 0.5);

// loss = 1 - (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth)
double dice_loss(const Tensor& prob, const Tensor& target, double smooth = 1.0);
Tensor dice_loss_backward(const Tensor& prob, const Tensor& target, double smooth = 1.0);

struct CropOptions {
    double margin_frac = 0.05;
    int out_size = 224;
    bool nearest = false;         // nearest-neighbor resize (test mode)
    bool fallback_full_frame = false;  // empty mask -> use the full frame
};

// Zeroes background, crops to the mask bounding box expanded by margin_frac
// per side, then letterbox-resizes to out_size (aspect preserved, zero fill).
cv::Mat crop_segmented(const cv::Mat& image, const cv::Mat& mask, const CropOptions& opt = {});

// convenience: grayscale tensor (1,1,H,W) -> replicated (B,3,H,W) seg input
Tensor replicate_channels(const Tensor& gray, int channels = 3);

}  // namespace pelfa
