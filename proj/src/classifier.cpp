#include "pelfa/classifier.hpp"

#include <algorithm>
#include <cmath>

namespace pelfa {

namespace {
int scaled(int base, double mult, int floor_at) {
    return std::max(floor_at, static_cast<int>(std::lround(base * mult)));
}
}  // namespace

void ModelConfig::validate() const {
    if (num_blocks < 1) throw ConfigError("ModelConfig: num_blocks must be >= 1");
    if (num_classes < 2) throw ConfigError("ModelConfig: num_classes must be >= 2");
    if (head_width < num_classes)
        throw ConfigError("ModelConfig: head_width must be >= num_classes");
    if (in_channels < 1) throw ConfigError("ModelConfig: in_channels must be >= 1");
    if (stem_channels < 1) throw ConfigError("ModelConfig: stem_channels must be >= 1");
    if (width_multiplier <= 0.0)
        throw ConfigError("ModelConfig: width_multiplier must be positive");
    if (cbam_reduction < 1) throw ConfigError("ModelConfig: cbam_reduction must be >= 1");
    if (cbam_kernel < 1 || cbam_kernel % 2 == 0)
        throw ConfigError("ModelConfig: cbam_kernel must be odd and >= 1");
    if (head_input != "cfa" && head_input != "concat_streams")
        throw ConfigError("ModelConfig: head_input must be 'cfa' or 'concat_streams'");
    std::vector<int> t = transition_after;
    std::sort(t.begin(), t.end());
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < 1 || t[i] >= num_blocks)
            throw ConfigError("ModelConfig: transition_after indices must lie in [1, num_blocks)");
        if (i > 0 && t[i] == t[i - 1])
            throw ConfigError("ModelConfig: transition_after indices must be unique");
    }
    const int halvings = 1 + static_cast<int>(transition_after.size());
    const int divisor = 1 << halvings;
    if (input_size % divisor != 0)
        throw ConfigError("ModelConfig: input_size must be divisible by 2^(1+|transition_after|) = " +
                          std::to_string(divisor));
}

int ModelConfig::scaled_stem() const { return scaled(stem_channels, width_multiplier, 1); }

int ModelConfig::scaled_head() const { return scaled(head_width, width_multiplier, num_classes); }

int ModelConfig::block_channels(int i) const {
    int c = scaled_stem();
    for (int t : transition_after)
        if (t <= i) c *= 2;
    return c;
}

int ModelConfig::block_size(int i) const {
    int s = input_size / 2;  // stem pool
    for (int t : transition_after)
        if (t <= i) s /= 2;
    return s;
}

// ---------------------------------------------------------------------------
// PelFANet

PelFANet::PelFANet(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    const int s = cfg_.scaled_stem();
    stem1_ = nn::ConvBnRelu(cfg_.in_channels, s, 3);
    stem2_ = nn::ConvBnRelu(cfg_.in_channels, s, 3);
    for (int i = 0; i < cfg_.num_blocks; ++i) {
        const bool redist = (i + 1 < cfg_.num_blocks) || cfg_.head_input == "concat_streams";
        blocks_.emplace_back(cfg_.block_channels(i), cfg_.cbam_reduction, cfg_.cbam_kernel,
                             redist);
    }
    for (int t : cfg_.transition_after) {
        trans1_.emplace_back(cfg_.block_channels(t - 1));
        trans2_.emplace_back(cfg_.block_channels(t - 1));
    }
    const int cf = cfg_.final_channels();
    const int head_in = cfg_.head_input == "cfa" ? cf : 2 * cf;
    const int hw = cfg_.scaled_head();
    head_conv_ = nn::Conv2d(head_in, hw, 3);
    head_cbam_ = Cbam(hw, cfg_.cbam_reduction, cfg_.cbam_kernel);
    head_bn_ = nn::BatchNorm2d(hw);
    fc_ = nn::Linear(hw, cfg_.num_classes);

    Rng rng = make_rng(init_seed, "pelfanet_init");
    stem1_.init(rng);
    stem2_.init(rng);
    for (auto& b : blocks_) b.init(rng);
    for (auto& t : trans1_) t.init(rng);
    for (auto& t : trans2_) t.init(rng);
    head_conv_.init_he(rng);
    head_cbam_.init(rng);
    fc_.init_he(rng);
}

int PelFANet::trans_index_after_block(int block_idx) const {
    for (std::size_t j = 0; j < cfg_.transition_after.size(); ++j)
        if (cfg_.transition_after[j] == block_idx + 1) return static_cast<int>(j);
    return -1;
}

Tensor PelFANet::forward(const Tensor& raw, const Tensor& seg) {
    require_feature_map(raw, "PelFANet::forward raw");
    require_feature_map(seg, "PelFANet::forward seg");
    if (raw.dim(0) != seg.dim(0))
        throw ContractViolation("PelFANet: mismatched batch sizes " + std::to_string(raw.dim(0)) +
                                " vs " + std::to_string(seg.dim(0)));
    require_same_shape(raw, seg, "PelFANet: stream inputs");
    if (raw.dim(1) != cfg_.in_channels || raw.dim(2) != cfg_.input_size ||
        raw.dim(3) != cfg_.input_size)
        throw ContractViolation("PelFANet: expected (B," + std::to_string(cfg_.in_channels) + "," +
                                std::to_string(cfg_.input_size) + "," +
                                std::to_string(cfg_.input_size) + "), got " + raw.shape_str());

    Tensor f1 = stem_pool1_.forward(stem1_.forward(raw));
    Tensor f2 = stem_pool2_.forward(stem2_.forward(seg));

    Tensor last_cfa;
    for (int i = 0; i < cfg_.num_blocks; ++i) {
        FABlockOut out = blocks_[i].forward(f1, f2);
        if (capture_) acts_["blocks." + std::to_string(i) + ".cfa"] = out.cfa;
        f1 = std::move(out.nf1);
        f2 = std::move(out.nf2);
        last_cfa = std::move(out.cfa);
        const int ti = trans_index_after_block(i);
        if (ti >= 0) {
            f1 = trans1_[ti].forward(f1);
            f2 = trans2_[ti].forward(f2);
        }
    }

    Tensor head_in;
    if (cfg_.head_input == "cfa") {
        head_in = std::move(last_cfa);
    } else {
        const int b = f1.dim(0), c = f1.dim(1), h = f1.dim(2), w = f1.dim(3);
        head_in = Tensor({b, 2 * c, h, w});
        const std::size_t chw = static_cast<std::size_t>(c) * h * w;
        for (int i = 0; i < b; ++i) {
            std::copy_n(f1.data() + static_cast<std::size_t>(i) * chw, chw,
                        head_in.data() + static_cast<std::size_t>(i) * 2 * chw);
            std::copy_n(f2.data() + static_cast<std::size_t>(i) * chw, chw,
                        head_in.data() + static_cast<std::size_t>(i) * 2 * chw + chw);
        }
    }

    Tensor h = head_relu_.forward(head_bn_.forward(head_cbam_.forward(head_conv_.forward(head_in))));
    if (capture_) acts_["head.agg_conv"] = h;
    Tensor pooled = head_pool_.forward(h);
    Tensor logits = fc_.forward(pooled);
    if (!logits.all_finite())
        throw ContractViolation("PelFANet: non-finite logits");
    return logits;
}

void PelFANet::backward(const Tensor& dlogits) {
    Tensor d = fc_.backward(dlogits);
    Tensor dh = head_pool_.backward(d);
    if (capture_) act_grads_["head.agg_conv"] = dh;
    Tensor dhead_in =
        head_conv_.backward(head_cbam_.backward(head_bn_.backward(head_relu_.backward(dh))));

    const int nb = cfg_.num_blocks;
    Tensor df1, df2, dcfa_last;
    if (cfg_.head_input == "cfa") {
        dcfa_last = std::move(dhead_in);
        const auto& sh = dcfa_last.shape();
        df1 = Tensor(sh);
        df2 = Tensor(sh);
    } else {
        const int b = dhead_in.dim(0), c2 = dhead_in.dim(1), h = dhead_in.dim(2),
                  w = dhead_in.dim(3);
        const int c = c2 / 2;
        df1 = Tensor({b, c, h, w});
        df2 = Tensor({b, c, h, w});
        const std::size_t chw = static_cast<std::size_t>(c) * h * w;
        for (int i = 0; i < b; ++i) {
            std::copy_n(dhead_in.data() + static_cast<std::size_t>(i) * 2 * chw, chw,
                        df1.data() + static_cast<std::size_t>(i) * chw);
            std::copy_n(dhead_in.data() + static_cast<std::size_t>(i) * 2 * chw + chw, chw,
                        df2.data() + static_cast<std::size_t>(i) * chw);
        }
        dcfa_last = Tensor(df1.shape());
    }

    for (int i = nb - 1; i >= 0; --i) {
        const int ti = trans_index_after_block(i);
        if (ti >= 0) {
            df1 = trans1_[ti].backward(df1);
            df2 = trans2_[ti].backward(df2);
        }
        const Tensor* dcfa = nullptr;
        if (i == nb - 1 && cfg_.head_input == "cfa") dcfa = &dcfa_last;
        Tensor dcfa_total;
        auto [a, b2] = blocks_[i].backward(df1, df2, dcfa, capture_ ? &dcfa_total : nullptr);
        if (capture_) act_grads_["blocks." + std::to_string(i) + ".cfa"] = std::move(dcfa_total);
        df1 = std::move(a);
        df2 = std::move(b2);
    }

    stem1_.backward(stem_pool1_.backward(df1));
    stem2_.backward(stem_pool2_.backward(df2));
}

void PelFANet::set_training(bool t) {
    training_ = t;
    stem1_.set_training(t);
    stem2_.set_training(t);
    for (auto& b : blocks_) b.set_training(t);
    head_bn_.training = t;
}

void PelFANet::zero_grad() {
    stem1_.zero_grad();
    stem2_.zero_grad();
    for (auto& b : blocks_) b.zero_grad();
    for (auto& t : trans1_) t.zero_grad();
    for (auto& t : trans2_) t.zero_grad();
    head_conv_.zero_grad();
    head_cbam_.zero_grad();
    head_bn_.zero_grad();
    fc_.zero_grad();
}

void PelFANet::visit_params(const nn::ParamVisitor& v) {
    stem1_.visit_params("stem1", v);
    stem2_.visit_params("stem2", v);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].visit_params("blocks." + std::to_string(i), v);
    for (std::size_t i = 0; i < trans1_.size(); ++i) {
        trans1_[i].visit_params("trans1." + std::to_string(i), v);
        trans2_[i].visit_params("trans2." + std::to_string(i), v);
    }
    head_conv_.visit_params("head.agg_conv", v);
    head_cbam_.visit_params("head.cbam", v);
    head_bn_.visit_params("head.bn", v);
    fc_.visit_params("head.fc", v);
}

void PelFANet::swap_head(int n_out, Rng& rng) {
    if (n_out < 2) throw ConfigError("swap_head: n_out must be >= 2");
    fc_ = nn::Linear(cfg_.scaled_head(), n_out);
    fc_.init_he(rng);
    cfg_.num_classes = n_out;
}

std::vector<std::string> PelFANet::capture_layer_names() const {
    std::vector<std::string> names;
    for (int i = 0; i < cfg_.num_blocks; ++i) names.push_back("blocks." + std::to_string(i) + ".cfa");
    names.push_back("head.agg_conv");
    return names;
}

const Tensor& PelFANet::captured_activation(const std::string& layer) const {
    auto it = acts_.find(layer);
    if (it == acts_.end())
        throw ContractViolation("no captured activation for layer '" + layer + "'");
    return it->second;
}

const Tensor& PelFANet::captured_gradient(const std::string& layer) const {
    auto it = act_grads_.find(layer);
    if (it == act_grads_.end())
        throw ContractViolation("no captured gradient for layer '" + layer + "'");
    return it->second;
}

// ---------------------------------------------------------------------------
// BaselineNet

BaselineNet::SBlock::SBlock(int c, int r, int k, bool redist)
    : channels(c),
      with_redistribution(redist),
      stream_conv(c, c, 3),
      cbam(c, r, k),
      fuse_proj(c, c, 1) {
    if (with_redistribution) redist_conv = nn::ConvBn(c, c, 3);
}

void BaselineNet::SBlock::init(Rng& rng) {
    stream_conv.init(rng);
    cbam.init(rng);
    fuse_proj.init(rng);
    if (with_redistribution) redist_conv.init(rng);
}

void BaselineNet::SBlock::set_training(bool t) {
    stream_conv.set_training(t);
    fuse_proj.set_training(t);
    if (with_redistribution) redist_conv.set_training(t);
}

std::pair<Tensor, Tensor> BaselineNet::SBlock::forward(const Tensor& f) {
    Tensor cfa = fuse_proj.forward(cbam.forward(stream_conv.forward(f)));
    cfa_cache = cfa;
    if (!with_redistribution) return {f, std::move(cfa)};
    Tensor nf = redist_conv.forward(cfa);
    nf += f;
    return {std::move(nf), std::move(cfa)};
}

Tensor BaselineNet::SBlock::backward(const Tensor& dnf, const Tensor* dcfa) {
    Tensor df = dnf;
    Tensor dcfa_total = dcfa ? *dcfa : Tensor(cfa_cache.shape());
    if (with_redistribution) dcfa_total += redist_conv.backward(dnf);
    df += stream_conv.backward(cbam.backward(fuse_proj.backward(dcfa_total)));
    return df;
}

void BaselineNet::SBlock::zero_grad() {
    stream_conv.zero_grad();
    cbam.zero_grad();
    fuse_proj.zero_grad();
    if (with_redistribution) redist_conv.zero_grad();
}

void BaselineNet::SBlock::visit_params(const std::string& p, const nn::ParamVisitor& v) {
    stream_conv.visit_params(p + ".stream_conv", v);
    cbam.visit_params(p + ".cbam", v);
    fuse_proj.visit_params(p + ".fuse_proj", v);
    if (with_redistribution) redist_conv.visit_params(p + ".redist_conv", v);
}

BaselineNet::BaselineNet(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    const int s = cfg_.scaled_stem();
    stem_ = nn::ConvBnRelu(cfg_.in_channels, s, 3);
    for (int i = 0; i < cfg_.num_blocks; ++i)
        blocks_.emplace_back(cfg_.block_channels(i), cfg_.cbam_reduction, cfg_.cbam_kernel,
                             i + 1 < cfg_.num_blocks);
    for (int t : cfg_.transition_after) trans_.emplace_back(cfg_.block_channels(t - 1));
    const int cf = cfg_.final_channels();
    const int hw = cfg_.scaled_head();
    head_conv_ = nn::Conv2d(cf, hw, 3);
    head_cbam_ = Cbam(hw, cfg_.cbam_reduction, cfg_.cbam_kernel);
    head_bn_ = nn::BatchNorm2d(hw);
    fc_ = nn::Linear(hw, cfg_.num_classes);

    Rng rng = make_rng(init_seed, "baseline_init");
    stem_.init(rng);
    for (auto& b : blocks_) b.init(rng);
    for (auto& t : trans_) t.init(rng);
    head_conv_.init_he(rng);
    head_cbam_.init(rng);
    fc_.init_he(rng);
}

int BaselineNet::trans_index_after_block(int block_idx) const {
    for (std::size_t j = 0; j < cfg_.transition_after.size(); ++j)
        if (cfg_.transition_after[j] == block_idx + 1) return static_cast<int>(j);
    return -1;
}

Tensor BaselineNet::forward(const Tensor& raw) {
    require_feature_map(raw, "BaselineNet::forward");
    Tensor f = stem_pool_.forward(stem_.forward(raw));
    Tensor last_cfa;
    for (int i = 0; i < cfg_.num_blocks; ++i) {
        auto [nf, cfa] = blocks_[i].forward(f);
        f = std::move(nf);
        last_cfa = std::move(cfa);
        const int ti = trans_index_after_block(i);
        if (ti >= 0) f = trans_[ti].forward(f);
    }
    Tensor h =
        head_relu_.forward(head_bn_.forward(head_cbam_.forward(head_conv_.forward(last_cfa))));
    return fc_.forward(head_pool_.forward(h));
}

void BaselineNet::backward(const Tensor& dlogits) {
    Tensor d = fc_.backward(dlogits);
    Tensor dcfa_last = head_conv_.backward(
        head_cbam_.backward(head_bn_.backward(head_relu_.backward(head_pool_.backward(d)))));
    Tensor df(dcfa_last.shape());
    for (int i = cfg_.num_blocks - 1; i >= 0; --i) {
        const int ti = trans_index_after_block(i);
        if (ti >= 0) df = trans_[ti].backward(df);
        const Tensor* dcfa = i == cfg_.num_blocks - 1 ? &dcfa_last : nullptr;
        df = blocks_[i].backward(df, dcfa);
    }
    stem_.backward(stem_pool_.backward(df));
}

void BaselineNet::set_training(bool t) {
    training_ = t;
    stem_.set_training(t);
    for (auto& b : blocks_) b.set_training(t);
    head_bn_.training = t;
}

void BaselineNet::zero_grad() {
    stem_.zero_grad();
    for (auto& b : blocks_) b.zero_grad();
    for (auto& t : trans_) t.zero_grad();
    head_conv_.zero_grad();
    head_cbam_.zero_grad();
    head_bn_.zero_grad();
    fc_.zero_grad();
}

void BaselineNet::visit_params(const nn::ParamVisitor& v) {
    stem_.visit_params("stem", v);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].visit_params("blocks." + std::to_string(i), v);
    for (std::size_t i = 0; i < trans_.size(); ++i)
        trans_[i].visit_params("trans." + std::to_string(i), v);
    head_conv_.visit_params("head.agg_conv", v);
    head_cbam_.visit_params("head.cbam", v);
    head_bn_.visit_params("head.bn", v);
    fc_.visit_params("head.fc", v);
}

std::size_t count_params(const std::function<void(const nn::ParamVisitor&)>& visit) {
    std::size_t n = 0;
    visit([&](const nn::ParamRef& p) { n += p.value->size(); });
    return n;
}

}  // namespace pelfa
