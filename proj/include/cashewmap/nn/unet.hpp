#pragma once

// Four-level attention U-Net with per-level input injection.
//
// Encoder stage 0 convolves the level-0 input. Stage s > 0 max-pools the previous
// stage, concatenates the level-s input (whose resolution matches after s poolings),
// fuses with a 1x1 convolution and convolves. A fourth pooling feeds the bottleneck.
// Each decoder stage upsamples (nearest + 3x3 conv), gates the matching encoder skip
// with an additive attention gate, concatenates and convolves. The head is either a
// K-way softmax or a single sigmoid channel.

#include <array>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cashewmap/error.hpp"
#include "cashewmap/nn/ops.hpp"
#include "cashewmap/nn/params.hpp"
#include "cashewmap/nn/tensor.hpp"
#include "cashewmap/patch.hpp"

namespace cashewmap::nn {

enum class HeadType { Softmax, Sigmoid };

inline const char* to_string(HeadType h) { return h == HeadType::Softmax ? "softmax" : "sigmoid"; }

struct ModelConfig {
    int levels = kLevels;
    int patch_size = 256;
    std::array<int, kLevels> input_channels = {4, 6, 6, 6};
    std::array<int, kLevels> widths = {16, 32, 64, 128};
    int bottleneck_width = 128;
    int convs_per_stage = 2;
    int n_categories = 22;           // softmax head size (category codes 0..21)
    double dropout_rate = 0.1;
    int attention_inter_channels = 0;  // 0: half the skip width
    int norm_groups = 4;               // group norm after each 3x3 conv; 0 disables it
    std::uint64_t seed = 1;

    bool operator==(const ModelConfig&) const = default;
};

inline void validate(const ModelConfig& c) {
    if (c.levels != kLevels) throw ConfigError("model must have exactly 4 levels, got " + std::to_string(c.levels));
    if (c.patch_size < 16 || c.patch_size % 16 != 0) throw ConfigError("patch_size must be a positive multiple of 16");
    for (int v : c.input_channels)
        if (v < 1) throw ConfigError("input channel counts must be >= 1");
    for (int v : c.widths)
        if (v < 1) throw ConfigError("encoder widths must be >= 1");
    if (c.bottleneck_width < 1) throw ConfigError("bottleneck width must be >= 1");
    if (c.convs_per_stage < 1) throw ConfigError("convs_per_stage must be >= 1");
    if (c.n_categories < 2) throw ConfigError("softmax head needs at least 2 categories");
    if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0,1)");
    if (c.attention_inter_channels < 0) throw ConfigError("attention_inter_channels must be >= 0");
    if (c.norm_groups < 0) throw ConfigError("norm_groups must be >= 0");
}

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"levels", c.levels},
            {"patch_size", c.patch_size},
            {"input_channels", c.input_channels},
            {"widths", c.widths},
            {"bottleneck_width", c.bottleneck_width},
            {"convs_per_stage", c.convs_per_stage},
            {"n_categories", c.n_categories},
            {"dropout_rate", c.dropout_rate},
            {"attention_inter_channels", c.attention_inter_channels},
            {"norm_groups", c.norm_groups},
            {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.levels = j.value("levels", c.levels);
    c.patch_size = j.value("patch_size", c.patch_size);
    if (j.contains("input_channels")) c.input_channels = j["input_channels"].get<std::array<int, kLevels>>();
    if (j.contains("widths")) c.widths = j["widths"].get<std::array<int, kLevels>>();
    c.bottleneck_width = j.value("bottleneck_width", c.bottleneck_width);
    c.convs_per_stage = j.value("convs_per_stage", c.convs_per_stage);
    c.n_categories = j.value("n_categories", c.n_categories);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.attention_inter_channels = j.value("attention_inter_channels", c.attention_inter_channels);
    c.norm_groups = j.value("norm_groups", c.norm_groups);
    c.seed = j.value("seed", c.seed);
    return c;
}

/// Parameters of one additive attention gate:
/// alpha = sigmoid(psi(relu(Wx * skip + Wg * gating + b))), output = skip * alpha.
struct AttentionGate {
    Conv wx;   // 1x1, no bias
    Conv wg;   // 1x1, with bias
    Conv psi;  // 1x1 to one channel
};

template <typename T>
AttentionGate add_attention_gate(ParameterStore<T>& ps, const std::string& name, int skip_channels,
                                 int gating_channels, int inter_channels, std::mt19937_64& rng,
                                 ParamGroup group = ParamGroup::Gate) {
    AttentionGate g;
    g.wx = add_conv(ps, name + ".wx", group, skip_channels, inter_channels, 1, false, 1.0, rng);
    g.wg = add_conv(ps, name + ".wg", group, gating_channels, inter_channels, 1, true, 1.0, rng);
    g.psi = add_conv(ps, name + ".psi", group, inter_channels, 1, 1, true, 1.0, rng);
    return g;
}

template <typename T>
struct GateCache {
    Tensor<T> gating;  // gating after resampling to the skip resolution
    int factor = 1;
    Tensor<T> act;     // relu(Wx skip + Wg gating + b)
    Tensor<T> alpha;   // 1 x H x W
};

/// Gated skip (same shape as `skip`). A coarser gating field is nearest-upsampled by an
/// integer factor first.
template <typename T>
Tensor<T> attention_gate(const ParameterStore<T>& ps, const AttentionGate& g, const Tensor<T>& skip,
                         const Tensor<T>& gating, Workspace<T>& ws, GateCache<T>* cache = nullptr) {
    GateCache<T> local;
    GateCache<T>& c = cache ? *cache : local;
    if (gating.h == skip.h && gating.w == skip.w) {
        c.factor = 1;
        c.gating = gating;
    } else if (gating.h > 0 && skip.h % gating.h == 0 && skip.w % gating.w == 0 &&
               skip.h / gating.h == skip.w / gating.w) {
        c.factor = skip.h / gating.h;
        c.gating = upsample(gating, c.factor);
    } else {
        throw DataError("attention gate: gating " + std::to_string(gating.h) + "x" + std::to_string(gating.w) +
                        " cannot be resampled to skip " + std::to_string(skip.h) + "x" + std::to_string(skip.w));
    }
    Tensor<T> a, b;
    conv_forward(ps, g.wx, skip, a, ws);
    conv_forward(ps, g.wg, c.gating, b, ws);
    add_inplace(a, b);
    relu_inplace(a);
    c.act = std::move(a);
    conv_forward(ps, g.psi, c.act, c.alpha, ws);
    for (auto& v : c.alpha.data) v = sigmoid(v);
    Tensor<T> out = skip;
    const std::size_t n = skip.plane();
    for (int ch = 0; ch < skip.c; ++ch) {
        T* p = out.channel(ch);
        for (std::size_t i = 0; i < n; ++i) p[i] *= c.alpha.data[i];
    }
    return out;
}

/// Backward of attention_gate: returns (d skip, d gating at the caller's resolution).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> attention_gate_backward(const ParameterStore<T>& ps, std::vector<T>& grad,
                                                        const AttentionGate& g, const Tensor<T>& skip,
                                                        const GateCache<T>& c, const Tensor<T>& dout,
                                                        Workspace<T>& ws) {
    const std::size_t n = skip.plane();
    Tensor<T> dskip(skip.c, skip.h, skip.w);
    Tensor<T> dalpha(1, skip.h, skip.w);
    for (int ch = 0; ch < skip.c; ++ch) {
        const T* d = dout.channel(ch);
        const T* x = skip.channel(ch);
        T* dx = dskip.channel(ch);
        for (std::size_t i = 0; i < n; ++i) {
            dx[i] = d[i] * c.alpha.data[i];
            dalpha.data[i] += d[i] * x[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) dalpha.data[i] *= c.alpha.data[i] * (T(1) - c.alpha.data[i]);
    Tensor<T> dact;
    conv_backward(ps, grad, g.psi, c.act, dalpha, &dact, ws);
    relu_backward_inplace(c.act, dact);
    Tensor<T> dskip2, dgating;
    conv_backward(ps, grad, g.wx, skip, dact, &dskip2, ws);
    conv_backward(ps, grad, g.wg, c.gating, dact, &dgating, ws);
    add_inplace(dskip, dskip2);
    if (c.factor != 1) dgating = upsample_backward(dgating, c.factor);
    return {std::move(dskip), std::move(dgating)};
}

template <typename T>
struct SegModel {
    ModelConfig cfg;
    ParameterStore<T> params;
    std::array<Conv, kLevels> fuse{};  // fuse[0] unused
    std::array<std::vector<Conv>, kLevels> enc;
    std::array<std::vector<Norm>, kLevels> enc_norm;
    std::vector<Conv> bottleneck;
    std::vector<Norm> bottleneck_norm;
    std::array<Conv, kLevels> upconv{};
    std::array<Norm, kLevels> up_norm{};
    std::array<AttentionGate, kLevels> gates{};
    std::array<std::vector<Conv>, kLevels> dec;
    std::array<std::vector<Norm>, kLevels> dec_norm;
    Conv head;
    HeadType head_type = HeadType::Softmax;
    int head_channels = 0;
    int head_first_param = 0;  // head parameters are the trailing block of the store
    bool trained = false;
    int phase = 0;

    int output_channels() const { return head_channels; }
};

template <typename T>
void set_head(SegModel<T>& m, HeadType type, int channels, std::uint64_t seed) {
    if (type == HeadType::Softmax && channels < 2) throw ConfigError("softmax head needs K >= 2");
    if (type == HeadType::Sigmoid) channels = 1;
    m.params.truncate(m.head_first_param);
    std::mt19937_64 rng(seed);
    m.head = add_conv(m.params, "head", ParamGroup::Head, m.cfg.widths[0], channels, 1, true, 1.0, rng);
    m.head_type = type;
    m.head_channels = channels;
}

/// Builds a model with seeded fan-in-scaled initialization and a softmax head.
template <typename T>
SegModel<T> build_model(const ModelConfig& cfg) {
    validate(cfg);
    SegModel<T> m;
    m.cfg = cfg;
    std::mt19937_64 rng(cfg.seed);
    auto& ps = m.params;
    const int n = cfg.convs_per_stage;
    const bool bias = cfg.norm_groups == 0;  // a following norm cancels any bias
    for (int s = 0; s < kLevels; ++s) {
        const auto su = static_cast<std::size_t>(s);
        const std::string p = "enc" + std::to_string(s);
        int cin = cfg.input_channels[0];
        if (s > 0) {
            m.fuse[su] = add_conv(ps, "fuse" + std::to_string(s), ParamGroup::Fuser,
                                  cfg.widths[su - 1] + cfg.input_channels[su], cfg.widths[su], 1, true, 1.0, rng);
            cin = cfg.widths[su];
        }
        for (int k = 0; k < n; ++k) {
            m.enc[su].push_back(add_conv(ps, p + ".conv" + std::to_string(k), ParamGroup::Encoder,
                                         k == 0 ? cin : cfg.widths[su], cfg.widths[su], 3, bias, 2.0, rng));
            m.enc_norm[su].push_back(add_norm(ps, p + ".norm" + std::to_string(k), ParamGroup::Encoder,
                                              cfg.widths[su], cfg.norm_groups));
        }
    }
    for (int k = 0; k < n; ++k) {
        m.bottleneck.push_back(add_conv(ps, "bottleneck.conv" + std::to_string(k), ParamGroup::Bottleneck,
                                        k == 0 ? cfg.widths[3] : cfg.bottleneck_width, cfg.bottleneck_width, 3, bias,
                                        2.0, rng));
        m.bottleneck_norm.push_back(add_norm(ps, "bottleneck.norm" + std::to_string(k), ParamGroup::Bottleneck,
                                             cfg.bottleneck_width, cfg.norm_groups));
    }
    int prev = cfg.bottleneck_width;
    for (int s = kLevels - 1; s >= 0; --s) {
        const auto su = static_cast<std::size_t>(s);
        const std::string p = "dec" + std::to_string(s);
        const int w = cfg.widths[su];
        m.upconv[su] = add_conv(ps, p + ".up", ParamGroup::Decoder, prev, w, 3, bias, 2.0, rng);
        m.up_norm[su] = add_norm(ps, p + ".up_norm", ParamGroup::Decoder, w, cfg.norm_groups);
        const int inter = cfg.attention_inter_channels > 0 ? cfg.attention_inter_channels : std::max(1, w / 2);
        m.gates[su] = add_attention_gate(ps, "gate" + std::to_string(s), w, w, inter, rng);
        for (int k = 0; k < n; ++k) {
            m.dec[su].push_back(add_conv(ps, p + ".conv" + std::to_string(k), ParamGroup::Decoder,
                                         k == 0 ? 2 * w : w, w, 3, bias, 2.0, rng));
            m.dec_norm[su].push_back(add_norm(ps, p + ".norm" + std::to_string(k), ParamGroup::Decoder, w,
                                              cfg.norm_groups));
        }
        prev = w;
    }
    m.head_first_param = static_cast<int>(ps.count());
    set_head(m, HeadType::Softmax, cfg.n_categories, cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    return m;
}

/// Replaces the head with freshly initialized parameters; everything else is untouched.
template <typename T>
SegModel<T> swap_head(SegModel<T> m, HeadType type, int channels = 0, std::uint64_t seed = 0) {
    set_head(m, type, type == HeadType::Softmax ? channels : 1, seed ? seed : (m.cfg.seed ^ 0xC2B2AE3D27D4EB4FULL));
    return m;
}

/// Flags every encoder-side parameter group (encoder, fusers, bottleneck) as frozen.
template <typename T>
SegModel<T> freeze_encoder(SegModel<T> m) {
    m.params.set_frozen(ParamGroup::Encoder, true);
    m.params.set_frozen(ParamGroup::Fuser, true);
    m.params.set_frozen(ParamGroup::Bottleneck, true);
    return m;
}

template <typename T>
bool encoder_frozen(const SegModel<T>& m) {
    return m.params.frozen(ParamGroup::Encoder) && m.params.frozen(ParamGroup::Fuser) &&
           m.params.frozen(ParamGroup::Bottleneck);
}

template <typename T>
std::uint64_t encoder_hash(const SegModel<T>& m) {
    return m.params.hash_where([](const ParamInfo& p) { return is_encoder_side(p.group); });
}

// --- forward / backward --------------------------------------------------------------

template <typename T>
using LevelInputs = std::array<Tensor<T>, kLevels>;

template <typename T>
struct BlockCache {
    std::vector<Tensor<T>> conv_in;  // input of each conv; conv_in[k+1] is the ReLU output of conv k
    std::vector<NormCache<T>> norm;
    Tensor<T> out;                   // ReLU output of the last conv
    std::vector<T> drop;             // channel dropout scales (empty when inactive)
    Tensor<T> out_d;                 // after dropout
};

template <typename T>
struct EncoderCache {
    Tensor<T> pooled;
    std::vector<int> pool_arg;
    Tensor<T> cat;
    BlockCache<T> block;
};

template <typename T>
struct DecoderCache {
    Tensor<T> up;  // upsampled input of the up-convolution
    Tensor<T> g;   // ReLU output of the normalized up-convolution (gating signal)
    NormCache<T> up_norm;
    GateCache<T> gate;
    BlockCache<T> block;  // block.conv_in[0] = concat(gated skip, g)
};

template <typename T>
struct ForwardCache {
    std::array<EncoderCache<T>, kLevels> enc;
    EncoderCache<T> bottleneck;
    std::array<DecoderCache<T>, kLevels> dec;
    Tensor<T> logits;
    Tensor<T> out;  // probabilities
};

struct ForwardOptions {
    double dropout_rate = 0.0;        // applied only when rng is set
    std::mt19937_64* rng = nullptr;
};

namespace unet_detail {

template <typename T>
void run_block(const ParameterStore<T>& ps, const std::vector<Conv>& convs, const std::vector<Norm>& norms,
               Tensor<T> input, BlockCache<T>& c, double rate, std::mt19937_64* rng, Workspace<T>& ws) {
    c.conv_in.clear();
    c.conv_in.push_back(std::move(input));
    c.norm.resize(convs.size());
    for (std::size_t k = 0; k < convs.size(); ++k) {
        Tensor<T> y;
        conv_forward(ps, convs[k], c.conv_in.back(), y, ws);
        norm_forward(ps, norms[k], y, &c.norm[k]);
        relu_inplace(y);
        if (k + 1 < convs.size())
            c.conv_in.push_back(std::move(y));
        else
            c.out = std::move(y);
    }
    c.out_d = c.out;
    c.drop = spatial_dropout(c.out_d, rate, rng);
}

// Returns d(block input); `dout` is the gradient w.r.t. out_d. Skips the input
// gradient when `need_input` is false.
template <typename T>
Tensor<T> block_backward(const ParameterStore<T>& ps, std::vector<T>& grad, const std::vector<Conv>& convs,
                         const std::vector<Norm>& norms, const BlockCache<T>& c, Tensor<T> dout, bool need_input,
                         Workspace<T>& ws) {
    dropout_backward_inplace(c.drop, dout);
    relu_backward_inplace(c.out, dout);
    Tensor<T> d = std::move(dout);
    for (std::size_t k = convs.size(); k-- > 0;) {
        Tensor<T> dx;
        const bool want = k > 0 || need_input;
        norm_backward(ps, grad, norms[k], c.norm[k], d);
        conv_backward(ps, grad, convs[k], c.conv_in[k], d, want ? &dx : nullptr, ws);
        if (!want) return {};
        if (k > 0) relu_backward_inplace(c.conv_in[k], dx);
        d = std::move(dx);
    }
    return d;
}

}  // namespace unet_detail

template <typename T>
void check_inputs(const ModelConfig& cfg, const LevelInputs<T>& in) {
    for (int s = 0; s < kLevels; ++s) {
        const auto& t = in[static_cast<std::size_t>(s)];
        const int expect = cfg.patch_size >> s;
        if (t.c != cfg.input_channels[static_cast<std::size_t>(s)] || t.h != expect || t.w != expect)
            throw DataError("level " + std::to_string(s) + " input is " + std::to_string(t.h) + "x" +
                            std::to_string(t.w) + "x" + std::to_string(t.c) + ", model expects " +
                            std::to_string(expect) + "x" + std::to_string(expect) + "x" +
                            std::to_string(cfg.input_channels[static_cast<std::size_t>(s)]));
    }
}

/// Per-pixel output probabilities (K softmax channels or one sigmoid channel).
/// Dropout is active only when `opt.rng` is set.
template <typename T>
Tensor<T> forward(const SegModel<T>& m, const LevelInputs<T>& in, ForwardCache<T>* cache = nullptr,
                  const ForwardOptions& opt = {}) {
    using namespace unet_detail;
    check_inputs(m.cfg, in);
    ForwardCache<T> local;
    ForwardCache<T>& c = cache ? *cache : local;
    Workspace<T>& ws = Workspace<T>::local();
    const auto& ps = m.params;
    const double rate = opt.rng ? opt.dropout_rate : 0.0;

    for (int s = 0; s < kLevels; ++s) {
        const auto su = static_cast<std::size_t>(s);
        auto& e = c.enc[su];
        // Dropout on the two deepest encoder-side stages: stage 3 and the bottleneck.
        const double r = s == kLevels - 1 ? rate : 0.0;
        if (s == 0) {
            run_block(ps, m.enc[0], m.enc_norm[0], in[0], e.block, r, opt.rng, ws);
            continue;
        }
        e.pooled = maxpool2(c.enc[su - 1].block.out_d, e.pool_arg);
        e.cat = concat(e.pooled, in[su]);
        Tensor<T> fused;
        conv_forward(ps, m.fuse[su], e.cat, fused, ws);
        run_block(ps, m.enc[su], m.enc_norm[su], std::move(fused), e.block, r, opt.rng, ws);
    }
    c.bottleneck.pooled = maxpool2(c.enc[kLevels - 1].block.out_d, c.bottleneck.pool_arg);
    run_block(ps, m.bottleneck, m.bottleneck_norm, c.bottleneck.pooled, c.bottleneck.block, rate, opt.rng, ws);

    const Tensor<T>* prev = &c.bottleneck.block.out_d;
    for (int s = kLevels - 1; s >= 0; --s) {
        const auto su = static_cast<std::size_t>(s);
        auto& d = c.dec[su];
        d.up = upsample(*prev, 2);
        conv_forward(ps, m.upconv[su], d.up, d.g, ws);
        norm_forward(ps, m.up_norm[su], d.g, &d.up_norm);
        relu_inplace(d.g);
        Tensor<T> gated = attention_gate(ps, m.gates[su], c.enc[su].block.out_d, d.g, ws, &d.gate);
        run_block(ps, m.dec[su], m.dec_norm[su], concat(gated, d.g), d.block, rate, opt.rng, ws);
        prev = &d.block.out_d;
    }
    conv_forward(ps, m.head, *prev, c.logits, ws);
    if (m.head_type == HeadType::Softmax) {
        c.out = softmax(c.logits);
    } else {
        c.out = c.logits;
        for (auto& v : c.out.data) v = sigmoid(v);
    }
    return c.out;
}

/// Accumulates parameter gradients of a scalar loss into `grad` given d loss / d output.
/// Encoder-side backpropagation is skipped entirely when those groups are frozen.
template <typename T>
void backward(const SegModel<T>& m, const ForwardCache<T>& c, const Tensor<T>& dout, std::vector<T>& grad) {
    using namespace unet_detail;
    const auto& ps = m.params;
    if (grad.size() != ps.total_size()) grad.assign(ps.total_size(), T(0));
    Workspace<T>& ws = Workspace<T>::local();
    Tensor<T> dlogits;
    if (m.head_type == HeadType::Softmax) {
        dlogits = softmax_backward(c.out, dout);
    } else {
        dlogits = Tensor<T>(dout.c, dout.h, dout.w);
        for (std::size_t i = 0; i < dout.data.size(); ++i) dlogits.data[i] = dout.data[i] * c.out.data[i] * (T(1) - c.out.data[i]);
    }
    Tensor<T> d;
    conv_backward(ps, grad, m.head, c.dec[0].block.out_d, dlogits, &d, ws);

    const bool encoder_trainable = !encoder_frozen(m);
    std::array<Tensor<T>, kLevels> dskip;
    for (int s = 0; s < kLevels; ++s) {
        const auto su = static_cast<std::size_t>(s);
        auto& dc = c.dec[su];
        Tensor<T> dcat = block_backward(ps, grad, m.dec[su], m.dec_norm[su], dc.block, std::move(d), true, ws);
        auto [dgated, dg] = split(dcat, m.cfg.widths[su]);
        auto [ds, dg2] = attention_gate_backward(ps, grad, m.gates[su], c.enc[su].block.out_d, dc.gate, dgated, ws);
        dskip[su] = std::move(ds);
        add_inplace(dg, dg2);
        relu_backward_inplace(dc.g, dg);
        norm_backward(ps, grad, m.up_norm[su], dc.up_norm, dg);
        Tensor<T> dup;
        const bool need_prev = s < kLevels - 1 || encoder_trainable;
        conv_backward(ps, grad, m.upconv[su], dc.up, dg, need_prev ? &dup : nullptr, ws);
        if (need_prev) d = upsample_backward(dup, 2);
    }
    if (!encoder_trainable) return;

    // d now holds the gradient w.r.t. the bottleneck output.
    Tensor<T> dpool = block_backward(ps, grad, m.bottleneck, m.bottleneck_norm, c.bottleneck.block, std::move(d), true, ws);
    Tensor<T> dstage(c.enc[kLevels - 1].block.out_d.c, c.enc[kLevels - 1].block.out_d.h, c.enc[kLevels - 1].block.out_d.w);
    maxpool2_backward(dpool, c.bottleneck.pool_arg, dstage);
    for (int s = kLevels - 1; s >= 0; --s) {
        const auto su = static_cast<std::size_t>(s);
        const auto& e = c.enc[su];
        add_inplace(dstage, dskip[su]);
        Tensor<T> din = block_backward(ps, grad, m.enc[su], m.enc_norm[su], e.block, std::move(dstage), s > 0, ws);
        if (s == 0) break;
        Tensor<T> dcat;
        conv_backward(ps, grad, m.fuse[su], e.cat, din, &dcat, ws);
        auto [dpooled, dlevel] = split(dcat, m.cfg.widths[su - 1]);
        const auto& prev_out = c.enc[su - 1].block.out_d;
        dstage = Tensor<T>(prev_out.c, prev_out.h, prev_out.w);
        maxpool2_backward(dpooled, e.pool_arg, dstage);
    }
}

/// Converts a patch's float levels to the model's scalar type.
template <typename T>
LevelInputs<T> to_inputs(const PatchStack& p) {
    LevelInputs<T> in;
    for (int s = 0; s < kLevels; ++s) {
        const auto su = static_cast<std::size_t>(s);
        if constexpr (std::is_same_v<T, float>)
            in[su] = p.levels[su];
        else
            in[su] = p.levels[su].template cast<T>();
    }
    return in;
}

template <typename T>
Tensor<T> forward(const SegModel<T>& m, const PatchStack& p, const ForwardOptions& opt = {}) {
    ForwardCache<T> cache;
    return forward(m, to_inputs<T>(p), &cache, opt);
}

}  // namespace cashewmap::nn
