// Copyright 2026 Speech-Mamba C++ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Speech-Mamba ASR model: convolutional speech frontend, encoder blocks of
// the form Mamba -> RMS-ATT -> Mamba, decoder blocks of the form
// Mamba -> RMS-STA -> Mamba (no self-attention), a CTC head on the encoder
// output and a token projection on the decoder output. Transformer encoder
// and decoder blocks are available as ablation variants.
//
// Token id scheme: 0 is the CTC blank and never enters the text pipeline;
// ids 1..V are real tokens with 1 = BOS and 2 = EOS. The embedding table and
// the decoder projection cover ids 1..V (row/column j maps to id j+1); the
// CTC head emits V+1 classes where class 0 is the blank and class k is id k.

#ifndef SPEECHMAMBA_MODEL_HPP
#define SPEECHMAMBA_MODEL_HPP

#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "speechmamba/nn.hpp"
#include "speechmamba/ssm.hpp"
#include "speechmamba/tensor.hpp"

namespace sm {

constexpr std::int64_t kBlankId = 0;
constexpr std::int64_t kBosId = 1;
constexpr std::int64_t kEosId = 2;

struct ModelConfig {
    std::int64_t d_model = 512;
    std::int64_t num_heads = 8;
    std::int64_t encoder_blocks = 7;
    std::int64_t decoder_blocks = 3;
    std::int64_t conv_width = 4;
    std::int64_t ssm_state = 256;
    std::int64_t expand = 2;
    std::int64_t vocab_size = 0;  // ids 1..V; blank is extra
    double dropout_p = 0.1;
    std::int64_t frontend_subsample = 4;  // two stride-2 convolutions
    std::int64_t frontend_channels = 128;
    std::int64_t feat_dim = 80;
    std::int64_t ffn_dim = 2048;  // transformer variant blocks
    bool mamba_encoder = true;
    bool mamba_decoder = true;
    bool use_s2s = true;
    bool posenc_encoder = true;
    bool parallel_scan = true;

    std::int64_t d_inner() const { return expand * d_model; }

    void validate() const {
        if (d_model < 1 || num_heads < 1 || encoder_blocks < 1 || conv_width < 1 ||
            ssm_state < 1 || expand < 1 || feat_dim < 1 || frontend_channels < 1)
            throw ValueError("ModelConfig: dimensions must be positive");
        if (use_s2s && decoder_blocks < 1)
            throw ValueError("ModelConfig: decoder_blocks must be positive when use_s2s");
        if (d_model % num_heads != 0)
            throw ValueError("ModelConfig: d_model " + std::to_string(d_model) +
                             " not divisible by num_heads " + std::to_string(num_heads));
        if (vocab_size < 3)
            throw ValueError("ModelConfig: vocab_size must cover BOS, EOS and symbols");
        if (frontend_subsample != 4)
            throw ValueError("ModelConfig: the conv frontend realizes subsample 4");
    }

    // Reference size: the defaults above (d=512, 7 encoder / 3 decoder blocks).
    static ModelConfig reference_default(std::int64_t vocab) {
        ModelConfig c;
        c.vocab_size = vocab;
        return c;
    }

    // Matched attention baseline: 12 encoder / 6 decoder transformer blocks.
    static ModelConfig transformer_baseline(std::int64_t vocab) {
        ModelConfig c;
        c.vocab_size = vocab;
        c.mamba_encoder = false;
        c.mamba_decoder = false;
        c.encoder_blocks = 12;
        c.decoder_blocks = 6;
        return c;
    }
};

// ---------------------------------------------------------------------------
// Masks

// Key-padding mask [B,1,1,Tk] with 1 where the key is a real frame.
inline BoolMask key_padding_mask(const std::vector<std::int64_t>& lens, std::int64_t Tk) {
    const std::int64_t B = static_cast<std::int64_t>(lens.size());
    std::vector<std::uint8_t> m(static_cast<std::size_t>(B * Tk), 0);
    for (std::int64_t b = 0; b < B; ++b) {
        if (lens[b] < 1 || lens[b] > Tk)
            throw ValueError("key_padding_mask: length " + std::to_string(lens[b]) +
                             " outside [1," + std::to_string(Tk) + "]");
        for (std::int64_t t = 0; t < lens[b]; ++t) m[b * Tk + t] = 1;
    }
    return BoolMask({B, 1, 1, Tk}, std::move(m));
}

inline bool all_full_length(const std::vector<std::int64_t>& lens, std::int64_t Tk) {
    for (auto l : lens)
        if (l != Tk) return false;
    return true;
}

// Causal + key-padding mask [B,1,T,T] for transformer decoder self-attention.
inline BoolMask causal_padding_mask(const std::vector<std::int64_t>& lens, std::int64_t T) {
    const std::int64_t B = static_cast<std::int64_t>(lens.size());
    std::vector<std::uint8_t> m(static_cast<std::size_t>(B * T * T), 0);
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t q = 0; q < T; ++q)
            for (std::int64_t k = 0; k <= q; ++k)
                if (k < lens[b] || k == 0) m[(b * T + q) * T + k] = 1;
    return BoolMask({B, 1, T, T}, std::move(m));
}

// ---------------------------------------------------------------------------
// Mamba block

struct MambaBlock {
    RmsNorm norm;
    Linear in_proj;    // d_model -> d_inner
    Linear gate_proj;  // d_model -> d_inner
    Linear out_proj;   // d_inner -> d_model, zero-initialized
    Tensor conv_kernel;  // [d_inner, conv_width]
    Tensor conv_bias;    // [d_inner]
    SsmParams ssm;
};

inline MambaBlock make_mamba_block(ParamRegistry& reg, const std::string& name,
                                   const ModelConfig& cfg) {
    MambaBlock b;
    const std::int64_t d = cfg.d_model, di = cfg.d_inner(), W = cfg.conv_width;
    b.norm = make_rms_norm(reg, name + ".norm", d);
    b.in_proj = make_linear(reg, name + ".in_proj", d, di);
    b.gate_proj = make_linear(reg, name + ".gate_proj", d, di);
    b.out_proj = make_linear(reg, name + ".out_proj", di, d, true, true);
    const double s = 1.0 / std::sqrt(double(W));
    b.conv_kernel = reg.add(name + ".conv.kernel", Tensor::rand_uniform({di, W}, -s, s));
    b.conv_bias = reg.add(name + ".conv.bias", Tensor::zeros({di}));
    SsmConfig sc;
    sc.d_inner = di;
    sc.state_dim = cfg.ssm_state;
    b.ssm = make_ssm_params(reg, name + ".ssm", sc);
    return b;
}

inline Tensor mamba_block_forward(const MambaBlock& b, const Tensor& x, const ModelConfig& cfg,
                                  bool training) {
    Tensor u = b.norm(x);
    Tensor main = silu(causal_depthwise_conv1d(b.in_proj(u), b.conv_kernel, b.conv_bias));
    main = selective_ssm_forward(main, b.ssm, cfg.parallel_scan);
    Tensor gated = main * silu(b.gate_proj(u));
    return x + dropout(b.out_proj(gated), cfg.dropout_p, training);
}

// ---------------------------------------------------------------------------
// Encoder / decoder blocks

struct EncoderBlock {
    MambaBlock mamba1, mamba2;
    RmsNorm att_norm;
    AttentionParams att;
};

inline EncoderBlock make_encoder_block(ParamRegistry& reg, const std::string& name,
                                       const ModelConfig& cfg) {
    EncoderBlock e;
    e.mamba1 = make_mamba_block(reg, name + ".mamba1", cfg);
    e.mamba2 = make_mamba_block(reg, name + ".mamba2", cfg);
    e.att_norm = make_rms_norm(reg, name + ".att_norm", cfg.d_model);
    e.att = make_attention(reg, name + ".att", cfg.d_model, cfg.num_heads);
    return e;
}

inline Tensor encoder_block_forward(const EncoderBlock& e, const Tensor& x,
                                    const BoolMask* src_mask, const ModelConfig& cfg,
                                    bool training) {
    Tensor h = mamba_block_forward(e.mamba1, x, cfg, training);
    Tensor n = e.att_norm(h);
    Tensor a = multi_head_attention(e.att, n, n, src_mask, cfg.dropout_p, training);
    h = h + dropout(a, cfg.dropout_p, training);
    return mamba_block_forward(e.mamba2, h, cfg, training);
}

struct DecoderBlock {
    MambaBlock mamba1, mamba2;
    RmsNorm att_norm;
    AttentionParams cross_att;
};

inline DecoderBlock make_decoder_block(ParamRegistry& reg, const std::string& name,
                                       const ModelConfig& cfg) {
    DecoderBlock d;
    d.mamba1 = make_mamba_block(reg, name + ".mamba1", cfg);
    d.mamba2 = make_mamba_block(reg, name + ".mamba2", cfg);
    d.att_norm = make_rms_norm(reg, name + ".att_norm", cfg.d_model);
    d.cross_att = make_attention(reg, name + ".cross_att", cfg.d_model, cfg.num_heads);
    return d;
}

// tgt_mask is accepted for interface parity; text-side causality is carried
// entirely by the causal Mamba components, and padded target positions are
// excluded in the loss.
inline Tensor decoder_block_forward(const DecoderBlock& d, const Tensor& y, const Tensor& enc_out,
                                    const BoolMask* /*tgt_mask*/, const BoolMask* memory_mask,
                                    const ModelConfig& cfg, bool training) {
    Tensor h = mamba_block_forward(d.mamba1, y, cfg, training);
    Tensor n = d.att_norm(h);
    Tensor a = multi_head_attention(d.cross_att, n, enc_out, memory_mask, cfg.dropout_p, training);
    h = h + dropout(a, cfg.dropout_p, training);
    return mamba_block_forward(d.mamba2, h, cfg, training);
}

// ---------------------------------------------------------------------------
// Transformer variant blocks (pre-norm, FFN with ReLU)

struct TransformerEncoderBlock {
    LayerNorm ln1, ln2;
    AttentionParams att;
    Linear ffn1, ffn2;
};

inline TransformerEncoderBlock make_transformer_encoder_block(ParamRegistry& reg,
                                                              const std::string& name,
                                                              const ModelConfig& cfg) {
    TransformerEncoderBlock t;
    t.ln1 = make_layer_norm(reg, name + ".ln1", cfg.d_model);
    t.ln2 = make_layer_norm(reg, name + ".ln2", cfg.d_model);
    t.att = make_attention(reg, name + ".att", cfg.d_model, cfg.num_heads);
    t.ffn1 = make_linear(reg, name + ".ffn1", cfg.d_model, cfg.ffn_dim);
    t.ffn2 = make_linear(reg, name + ".ffn2", cfg.ffn_dim, cfg.d_model, true, true);
    return t;
}

inline Tensor transformer_encoder_block_forward(const TransformerEncoderBlock& t, const Tensor& x,
                                                const BoolMask* src_mask, const ModelConfig& cfg,
                                                bool training) {
    Tensor n = t.ln1(x);
    Tensor h = x + dropout(multi_head_attention(t.att, n, n, src_mask, cfg.dropout_p, training),
                           cfg.dropout_p, training);
    Tensor f = t.ffn2(dropout(relu(t.ffn1(t.ln2(h))), cfg.dropout_p, training));
    return h + dropout(f, cfg.dropout_p, training);
}

struct TransformerDecoderBlock {
    LayerNorm ln1, ln2, ln3;
    AttentionParams self_att, cross_att;
    Linear ffn1, ffn2;
};

inline TransformerDecoderBlock make_transformer_decoder_block(ParamRegistry& reg,
                                                              const std::string& name,
                                                              const ModelConfig& cfg) {
    TransformerDecoderBlock t;
    t.ln1 = make_layer_norm(reg, name + ".ln1", cfg.d_model);
    t.ln2 = make_layer_norm(reg, name + ".ln2", cfg.d_model);
    t.ln3 = make_layer_norm(reg, name + ".ln3", cfg.d_model);
    t.self_att = make_attention(reg, name + ".self_att", cfg.d_model, cfg.num_heads);
    t.cross_att = make_attention(reg, name + ".cross_att", cfg.d_model, cfg.num_heads);
    t.ffn1 = make_linear(reg, name + ".ffn1", cfg.d_model, cfg.ffn_dim);
    t.ffn2 = make_linear(reg, name + ".ffn2", cfg.ffn_dim, cfg.d_model, true, true);
    return t;
}

inline Tensor transformer_decoder_block_forward(const TransformerDecoderBlock& t, const Tensor& y,
                                                const Tensor& enc_out, const BoolMask* tgt_mask,
                                                const BoolMask* memory_mask,
                                                const ModelConfig& cfg, bool training) {
    Tensor n = t.ln1(y);
    Tensor h = y + dropout(
                       multi_head_attention(t.self_att, n, n, tgt_mask, cfg.dropout_p, training),
                       cfg.dropout_p, training);
    Tensor n2 = t.ln2(h);
    h = h + dropout(multi_head_attention(t.cross_att, n2, enc_out, memory_mask, cfg.dropout_p,
                                         training),
                    cfg.dropout_p, training);
    Tensor f = t.ffn2(dropout(relu(t.ffn1(t.ln3(h))), cfg.dropout_p, training));
    return h + dropout(f, cfg.dropout_p, training);
}

// ---------------------------------------------------------------------------
// Frontend: two stride-2 3x3 convolutions, linear to d_model, positional
// encoding. Time length maps to ceil(T/4).

struct Frontend {
    Conv2d conv1, conv2;
    Linear proj;
};

inline std::int64_t subsampled_length(std::int64_t T) {
    auto half = [](std::int64_t t) { return (t - 1) / 2 + 1; };
    return half(half(T));
}

inline Frontend make_frontend(ParamRegistry& reg, const std::string& name,
                              const ModelConfig& cfg) {
    Frontend f;
    const std::int64_t C = cfg.frontend_channels;
    f.conv1 = make_conv2d(reg, name + ".conv1", 1, C, 3, 2, 1);
    f.conv2 = make_conv2d(reg, name + ".conv2", C, C, 3, 2, 1);
    const std::int64_t freq_out = subsampled_length(cfg.feat_dim);
    f.proj = make_linear(reg, name + ".proj", C * freq_out, cfg.d_model);
    return f;
}

// features: [B,T,feat_dim] -> [B, ceil(T/4), d_model]
inline Tensor frontend_forward(const Frontend& f, const Tensor& features, const ModelConfig& cfg,
                               bool training) {
    const std::int64_t B = features.dim(0), T = features.dim(1), F = features.dim(2);
    if (F != cfg.feat_dim)
        throw ShapeError("frontend: expected feat_dim " + std::to_string(cfg.feat_dim) +
                         ", got " + shape_str(features.shape()));
    if (T < cfg.frontend_subsample)
        throw ValueError("frontend: " + std::to_string(T) + " frames is shorter than the " +
                         std::to_string(cfg.frontend_subsample) + "x subsampling");
    Tensor x = reshape(features, {B, 1, T, F});
    x = relu(f.conv1(x));
    x = relu(f.conv2(x));  // [B, C, T4, F4]
    const std::int64_t T4 = x.dim(2), F4 = x.dim(3);
    x = reshape(transpose(x, {0, 2, 1, 3}), {B, T4, x.dim(1) * F4});
    x = f.proj(x);
    if (cfg.posenc_encoder) x = x + sinusoidal_positional_encoding(T4, cfg.d_model);
    return dropout(x, cfg.dropout_p, training);
}

// ---------------------------------------------------------------------------
// Full model

struct SpeechMambaModel {
    ModelConfig cfg;
    ParamRegistry reg;
    Frontend frontend;
    std::vector<EncoderBlock> enc_blocks;
    std::vector<TransformerEncoderBlock> enc_blocks_tf;
    std::vector<DecoderBlock> dec_blocks;
    std::vector<TransformerDecoderBlock> dec_blocks_tf;
    RmsNorm enc_norm;
    RmsNorm dec_norm;
    Embedding embedding;  // rows cover ids 1..V
    Linear ctc_head;      // d_model -> V+1, class 0 = blank
    Linear out_proj;      // d_model -> V, column j = id j+1
};

inline SpeechMambaModel build_variant(const ModelConfig& cfg) {
    cfg.validate();
    SpeechMambaModel m;
    m.cfg = cfg;
    m.frontend = make_frontend(m.reg, "frontend", cfg);
    for (std::int64_t i = 0; i < cfg.encoder_blocks; ++i) {
        const std::string name = "encoder." + std::to_string(i);
        if (cfg.mamba_encoder)
            m.enc_blocks.push_back(make_encoder_block(m.reg, name, cfg));
        else
            m.enc_blocks_tf.push_back(make_transformer_encoder_block(m.reg, name, cfg));
    }
    m.enc_norm = make_rms_norm(m.reg, "encoder.norm", cfg.d_model);
    m.ctc_head = make_linear(m.reg, "ctc_head", cfg.d_model, cfg.vocab_size + 1);
    if (cfg.use_s2s) {
        m.embedding = make_embedding(m.reg, "embedding", cfg.vocab_size, cfg.d_model);
        for (std::int64_t i = 0; i < cfg.decoder_blocks; ++i) {
            const std::string name = "decoder." + std::to_string(i);
            if (cfg.mamba_decoder)
                m.dec_blocks.push_back(make_decoder_block(m.reg, name, cfg));
            else
                m.dec_blocks_tf.push_back(make_transformer_decoder_block(m.reg, name, cfg));
        }
        m.dec_norm = make_rms_norm(m.reg, "decoder.norm", cfg.d_model);
        m.out_proj = make_linear(m.reg, "out_proj", cfg.d_model, cfg.vocab_size);
    }
    return m;
}

inline SpeechMambaModel build_model(const ModelConfig& cfg) { return build_variant(cfg); }

inline std::int64_t param_count(const SpeechMambaModel& m) { return m.reg.total_size(); }

// Encoder: frontend -> blocks -> final norm. Returns enc_out and writes the
// subsampled per-sample lengths.
inline Tensor encode(const SpeechMambaModel& m, const Tensor& features,
                     const std::vector<std::int64_t>& feat_lens,
                     std::vector<std::int64_t>& enc_lens, bool training = false) {
    const std::int64_t B = features.dim(0), T = features.dim(1);
    if (static_cast<std::int64_t>(feat_lens.size()) != B)
        throw ShapeError("encode: feat_lens size " + std::to_string(feat_lens.size()) +
                         " vs batch " + std::to_string(B));
    for (auto l : feat_lens)
        if (l < 1 || l > T) throw ValueError("encode: invalid feature length");
    Tensor x = frontend_forward(m.frontend, features, m.cfg, training);
    const std::int64_t T4 = x.dim(1);
    enc_lens.resize(feat_lens.size());
    for (std::size_t i = 0; i < feat_lens.size(); ++i) enc_lens[i] = subsampled_length(feat_lens[i]);
    BoolMask mask;
    const bool need_mask = !all_full_length(enc_lens, T4);
    if (need_mask) mask = key_padding_mask(enc_lens, T4);
    const BoolMask* mp = need_mask ? &mask : nullptr;
    if (m.cfg.mamba_encoder)
        for (const auto& blk : m.enc_blocks)
            x = encoder_block_forward(blk, x, mp, m.cfg, training);
    else
        for (const auto& blk : m.enc_blocks_tf)
            x = transformer_encoder_block_forward(blk, x, mp, m.cfg, training);
    return m.enc_norm(x);
}

// Decoder over BOS-prefixed token ids (values in 1..V).
inline Tensor decode_s2s(const SpeechMambaModel& m, const IntTensor& tokens_in,
                         const Tensor& enc_out, const std::vector<std::int64_t>& enc_lens,
                         bool training = false,
                         const std::vector<std::int64_t>* token_lens = nullptr) {
    if (!m.cfg.use_s2s) throw ValueError("decode_s2s: model built without a decoder");
    if (tokens_in.shape.size() != 2)
        throw ShapeError("decode_s2s: tokens must be [B,Ty]");
    const std::int64_t B = tokens_in.shape[0], Ty = tokens_in.shape[1];
    IntTensor rows = tokens_in;
    for (auto& id : rows.data) {
        if (id < 1 || id > m.cfg.vocab_size)
            throw ValueError("decode_s2s: token id " + std::to_string(id) +
                             " outside [1," + std::to_string(m.cfg.vocab_size) + "]");
        id -= 1;
    }
    Tensor y = m.embedding(rows) * std::sqrt(double(m.cfg.d_model));
    y = y + sinusoidal_positional_encoding(Ty, m.cfg.d_model);
    y = dropout(y, m.cfg.dropout_p, training);
    const std::int64_t Tk = enc_out.dim(1);
    BoolMask mem_mask;
    const bool need_mem = !all_full_length(enc_lens, Tk);
    if (need_mem) mem_mask = key_padding_mask(enc_lens, Tk);
    const BoolMask* memp = need_mem ? &mem_mask : nullptr;
    if (m.cfg.mamba_decoder) {
        for (const auto& blk : m.dec_blocks)
            y = decoder_block_forward(blk, y, enc_out, nullptr, memp, m.cfg, training);
    } else {
        std::vector<std::int64_t> tl =
            token_lens ? *token_lens : std::vector<std::int64_t>(B, Ty);
        BoolMask tgt = causal_padding_mask(tl, Ty);
        for (const auto& blk : m.dec_blocks_tf)
            y = transformer_decoder_block_forward(blk, y, enc_out, &tgt, memp, m.cfg, training);
    }
    return m.out_proj(m.dec_norm(y));
}

struct AsrForward {
    Tensor ctc_logits;  // [B, T', V+1]
    Tensor s2s_logits;  // [B, Ty, V]; undefined when use_s2s = false
    Tensor enc_out;     // [B, T', d_model]
    std::vector<std::int64_t> enc_lens;
};

inline AsrForward forward_asr(const SpeechMambaModel& m, const Tensor& features,
                              const std::vector<std::int64_t>& feat_lens,
                              const IntTensor& tokens_in, bool training = false,
                              const std::vector<std::int64_t>* token_lens = nullptr) {
    AsrForward out;
    out.enc_out = encode(m, features, feat_lens, out.enc_lens, training);
    out.ctc_logits = m.ctc_head(out.enc_out);
    if (m.cfg.use_s2s)
        out.s2s_logits = decode_s2s(m, tokens_in, out.enc_out, out.enc_lens, training, token_lens);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint container: "SMCK" magic, version, JSON metadata blob, then
// name -> shape + row-major doubles. Round-trips bit-exactly.

namespace detail {

inline void write_u32(std::FILE* f, std::uint32_t v) {
    if (std::fwrite(&v, sizeof v, 1, f) != 1) throw IoError("checkpoint: short write");
}
inline void write_u64(std::FILE* f, std::uint64_t v) {
    if (std::fwrite(&v, sizeof v, 1, f) != 1) throw IoError("checkpoint: short write");
}
inline std::uint32_t read_u32(std::FILE* f) {
    std::uint32_t v;
    if (std::fread(&v, sizeof v, 1, f) != 1) throw IoError("checkpoint: short read");
    return v;
}
inline std::uint64_t read_u64(std::FILE* f) {
    std::uint64_t v;
    if (std::fread(&v, sizeof v, 1, f) != 1) throw IoError("checkpoint: short read");
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& params,
                            const std::string& metadata_json = "{}") {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("checkpoint: cannot open " + path + " for writing");
    try {
        if (std::fwrite("SMCK", 1, 4, f) != 4) throw IoError("checkpoint: short write");
        detail::write_u32(f, 1);
        detail::write_u64(f, metadata_json.size());
        if (!metadata_json.empty() &&
            std::fwrite(metadata_json.data(), 1, metadata_json.size(), f) != metadata_json.size())
            throw IoError("checkpoint: short write");
        detail::write_u64(f, params.size());
        for (const auto& [name, t] : params) {
            detail::write_u32(f, static_cast<std::uint32_t>(name.size()));
            if (std::fwrite(name.data(), 1, name.size(), f) != name.size())
                throw IoError("checkpoint: short write");
            const Shape& sh = t.shape();
            detail::write_u32(f, static_cast<std::uint32_t>(sh.size()));
            for (auto d : sh) detail::write_u64(f, static_cast<std::uint64_t>(d));
            const auto& data = t.data();
            if (!data.empty() &&
                std::fwrite(data.data(), sizeof(double), data.size(), f) != data.size())
                throw IoError("checkpoint: short write");
        }
    } catch (...) {
        std::fclose(f);
        throw;
    }
    if (std::fclose(f) != 0) throw IoError("checkpoint: close failed for " + path);
}

struct Checkpoint {
    std::string metadata_json;
    std::vector<std::pair<std::string, Tensor>> params;
};

inline Checkpoint read_checkpoint(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("checkpoint: cannot open " + path);
    Checkpoint ck;
    try {
        char magic[4];
        if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "SMCK", 4) != 0)
            throw IoError("checkpoint: bad magic in " + path);
        const std::uint32_t version = detail::read_u32(f);
        if (version != 1)
            throw IoError("checkpoint: unsupported version " + std::to_string(version));
        const std::uint64_t meta_len = detail::read_u64(f);
        ck.metadata_json.resize(meta_len);
        if (meta_len && std::fread(ck.metadata_json.data(), 1, meta_len, f) != meta_len)
            throw IoError("checkpoint: short read");
        const std::uint64_t n = detail::read_u64(f);
        for (std::uint64_t i = 0; i < n; ++i) {
            const std::uint32_t name_len = detail::read_u32(f);
            std::string name(name_len, '\0');
            if (name_len && std::fread(name.data(), 1, name_len, f) != name_len)
                throw IoError("checkpoint: short read");
            const std::uint32_t rank = detail::read_u32(f);
            Shape sh(rank);
            for (auto& d : sh) d = static_cast<std::int64_t>(detail::read_u64(f));
            std::vector<double> data(static_cast<std::size_t>(numel(sh)));
            if (!data.empty() &&
                std::fread(data.data(), sizeof(double), data.size(), f) != data.size())
                throw IoError("checkpoint: short read");
            ck.params.emplace_back(std::move(name), Tensor::from_data(sh, std::move(data)));
        }
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
    return ck;
}

inline void save_checkpoint(const std::string& path, const SpeechMambaModel& m,
                            const std::string& metadata_json = "{}") {
    save_checkpoint(path, m.reg.items(), metadata_json);
}

// Loads values into an existing registry; every checkpoint entry must match
// an existing parameter name and shape, and every parameter must be covered.
inline std::string load_checkpoint(const std::string& path, ParamRegistry& reg) {
    Checkpoint ck = read_checkpoint(path);
    std::map<std::string, Tensor> found;
    for (auto& [name, t] : ck.params) {
        if (!reg.has(name)) throw IoError("checkpoint: unknown parameter " + name);
        Tensor dst = reg.get(name);
        if (dst.shape() != t.shape())
            throw IoError("checkpoint: shape mismatch for " + name + ": file " +
                          shape_str(t.shape()) + " vs model " + shape_str(dst.shape()));
        dst.data() = t.data();
        found.emplace(name, t);
    }
    for (const auto& [name, t] : reg.items())
        if (!found.count(name)) throw IoError("checkpoint: missing parameter " + name);
    return ck.metadata_json;
}

}  // namespace sm

#endif  // SPEECHMAMBA_MODEL_HPP
