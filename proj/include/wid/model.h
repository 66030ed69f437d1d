#ifndef WID_MODEL_H
#define WID_MODEL_H

#include <fstream>
#include <memory>
#include <numeric>

#include "wid/layers.h"

namespace wid {

inline constexpr double kNormEps = 1e-12;

struct VladConfig {
    int clusters = 64;   // K
    int depth = 192;     // D
    double epsilon = kNormEps;
};

struct AttentionConfig {
    int heads = 6;
    int key_dim = 32;
};

struct ModelConfig {
    std::string backbone = "tiny-test";
    bool attention = false;
    int num_classes = 2;
    double dropout_p = 0.5;
    double weight_decay = 1e-4;
    int head_width = 512;
    VladConfig vlad;
    AttentionConfig attn;
    uint64_t init_seed = 1;

    void validate() const {
        if (num_classes < 2) throw std::invalid_argument("model: num_classes must be >= 2");
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw std::invalid_argument("model: dropout must be in [0,1)");
        backbone_channels(backbone);
    }

    static int backbone_channels(const std::string& name) {
        if (name == "resnet50-like") return 2048;
        if (name == "densenet201-like") return 1920;
        if (name == "xception-like") return 2048;
        if (name == "mobilenetv3-large-like") return 960;
        if (name == "tiny-test") return 32;
        throw std::invalid_argument("model: unknown backbone '" + name + "'");
    }
};

// Feature pipeline: images [B,224,224,3] -> F1 [B,7,7,C].
//
// These are shape-compatible stand-in extractors: small convolutional stacks
// that reproduce each named backbone's output contract (7x7 map, matching
// channel count) and expose an ordered weight-layer list for the fine-tune
// policies. tiny-test is the 4-layer stack used by desk-scale tests.
template <typename T>
struct BackboneStack {
    std::vector<Conv2d<T>> convs;
    std::vector<LayerNorm<T>> norms;  // per-position channel norm, one per conv
    int out_channels = 0;

    void init(ModelParams<T>& ps, const std::string& variant, std::mt19937_64& rng) {
        struct Step { int k, stride, pad, cout; };
        std::vector<Step> plan;
        out_channels = ModelConfig::backbone_channels(variant);
        if (variant == "tiny-test") {
            plan = {{4, 4, 0, 8}, {3, 2, 1, 16}, {3, 2, 1, 24}, {3, 2, 1, 32}};
        } else {
            // 27 weight layers so every published fine-tune depth (up to
            // last-25) addresses a real layer.
            int w0 = 16, w1 = 24, w2 = 32, w3 = 48;
            if (variant == "densenet201-like") { w0 = 12; w1 = 24; w2 = 36; w3 = 48; }
            if (variant == "xception-like") { w0 = 16; w1 = 32; w2 = 48; w3 = 64; }
            if (variant == "mobilenetv3-large-like") { w0 = 8; w1 = 16; w2 = 24; w3 = 40; }
            plan.push_back({4, 4, 0, w0});             // 224 -> 56
            for (int i = 0; i < 2; ++i) plan.push_back({3, 1, 1, w0});
            plan.push_back({3, 2, 1, w1});             // -> 28
            for (int i = 0; i < 5; ++i) plan.push_back({3, 1, 1, w1});
            plan.push_back({3, 2, 1, w2});             // -> 14
            for (int i = 0; i < 9; ++i) plan.push_back({3, 1, 1, w2});
            plan.push_back({3, 2, 1, w3});             // -> 7
            for (int i = 0; i < 6; ++i) plan.push_back({3, 1, 1, w3});
            plan.push_back({1, 1, 0, out_channels});   // channel expansion
        }
        int cin = 3;
        char buf[48];
        for (size_t i = 0; i < plan.size(); ++i) {
            std::snprintf(buf, sizeof buf, "backbone.conv%02zu", i);
            Conv2d<T> c;
            c.init(ps, buf, plan[i].k, plan[i].k, cin, plan[i].cout, plan[i].stride, plan[i].pad,
                   rng);
            cin = plan[i].cout;
            convs.push_back(c);
            LayerNorm<T> ln;
            ln.init(ps, std::string(buf) + ".ln", plan[i].cout);
            norms.push_back(ln);
        }
    }

    // conv -> per-channel spatial (instance) norm -> ReLU
    ad::Var<T> forward(Tape<T>& tp, const std::vector<ad::Var<T>>& lv, ad::Var<T> x) const {
        for (size_t i = 0; i < convs.size(); ++i) {
            x = convs[i].forward(tp, lv, x);
            x = ad::relu(tp, ad::instancenorm(tp, x, lv[norms[i].gamma], lv[norms[i].beta],
                                              (T)kNormEps));
        }
        return x;
    }

    int layer_count() const { return (int)convs.size(); }
};

// Multi-scale max pooling over the 7x7 grid (scales 1, 2, 4), each scale
// nearest-upsampled back to 7x7 and concatenated channel-wise: C -> 3C.
template <typename T>
ad::Var<T> spp(Tape<T>& tp, ad::Var<T> x) {
    if (x->value.rank() != 4 || x->value.dim(1) != 7 || x->value.dim(2) != 7)
        throw std::invalid_argument("spp: expected a [B,7,7,C] feature map");
    std::vector<ad::Var<T>> slabs;
    for (int n : {1, 2, 4}) slabs.push_back(ad::spp_scale(tp, x, n));
    return ad::concat_last(tp, slabs);
}

// Content-canonical row order: descriptor rows sorted lexicographically, so
// aggregation sums run in an input-permutation-independent order and the
// descriptor is bit-exactly permutation invariant.
template <typename T>
std::vector<int> canonical_row_order(const Tensor<T>& rows3) {
    const int b = rows3.dim(0), n = rows3.dim(1), d = rows3.dim(2);
    std::vector<int> order((size_t)b * n);
    for (int bi = 0; bi < b; ++bi) {
        int* ord = order.data() + (size_t)bi * n;
        std::iota(ord, ord + n, 0);
        const T* base = rows3.data() + (int64_t)bi * n * d;
        // NaN-safe total order (NaN sorts last) so a poisoned forward pass
        // cannot hand std::sort an inconsistent comparator.
        std::sort(ord, ord + n, [base, d](int x, int y) {
            const T *rx = base + (int64_t)x * d, *ry = base + (int64_t)y * d;
            for (int j = 0; j < d; ++j) {
                const bool nx = std::isnan(rx[j]), ny = std::isnan(ry[j]);
                if (nx || ny) {
                    if (nx && ny) continue;
                    return ny;
                }
                if (rx[j] < ry[j]) return true;
                if (rx[j] > ry[j]) return false;
            }
            return x < y;
        });
    }
    return order;
}

// Cosine-assignment VLAD aggregation over a [B,S,S,D] map with centers [K,D]:
// rows are L2-normalized, scored against the centers by dot product,
// softmax-assigned over clusters, and the assignment-weighted residuals are
// summed per cluster, then intra-(row-)normalized and globally normalized.
// Returns the [B, K*D] descriptor.
template <typename T>
ad::Var<T> netvlad(Tape<T>& tp, ad::Var<T> fmap, ad::Var<T> centers, T eps) {
    const int b = fmap->value.dim(0);
    const int n = fmap->value.dim(1) * fmap->value.dim(2);
    const int d = fmap->value.dim(3);
    const int k = centers->value.dim(0);
    if (centers->value.dim(1) != d)
        throw std::invalid_argument("netvlad: descriptor depth does not match centers");

    auto tokens = ad::reshape(tp, fmap, {b, n, d});
    auto rnorm = ad::l2norm_last(tp, tokens, eps);
    auto gathered = ad::permute_mid(tp, rnorm, canonical_row_order(rnorm->value));
    auto scores = ad::matmul_nt(tp, ad::reshape(tp, gathered, {b * n, d}), centers);
    auto assign = ad::softmax_last(tp, ad::reshape(tp, scores, {b, n, k}));
    auto weighted = ad::bmm_tn(tp, assign, gathered);              // [B,K,D]
    auto center_mass = ad::scale_rows_by(tp, ad::sum_mid(tp, assign), centers);
    auto vlad = ad::sub(tp, weighted, center_mass);
    auto intra = ad::l2norm_last(tp, vlad, eps);
    return ad::l2norm_last(tp, ad::reshape(tp, intra, {b, k * d}), eps);
}

template <typename T>
struct SelfAttentionBlock {
    LayerNorm<T> ln;
    MultiHeadAttention<T> mha;
    int d_model = 0;
    mutable int calls = 0;

    void init(ModelParams<T>& ps, const std::string& name, const AttentionConfig& cfg,
              int d_model_, std::mt19937_64& rng) {
        d_model = d_model_;
        ln.init(ps, name + ".ln", d_model);
        mha.init(ps, name + ".mha", cfg.heads, cfg.key_dim, d_model, d_model, d_model, rng);
    }

    // Pre-norm residual block: x + MHA(LN(x)) with Q = K = V.
    ad::Var<T> forward(Tape<T>& tp, const std::vector<ad::Var<T>>& lv, ad::Var<T> x, T eps) const {
        if (x->value.dim(2) != d_model)
            throw std::invalid_argument("self_attention: token width mismatch");
        ++calls;
        auto normed = ln.forward(tp, lv, x, eps);
        return ad::add(tp, x, mha.forward(tp, lv, normed, normed));
    }
};

template <typename T>
struct CrossAttentionBlock {
    Dense<T> query_proj;    // flattened VLAD -> d_model
    Dense<T> context_proj;  // context tokens -> d_model
    MultiHeadAttention<T> mha;
    int d_model = 0;
    mutable int calls = 0;

    void init(ModelParams<T>& ps, const std::string& name, const AttentionConfig& cfg,
              int vlad_len, int context_width, std::mt19937_64& rng) {
        d_model = cfg.heads * cfg.key_dim;
        query_proj.init(ps, name + ".query", vlad_len, d_model, rng);
        context_proj.init(ps, name + ".context", context_width, d_model, rng);
        mha.init(ps, name + ".mha", cfg.heads, cfg.key_dim, d_model, d_model, d_model, rng);
    }

    // The global descriptor queries the local context tokens; the attended
    // token is residual-added to the projected query.
    ad::Var<T> forward(Tape<T>& tp, const std::vector<ad::Var<T>>& lv, ad::Var<T> vlad_vec,
                       ad::Var<T> context) const {
        ++calls;
        const int b = vlad_vec->value.dim(0);
        const int nk = context->value.dim(1), cw = context->value.dim(2);
        auto q = query_proj.forward(tp, lv, vlad_vec);  // [B,d]
        auto q_tok = ad::reshape(tp, q, {b, 1, d_model});
        auto ctx_flat = ad::reshape(tp, context, {b * nk, cw});
        auto ctx = ad::reshape(tp, context_proj.forward(tp, lv, ctx_flat), {b, nk, d_model});
        auto att = mha.forward(tp, lv, q_tok, ctx);     // [B,1,d]
        return ad::add(tp, q, ad::reshape(tp, att, {b, d_model}));
    }
};

template <typename T>
struct ClassifierHead {
    Dense<T> fc1, fc2;
    double dropout_p = 0.5;

    void init(ModelParams<T>& ps, const std::string& name, int in, int width, int num_classes,
              double dropout, std::mt19937_64& rng) {
        dropout_p = dropout;
        fc1.init(ps, name + ".fc1", in, width, rng, /*regularized=*/true);
        fc2.init(ps, name + ".fc2", width, num_classes, rng);
        // small positive bias keeps the rectifier alive early: the L2
        // normalization behind it turns an all-dead layer into a permanent
        // constant-logit collapse
        auto& b1 = ps.at(fc1.b).value;
        for (int64_t i = 0; i < b1.numel(); ++i) b1[i] = (T)0.05;
    }

    // dense+ReLU -> dropout -> L2 normalize -> dense -> softmax
    ad::Var<T> forward(Tape<T>& tp, const std::vector<ad::Var<T>>& lv, ad::Var<T> x, bool train,
                       std::mt19937_64& rng, T eps) const {
        auto h = ad::relu(tp, fc1.forward(tp, lv, x));
        h = ad::dropout(tp, h, dropout_p, train, rng);
        h = ad::l2norm_last(tp, h, eps);
        return ad::softmax_last(tp, fc2.forward(tp, lv, h));
    }
};

// Mean categorical cross-entropy against one-hot labels.
template <typename T>
ad::Var<T> ce_loss(Tape<T>& tp, ad::Var<T> probs, const Tensor<T>& one_hot) {
    assert(probs->value.same_shape(one_hot));
    const int b = probs->value.dim(0);
    auto lbl = tp.leaf(one_hot, false);
    auto picked = ad::mul(tp, ad::log_eps(tp, probs, (T)kNormEps), lbl);
    return ad::scale(tp, ad::sum_all(tp, picked), T(-1) / (T)b);
}

// The end-to-end pipeline of Fig-4 shape: backbone -> 1x1 reduce -> L2 norm
// -> (self-attention 1) -> SPP -> (self-attention 2) -> NetVLAD ->
// (cross-attention) -> head. Attention blocks run only when cfg.attention.
template <typename T>
class WriterNet {
public:
    struct Forward {
        Tape<T> tape;
        std::vector<ad::Var<T>> leaves;
        ad::Var<T> f1 = nullptr, f2 = nullptr, f3 = nullptr, f4 = nullptr;
        ad::Var<T> vlad = nullptr;        // [B, K*D]
        ad::Var<T> descriptor = nullptr;  // head input
        ad::Var<T> probs = nullptr;
    };

    explicit WriterNet(ModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        std::mt19937_64 rng(cfg_.init_seed);
        backbone_.init(params_, cfg_.backbone, rng);
        reduce_.init(params_, "reduce", 1, 1, backbone_.out_channels, kReducedChannels, 1, 0, rng,
                     /*regularized=*/true);
        const int vlad_len = cfg_.vlad.clusters * cfg_.vlad.depth;
        {
            // Spherical init scaled by 1/sqrt(D).
            Tensor<T> c{{cfg_.vlad.clusters, cfg_.vlad.depth}};
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (int64_t i = 0; i < c.numel(); ++i)
                c[i] = (T)(gauss(rng) / std::sqrt((double)cfg_.vlad.depth));
            vlad_centers_ = params_.add("vlad.centers", std::move(c));
        }
        if (cfg_.attention) {
            sa1_.init(params_, "sa1", cfg_.attn, kReducedChannels, rng);
            sa2_.init(params_, "sa2", cfg_.attn, 3 * kReducedChannels, rng);
            context_ln_.init(params_, "context_ln", kReducedChannels);
            cross_.init(params_, "cross", cfg_.attn, vlad_len, kReducedChannels, rng);
        }
        const int head_in = cfg_.attention ? cfg_.attn.heads * cfg_.attn.key_dim : vlad_len;
        head_.init(params_, "head", head_in, cfg_.head_width, cfg_.num_classes, cfg_.dropout_p,
                   rng);
    }

    // images: [B,224,224,3] in [0,1]
    std::unique_ptr<Forward> forward(const Tensor<T>& images, bool train,
                                     uint64_t dropout_seed = 0) const {
        auto fw = std::make_unique<Forward>();
        Tape<T>& tp = fw->tape;
        fw->leaves = params_.leaves(tp);
        const auto& lv = fw->leaves;
        std::mt19937_64 drop_rng(dropout_seed);
        const T eps = (T)kNormEps;

        auto x = tp.leaf(images, false);
        fw->f1 = backbone_.forward(tp, lv, x);
        fw->f2 = ad::relu(tp, reduce_.forward(tp, lv, fw->f1));
        fw->f3 = ad::l2norm_last(tp, fw->f2, eps);

        const int b = images.dim(0);
        ad::Var<T> pre_spp = fw->f3;
        ad::Var<T> context = nullptr;
        if (cfg_.attention) {
            auto tokens = ad::reshape(tp, fw->f3, {b, 49, kReducedChannels});
            auto refined = sa1_.forward(tp, lv, tokens, eps);
            context = context_ln_.forward(tp, lv, refined, eps);
            pre_spp = ad::reshape(tp, refined, {b, 7, 7, kReducedChannels});
        }
        fw->f4 = spp(tp, pre_spp);
        ad::Var<T> vlad_in = fw->f4;
        if (cfg_.attention) {
            auto tokens = ad::reshape(tp, fw->f4, {b, 49, 3 * kReducedChannels});
            auto refined = sa2_.forward(tp, lv, tokens, eps);
            vlad_in = ad::reshape(tp, refined, {b, 7, 7, 3 * kReducedChannels});
        }
        fw->vlad = netvlad(tp, vlad_in, lv[vlad_centers_], eps);
        fw->descriptor = fw->vlad;
        if (cfg_.attention) fw->descriptor = cross_.forward(tp, lv, fw->vlad, context);
        fw->probs = head_.forward(tp, lv, fw->descriptor, train, drop_rng, eps);
        return fw;
    }

    const ModelConfig& config() const { return cfg_; }
    ModelParams<T>& params() { return params_; }
    const ModelParams<T>& params() const { return params_; }

    int backbone_layer_count() const { return backbone_.layer_count(); }

    // Layer i of the fine-tune ordering = backbone conv i (forward order);
    // each layer's norm parameters freeze and thaw with its kernel.
    void set_backbone_trainable(int first_trainable_layer) {
        for (int i = 0; i < backbone_.layer_count(); ++i) {
            const bool on = i >= first_trainable_layer;
            params_.at(backbone_.convs[i].w).trainable = on;
            params_.at(backbone_.convs[i].b).trainable = on;
            params_.at(backbone_.norms[i].gamma).trainable = on;
            params_.at(backbone_.norms[i].beta).trainable = on;
        }
    }

    bool is_backbone_param(int idx) const {
        return params_.at(idx).name.rfind("backbone.", 0) == 0;
    }

    int attention_calls() const {
        return cfg_.attention ? sa1_.calls + sa2_.calls + cross_.calls : 0;
    }
    void reset_attention_calls() {
        if (!cfg_.attention) return;
        sa1_.calls = sa2_.calls = cross_.calls = 0;
    }

    static constexpr int kReducedChannels = 64;

private:
    ModelConfig cfg_;
    ModelParams<T> params_;
    BackboneStack<T> backbone_;
    Conv2d<T> reduce_;
    int vlad_centers_ = -1;
    SelfAttentionBlock<T> sa1_, sa2_;
    LayerNorm<T> context_ln_;
    CrossAttentionBlock<T> cross_;
    ClassifierHead<T> head_;
};

// ---- checkpoint io ----------------------------------------------------
// Single binary archive of named tensors, doubles on disk.

template <typename T>
void save_checkpoint(const std::string& path, const ModelParams<T>& ps) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
    const char magic[8] = {'W', 'I', 'D', 'C', 'K', 'P', 'T', '1'};
    f.write(magic, 8);
    uint32_t count = (uint32_t)ps.size();
    f.write((const char*)&count, 4);
    for (int i = 0; i < ps.size(); ++i) {
        const auto& e = ps.at(i);
        uint32_t nlen = (uint32_t)e.name.size();
        f.write((const char*)&nlen, 4);
        f.write(e.name.data(), nlen);
        uint32_t rank = (uint32_t)e.value.rank();
        f.write((const char*)&rank, 4);
        for (int r = 0; r < (int)rank; ++r) {
            uint32_t d = (uint32_t)e.value.dim(r);
            f.write((const char*)&d, 4);
        }
        for (int64_t j = 0; j < e.value.numel(); ++j) {
            double v = (double)e.value[j];
            f.write((const char*)&v, 8);
        }
    }
}

// Loads tensors by name. With a prefix filter only matching names are
// touched; otherwise every model parameter must be present in the archive.
// match_any loads whatever names + shapes line up (warm starts across
// model variants) and never throws on leftovers.
template <typename T>
int load_checkpoint(const std::string& path, ModelParams<T>& ps, const std::string& prefix = "",
                    bool match_any = false) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot read " + path);
    char magic[8];
    f.read(magic, 8);
    if (std::string(magic, 8) != "WIDCKPT1")
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t count = 0;
    f.read((char*)&count, 4);
    std::vector<bool> loaded(ps.size(), false);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t nlen = 0;
        f.read((char*)&nlen, 4);
        std::string name(nlen, '\0');
        f.read(name.data(), nlen);
        uint32_t rank = 0;
        f.read((char*)&rank, 4);
        std::vector<int> dims(rank);
        int64_t n = 1;
        for (auto& d : dims) {
            uint32_t v = 0;
            f.read((char*)&v, 4);
            d = (int)v;
            n *= d;
        }
        std::vector<double> data(n);
        f.read((char*)data.data(), n * 8);
        if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
        int idx = ps.find(name);
        if (idx < 0) {
            if (match_any || !prefix.empty()) continue;
            throw std::runtime_error("checkpoint: unknown tensor '" + name + "'");
        }
        auto& e = ps.at(idx);
        if (e.value.shape() != dims) {
            if (match_any) continue;
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        }
        for (int64_t j = 0; j < n; ++j) e.value[j] = (T)data[j];
        loaded[idx] = true;
    }
    int nloaded = 0;
    for (int i = 0; i < ps.size(); ++i) {
        if (loaded[i]) ++nloaded;
        const bool wanted = !match_any && (prefix.empty() || ps.at(i).name.rfind(prefix, 0) == 0);
        if (wanted && !loaded[i])
            throw std::runtime_error("checkpoint: missing tensor '" + ps.at(i).name + "'");
    }
    return nloaded;
}

}  // namespace wid

#endif
