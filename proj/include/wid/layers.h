#ifndef WID_LAYERS_H
#define WID_LAYERS_H

#include <random>
#include <stdexcept>
#include <string>

#include "wid/ops.h"

namespace wid {

// Named parameter registry. Registration order is stable and defines the
// checkpoint layout; `trainable` is toggled by the fine-tune policy and
// `regularized` marks kernels that carry weight decay.
template <typename T>
class ModelParams {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        bool trainable = true;
        bool regularized = false;
    };

    int add(std::string name, Tensor<T> value, bool regularized = false) {
        entries_.push_back({std::move(name), std::move(value), true, regularized});
        return (int)entries_.size() - 1;
    }

    Entry& at(int i) { return entries_[i]; }
    const Entry& at(int i) const { return entries_[i]; }
    int size() const { return (int)entries_.size(); }

    int find(const std::string& name) const {
        for (int i = 0; i < size(); ++i)
            if (entries_[i].name == name) return i;
        return -1;
    }

    // One tape leaf per parameter, in registry order.
    std::vector<ad::Var<T>> leaves(Tape<T>& tp) const {
        std::vector<ad::Var<T>> lv;
        lv.reserve(entries_.size());
        for (const auto& e : entries_) lv.push_back(tp.leaf(e.value, e.trainable));
        return lv;
    }

private:
    std::vector<Entry> entries_;
};

template <typename T>
Tensor<T> glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, std::mt19937_64& rng) {
    Tensor<T> t{std::move(shape)};
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = (T)dist(rng);
    return t;
}

template <typename T>
struct Dense {
    int w = -1, b = -1;
    int in = 0, out = 0;

    void init(ModelParams<T>& ps, const std::string& name, int in_, int out_,
              std::mt19937_64& rng, bool regularized = false) {
        in = in_;
        out = out_;
        w = ps.add(name + ".w", glorot_uniform<T>({in, out}, in, out, rng), regularized);
        b = ps.add(name + ".b", Tensor<T>::zeros({out}));
    }

    // x: [rows, in] -> [rows, out]
    ad::Var<T> forward(Tape<T>& tp, const std::vector<ad::Var<T>>& lv, ad::Var<T> x) const {
        return ad::add_rowvec(tp, ad::matmul(tp, x, lv[w]), lv[b]);
    }
};

template <typename T>
struct Conv2d {
    int w = -1, b = -1;
    int kh = 0, kw = 0, stride = 1, pad = 0, cin = 0, cout = 0;

    void init(ModelParams<T>& ps, const std::string& name, int kh_, int kw_, int cin_, int cout_,
              int stride_, int pad_, std::mt19937_64& rng, bool regularized = false) {
        kh = kh_; kw = kw_; cin = cin_; cout = cout_; stride = stride_; pad = pad_;
        const int fan_in = kh * kw * cin, fan_out = kh * kw * cout;
        w = ps.add(name + ".w", glorot_uniform<T>({kh * kw * cin, cout}, fan_in, fan_out, rng),
                   regularized);
        b = ps.add(name + ".b", Tensor<T>::zeros({cout}));
    }

    ad::Var<T> forward(Tape<T>& tp, const std::vector<ad::Var<T>>& lv, ad::Var<T> x) const {
        return ad::conv2d(tp, x, lv[w], lv[b], kh, kw, stride, pad);
    }
};

template <typename T>
struct LayerNorm {
    int gamma = -1, beta = -1;
    int width = 0;

    void init(ModelParams<T>& ps, const std::string& name, int width_) {
        width = width_;
        Tensor<T> g{{width}};
        g.fill(T(1));
        gamma = ps.add(name + ".gamma", std::move(g));
        beta = ps.add(name + ".beta", Tensor<T>::zeros({width}));
    }

    ad::Var<T> forward(Tape<T>& tp, const std::vector<ad::Var<T>>& lv, ad::Var<T> x, T eps) const {
        return ad::layernorm(tp, x, lv[gamma], lv[beta], eps);
    }
};

// Multi-head attention, query and key/value token streams may differ in width.
template <typename T>
struct MultiHeadAttention {
    Dense<T> q, k, v, out;
    int heads = 0, key_dim = 0;
    int q_in = 0, kv_in = 0, out_dim = 0;

    void init(ModelParams<T>& ps, const std::string& name, int heads_, int key_dim_, int q_in_,
              int kv_in_, int out_dim_, std::mt19937_64& rng) {
        heads = heads_; key_dim = key_dim_; q_in = q_in_; kv_in = kv_in_; out_dim = out_dim_;
        const int inner = heads * key_dim;
        q.init(ps, name + ".q", q_in, inner, rng);
        k.init(ps, name + ".k", kv_in, inner, rng);
        v.init(ps, name + ".v", kv_in, inner, rng);
        out.init(ps, name + ".out", inner, out_dim, rng);
    }

    // queries: [B,Nq,q_in], keyvals: [B,Nk,kv_in] -> [B,Nq,out_dim]
    ad::Var<T> forward(Tape<T>& tp, const std::vector<ad::Var<T>>& lv, ad::Var<T> queries,
                       ad::Var<T> keyvals) const {
        const int bsz = queries->value.dim(0), nq = queries->value.dim(1);
        const int nk = keyvals->value.dim(1);
        const int inner = heads * key_dim;

        auto split_heads = [&](ad::Var<T> tokens, const Dense<T>& proj, int n) {
            auto flat = ad::reshape(tp, tokens, {bsz * n, proj.in});
            auto projected = proj.forward(tp, lv, flat);
            auto h4 = ad::reshape(tp, projected, {bsz, n, heads, key_dim});
            auto hb = ad::transpose_0213(tp, h4);  // [B,H,N,kd]
            return ad::reshape(tp, hb, {bsz * heads, n, key_dim});
        };

        auto qh = split_heads(queries, q, nq);
        auto kh = split_heads(keyvals, k, nk);
        auto vh = split_heads(keyvals, v, nk);

        auto scores = ad::scale(tp, ad::bmm(tp, qh, kh, /*trans_b=*/true),
                                T(1) / std::sqrt((T)key_dim));
        auto attn = ad::softmax_last(tp, scores);          // [B*H,Nq,Nk]
        auto ctx = ad::bmm(tp, attn, vh);                  // [B*H,Nq,kd]
        auto merged = ad::reshape(tp, ctx, {bsz, heads, nq, key_dim});
        auto back = ad::transpose_0213(tp, merged);        // [B,Nq,H,kd]
        auto flat = ad::reshape(tp, back, {bsz * nq, inner});
        auto projected = out.forward(tp, lv, flat);
        return ad::reshape(tp, projected, {bsz, nq, out_dim});
    }
};

}  // namespace wid

#endif
