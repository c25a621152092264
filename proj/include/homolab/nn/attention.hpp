#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "homolab/nn/module.hpp"
#include "homolab/nn/ops.hpp"

namespace homolab {

struct AttentionConfig {
    int window = 4;  // S, pixels per window side
    int heads = 4;
};

namespace nn {

// Multi-head attention over packed windows. q [B,C,P], k/v [B,C,Pk],
// mask [B,Pk]; rows of the softmax cover only the valid key slots.
inline ag::Var windowed_attention(const ag::Var& q, const ag::Var& k, const ag::Var& v,
                                  const Tensor& mask, int heads) {
    const int b = q->v.dim(0), c = q->v.dim(1), p = q->v.dim(2);
    const int pk = k->v.dim(2);
    if (k->v.dim(0) != b || v->v.dim(0) != b || k->v.dim(1) != c || v->v.dim(1) != c)
        throw ShapeMismatch("windowed_attention: q/k/v mismatch");
    if (c % heads != 0) throw ShapeMismatch("windowed_attention: heads must divide channels");
    const int d = c / heads;

    auto qh = ag::view(q, {b * heads, d, p});
    auto kh = ag::view(k, {b * heads, d, pk});
    auto vh = ag::view(v, {b * heads, d, pk});

    Tensor mask_h({b * heads, pk});
    for (int i = 0; i < b; ++i)
        for (int hd = 0; hd < heads; ++hd)
            for (int j = 0; j < pk; ++j) mask_h.at(i * heads + hd, j) = mask.at(i, j);

    auto logits = ag::scale(ag::bmm(qh, kh, true, false), 1.0 / std::sqrt(static_cast<double>(d)));
    auto probs = ag::masked_softmax(logits, mask_h);           // [B*heads, P, Pk]
    auto out = ag::bmm(vh, probs, false, true);                // [B*heads, d, P]
    return ag::view(out, {b, c, p});
}

// Shared-query projections: Q/K/V from the full-resolution map, K/V from the
// downsampled map, all per-pixel linear (1x1 convolutions).
struct QkvProjection {
    Conv2d q, k_l, v_l, k_s, v_s;
    bool two_scale = true;

    QkvProjection() = default;
    QkvProjection(ParamStore& store, const std::string& name, int c, bool two_scale_, Rng& rng)
        : two_scale(two_scale_) {
        q = Conv2d(store, name + "/q", c, c, 1, 1, 0, rng);
        k_l = Conv2d(store, name + "/k_l", c, c, 1, 1, 0, rng);
        v_l = Conv2d(store, name + "/v_l", c, c, 1, 1, 0, rng);
        if (two_scale) {
            k_s = Conv2d(store, name + "/k_s", c, c, 1, 1, 0, rng);
            v_s = Conv2d(store, name + "/v_s", c, c, 1, 1, 0, rng);
        }
    }
};

// Windowed attention block. With two_scale set this is the hierarchical
// scale-aware form: the shared query attends both to same-scale windows and
// to the 2x-downsampled region covering the same image area, the two results
// are summed and merged by one 3x3 convolution, with a residual connection.
// Without two_scale it degrades to plain windowed self-attention.
class ScaleAwareBlock {
  public:
    ScaleAwareBlock() = default;
    ScaleAwareBlock(ParamStore& store, const std::string& name, int channels, AttentionConfig cfg,
                    bool two_scale, Rng& rng)
        : cfg_(cfg), channels_(channels), two_scale_(two_scale) {
        if (channels % cfg.heads != 0) throw BadParams("attention channels must divide by heads");
        proj_ = QkvProjection(store, name + "/proj", channels, two_scale, rng);
        merge_ = Conv2d(store, name + "/merge", channels, channels, 3, 1, 1, rng);
    }

    ag::Var operator()(ag::Graph& g, const ag::Var& f) const {
        const int n = f->v.dim(0), c = f->v.dim(1), h = f->v.dim(2), w = f->v.dim(3);
        if (c != channels_) throw ShapeMismatch("ScaleAwareBlock: channel mismatch");
        if (h < cfg_.window || w < cfg_.window)
            throw ShapeMismatch("ScaleAwareBlock: input smaller than window");

        const auto& mf = full_map(h, w);
        auto qw = ag::window_pack(proj_.q(g, f), mf);
        auto klw = ag::window_pack(proj_.k_l(g, f), mf);
        auto vlw = ag::window_pack(proj_.v_l(g, f), mf);
        auto attn = windowed_attention(qw, klw, vlw, ag::window_mask(mf, n), cfg_.heads);

        if (two_scale_) {
            auto fd = ag::avgpool2(f);
            const auto& md = down_map(h, w, fd->v.dim(2), fd->v.dim(3));
            auto ksw = ag::window_pack(proj_.k_s(g, fd), md);
            auto vsw = ag::window_pack(proj_.v_s(g, fd), md);
            auto attn_s = windowed_attention(qw, ksw, vsw, ag::window_mask(md, n), cfg_.heads);
            attn = ag::add(attn, attn_s);
        }

        auto merged = ag::relu(merge_(g, ag::window_unpack(attn, mf, n, c)));
        return ag::add(f, merged);
    }

    const QkvProjection& projection() const { return proj_; }
    const AttentionConfig& config() const { return cfg_; }
    bool two_scale() const { return two_scale_; }

    const ag::WindowMap& full_map(int h, int w) const {
        auto key = std::make_pair(h, w);
        auto it = full_maps_.find(key);
        if (it == full_maps_.end())
            it = full_maps_.emplace(key, ag::window_map_full(h, w, cfg_.window)).first;
        return it->second;
    }

    const ag::WindowMap& down_map(int h, int w, int hd, int wd) const {
        auto key = std::make_pair(h, w);
        auto it = down_maps_.find(key);
        if (it == down_maps_.end())
            it = down_maps_.emplace(key, ag::window_map_down(h, w, cfg_.window, hd, wd)).first;
        return it->second;
    }

  private:
    AttentionConfig cfg_;
    int channels_ = 0;
    bool two_scale_ = true;
    QkvProjection proj_;
    Conv2d merge_;
    // Window maps are cached per input size; node-based map keeps the
    // addresses captured by op closures stable.
    mutable std::map<std::pair<int, int>, ag::WindowMap> full_maps_;
    mutable std::map<std::pair<int, int>, ag::WindowMap> down_maps_;
};

}  // namespace nn
}  // namespace homolab
