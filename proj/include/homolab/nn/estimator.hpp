#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "homolab/geometry/homography.hpp"
#include "homolab/nn/attention.hpp"
#include "homolab/nn/module.hpp"

namespace homolab {

struct EstimatorConfig {
    int iters = 5;        // refinement iterations per scale
    int window = 4;       // attention window side
    int heads = 4;
    int stem1 = 32;       // 1/2 scale channels
    int stem2 = 64;       // 1/4 scale channels (large block)
    int stem3 = 96;       // 1/8 scale channels (small block)
    int head_width = 32;
    int corr_radius = 4;
    double loss_gamma = 0.85;  // per-iteration loss weighting
    double clamp_px = 64.0;    // offset safeguard during refinement
    int patch = 128;
    bool scale_attn = true;    // hierarchical two-scale attention in the large block
};

struct PyramidFeatures {
    ag::Var quarter;  // [N, stem2, patch/4, patch/4]
    ag::Var eighth;   // [N, stem3, patch/8, patch/8]
};

struct EstimateTrace {
    std::vector<ag::Var> offsets;  // accumulated [N,8] after each iteration, 2n entries
    ag::Var final_offsets;
    PyramidFeatures src_features;
    PyramidFeatures tgt_features;
};

namespace nn {

// Offset-regression head: a few strided convolutions over the correlation
// volume, then a linear layer zero-initialized so the first prediction is the
// identity.
struct RegressionHead {
    std::vector<Conv2d> convs;
    Linear fc;
    int flat = 0;

    RegressionHead() = default;
    RegressionHead(ParamStore& store, const std::string& name, int cin, int width, int spatial,
                   Rng& rng) {
        int s = spatial;
        int c = cin;
        int i = 0;
        while (s > 4) {
            convs.emplace_back(store, name + "/conv" + std::to_string(i), c, width, 3, 2, 1, rng);
            c = width;
            s = (s - 1) / 2 + 1;
            ++i;
        }
        flat = c * s * s;
        fc = Linear(store, name + "/fc", flat, 8, rng, /*zero_init=*/true);
    }

    ag::Var operator()(ag::Graph& g, ag::Var x) const {
        for (const auto& cv : convs) x = ag::relu(cv(g, x));
        x = ag::view(x, {x->v.dim(0), flat});
        return fc(g, x);
    }
};

}  // namespace nn

// Iterative homography estimator: convolutional stem taps features at 1/4 and
// 1/8 scale, the large-scale block runs hierarchical scale-aware attention,
// the small-scale block plain windowed self-attention. Refinement warps the
// source features by the current estimate, correlates against the target and
// regresses a corner-offset residual; iterations share weights so the count
// can vary at inference.
class Estimator {
  public:
    explicit Estimator(const EstimatorConfig& cfg, Rng rng) : cfg_(cfg) {
        if (cfg.stem2 % cfg.heads || cfg.stem3 % cfg.heads)
            throw BadParams("stem channels must divide by attention heads");
        stem1_ = nn::Conv2d(store_, "stem1", 3, cfg.stem1, 3, 2, 1, rng);
        stem2_ = nn::Conv2d(store_, "stem2", cfg.stem1, cfg.stem2, 3, 2, 1, rng);
        large_ = nn::ScaleAwareBlock(store_, "large_block", cfg.stem2,
                                     {cfg.window, cfg.heads}, cfg.scale_attn, rng);
        stem3_ = nn::Conv2d(store_, "stem3", cfg.stem2, cfg.stem3, 3, 2, 1, rng);
        small_ = nn::ScaleAwareBlock(store_, "small_block", cfg.stem3,
                                     {cfg.window, cfg.heads}, /*two_scale=*/false, rng);
        const int d = (2 * cfg.corr_radius + 1) * (2 * cfg.corr_radius + 1);
        head8_ = nn::RegressionHead(store_, "head8", d, cfg.head_width, cfg.patch / 8, rng);
        head4_ = nn::RegressionHead(store_, "head4", d, cfg.head_width, cfg.patch / 4, rng);
    }

    const EstimatorConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    // img [N,3,patch,patch] in [0,1]
    PyramidFeatures extract_pyramid(ag::Graph& g, const ag::Var& img) const {
        if (img->v.ndim() != 4 || img->v.dim(1) != 3 || img->v.dim(2) != cfg_.patch ||
            img->v.dim(3) != cfg_.patch)
            throw ShapeMismatch("extract_pyramid: expected [N,3," + std::to_string(cfg_.patch) +
                                "," + std::to_string(cfg_.patch) + "]");
        auto f2 = ag::relu(stem1_(g, img));
        auto f4 = ag::relu(stem2_(g, f2));
        f4 = large_(g, f4);
        auto f8 = ag::relu(stem3_(g, f4));
        f8 = small_(g, f8);
        return {f4, f8};
    }

    EstimateTrace estimate(ag::Graph& g, const Tensor& src, const Tensor& tgt,
                           int iters_override = 0) const {
        const int n_it = iters_override > 0 ? iters_override : cfg_.iters;
        if (n_it < 1) throw BadParams("estimate: need at least one iteration");
        EstimateTrace out;
        out.src_features = extract_pyramid(g, g.constant(src));
        out.tgt_features = extract_pyramid(g, g.constant(tgt));
        const int n = src.dim(0);

        ag::Var acc = g.constant(Tensor({n, 8}));
        Tensor acc_val({n, 8});
        struct Stage {
            const ag::Var* src_f;
            const ag::Var* tgt_f;
            const nn::RegressionHead* head;
            int stride;
        };
        const Stage stages[2] = {{&out.src_features.eighth, &out.tgt_features.eighth, &head8_, 8},
                                 {&out.src_features.quarter, &out.tgt_features.quarter, &head4_, 4}};
        for (const Stage& st : stages) {
            for (int it = 0; it < n_it; ++it) {
                const Tensor grid = offsets_grid(acc_val, st.stride,
                                                 (*st.src_f)->v.dim(2), (*st.src_f)->v.dim(3));
                auto warped = ag::bilinear_sample(*st.src_f, grid);
                auto cv = ag::corr_volume(warped, *st.tgt_f, cfg_.corr_radius);
                auto resid = (*st.head)(g, cv);
                acc = ag::add(acc, resid);
                clamp_offsets(acc->v, acc_val);
                out.offsets.push_back(acc);
            }
        }
        out.final_offsets = acc;
        return out;
    }

    // Sum over iterations of the mean absolute offset error, later iterations
    // weighted up geometrically (gamma < 1 -> weight gamma^(T-1-t)).
    ag::Var loss_h(ag::Graph&, const EstimateTrace& trace, const Tensor& gt_offsets) const {
        return weighted_l1_trace(trace.offsets, gt_offsets, cfg_.loss_gamma);
    }

    static ag::Var weighted_l1_trace(const std::vector<ag::Var>& trace, const Tensor& gt,
                                     double gamma) {
        if (trace.empty()) throw EmptySet("loss_h: empty trace");
        const int t_total = static_cast<int>(trace.size());
        ag::Var total;
        for (int t = 0; t < t_total; ++t) {
            auto term = ag::l1_to(trace[static_cast<std::size_t>(t)], gt);
            const double w = std::pow(gamma, t_total - 1 - t);
            if (w != 1.0) term = ag::scale(term, w);
            total = total ? ag::add(total, term) : term;
        }
        return total;
    }

    // Grid of source-feature sample coordinates for warping source features
    // onto the target frame under the current offset estimate.
    Tensor offsets_grid(const Tensor& offsets, int stride, int fh, int fw) const {
        const int n = offsets.dim(0);
        Tensor grid({n, 2, fh, fw});
        const double shift = (stride - 1) / 2.0;
        for (int i = 0; i < n; ++i) {
            CornerOffsets d;
            for (int j = 0; j < 8; ++j) d.d[static_cast<std::size_t>(j)] = offsets.at(i, j);
            Homography h;
            try {
                h = offsets_to_homography(
                    PatchFrame(0, 0, cfg_.patch, cfg_.patch), d);
            } catch (const DegenerateCorners&) {
                throw ProjectiveOverflow("refinement produced a degenerate estimate");
            }
            // conjugate into feature coordinates: x_full = stride*x_feat + shift
            Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
            s(0, 0) = s(1, 1) = stride;
            s(0, 2) = s(1, 2) = shift;
            const Eigen::Matrix3d inv = (s.inverse() * h.h * s).inverse();
            for (int y = 0; y < fh; ++y)
                for (int x = 0; x < fw; ++x) {
                    const double w = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2);
                    if (std::abs(w) <= 1e-12)
                        throw ProjectiveOverflow("feature grid point at infinity");
                    grid.at(i, 0, y, x) = (inv(0, 0) * x + inv(0, 1) * y + inv(0, 2)) / w;
                    grid.at(i, 1, y, x) = (inv(1, 0) * x + inv(1, 1) * y + inv(1, 2)) / w;
                }
        }
        return grid;
    }

    const nn::ScaleAwareBlock& large_block() const { return large_; }
    const nn::ScaleAwareBlock& small_block() const { return small_; }
    const nn::RegressionHead& head_eighth() const { return head8_; }
    const nn::RegressionHead& head_quarter() const { return head4_; }

  private:
    void clamp_offsets(const Tensor& acc, Tensor& clamped) const {
        for (std::int64_t i = 0; i < acc.numel(); ++i)
            clamped[i] = std::clamp(acc[i], -cfg_.clamp_px, cfg_.clamp_px);
    }

    EstimatorConfig cfg_;
    ParamStore store_;
    nn::Conv2d stem1_, stem2_, stem3_;
    nn::ScaleAwareBlock large_, small_;
    nn::RegressionHead head8_, head4_;
};

}  // namespace homolab
