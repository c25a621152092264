#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "homolab/core/autograd.hpp"
#include "homolab/core/hash.hpp"
#include "homolab/core/rng.hpp"
#include "homolab/nn/ops.hpp"

namespace homolab {

// Ordered, named parameter registry for one model component. The order of
// registration defines checkpoint layout and hash order.
class ParamStore {
  public:
    std::shared_ptr<Param> add(const std::string& name, Tensor value) {
        auto p = std::make_shared<Param>(name, std::move(value));
        params_.push_back(p);
        return p;
    }

    const std::vector<std::shared_ptr<Param>>& params() const { return params_; }

    void zero_grads() {
        for (auto& p : params_) p->zero_grad();
    }

    void set_trainable(bool t) {
        for (auto& p : params_) p->trainable = t;
    }

    std::int64_t count() const {
        std::int64_t n = 0;
        for (const auto& p : params_) n += p->value.numel();
        return n;
    }

    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& p : params_) h = hash_tensor(p->value, h);
        return h;
    }

    std::shared_ptr<Param> find(const std::string& name) const {
        for (const auto& p : params_)
            if (p->name == name) return p;
        return nullptr;
    }

  private:
    std::vector<std::shared_ptr<Param>> params_;
};

namespace nn {

// Uniform fan-in init, matching the usual convolution default.
inline void init_fan_in(Tensor& t, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
}

struct Conv2d {
    std::shared_ptr<Param> w, b;
    int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(ParamStore& store, const std::string& name, int cin_, int cout_, int k_, int stride_,
           int pad_, Rng& rng, bool zero_init = false) {
        cin = cin_;
        cout = cout_;
        k = k_;
        stride = stride_;
        pad = pad_;
        Tensor wt({cout, cin * k * k});
        Tensor bt({cout});
        if (!zero_init) {
            init_fan_in(wt, cin * k * k, rng);
            init_fan_in(bt, cin * k * k, rng);
        }
        w = store.add(name + "/weight", std::move(wt));
        b = store.add(name + "/bias", std::move(bt));
    }

    ag::Var operator()(ag::Graph& g, const ag::Var& x) const {
        return ag::conv2d(x, g.leaf(*w), g.leaf(*b), k, stride, pad);
    }
};

struct Linear {
    std::shared_ptr<Param> w, b;

    Linear() = default;
    Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
           bool zero_init = false) {
        Tensor wt({in, out});
        Tensor bt({out});
        if (!zero_init) {
            init_fan_in(wt, in, rng);
            init_fan_in(bt, in, rng);
        }
        w = store.add(name + "/weight", std::move(wt));
        b = store.add(name + "/bias", std::move(bt));
    }

    ag::Var operator()(ag::Graph& g, const ag::Var& x) const {
        return ag::linear(x, g.leaf(*w), g.leaf(*b));
    }
};

// A stack of n 3x3 Conv+ReLU layers with same padding.
struct ConvReluStack {
    std::vector<Conv2d> layers;

    ConvReluStack() = default;
    ConvReluStack(ParamStore& store, const std::string& name, int cin, int cout, int n, Rng& rng) {
        for (int i = 0; i < n; ++i)
            layers.emplace_back(store, name + "/" + std::to_string(i), i == 0 ? cin : cout, cout, 3,
                                1, 1, rng);
    }

    ag::Var operator()(ag::Graph& g, ag::Var x) const {
        for (const auto& l : layers) x = ag::relu(l(g, x));
        return x;
    }
};

}  // namespace nn
}  // namespace homolab
