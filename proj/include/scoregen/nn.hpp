#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scoregen/autodiff.hpp"
#include "scoregen/common.hpp"
#include "scoregen/rng.hpp"
#include "scoregen/tensor.hpp"

namespace scoregen::nn {

using json = nlohmann::json;

struct Param {
    std::string name;
    Tensor value;
    Tensor m, v;  // Adam moments
    long t = 0;
};

// Adaptive moment estimation. The paper names per-network learning rates but
// not the optimizer family; Adam is the documented choice.
class Adam {
  public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(Param& p, const Tensor& grad) const {
        require(grad.same_shape(p.value), Errc::ShapeMismatch, "adam grad shape for " + p.name);
        p.t += 1;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(p.t));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(p.t));
        for (long i = 0; i < p.value.numel(); ++i) {
            double g = grad.v[i];
            p.m.v[i] = beta1_ * p.m.v[i] + (1 - beta1_) * g;
            p.v.v[i] = beta2_ * p.v.v[i] + (1 - beta2_) * g * g;
            double mhat = p.m.v[i] / bc1;
            double vhat = p.v.v[i] / bc2;
            p.value.v[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }

    double lr() const { return lr_; }

  private:
    double lr_, beta1_, beta2_, eps_;
};

// Named parameter/buffer registry with a serializable state dict.
class Module {
  public:
    Param& param(const std::string& name, std::vector<int> shape) {
        auto it = param_index_.find(name);
        if (it != param_index_.end()) return params_[it->second];
        params_.push_back(Param{name, Tensor(shape), Tensor(shape), Tensor(shape), 0});
        param_index_[name] = params_.size() - 1;
        return params_.back();
    }

    Tensor& buffer(const std::string& name, std::vector<int> shape, double fill = 0.0) {
        auto it = buffer_index_.find(name);
        if (it != buffer_index_.end()) return buffers_[it->second].second;
        Tensor t(shape);
        for (auto& x : t.v) x = fill;
        buffers_.emplace_back(name, std::move(t));
        buffer_index_[name] = buffers_.size() - 1;
        return buffers_.back().second;
    }

    std::vector<Param*> parameters() {
        std::vector<Param*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(&p);
        return out;
    }

    long parameter_count() const {
        long n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    // He-style fan-in init for weights, zeros for biases, identity for norms.
    // Name suffixes carry the role.
    void init_params(Rng& rng) {
        for (auto& p : params_) {
            if (ends_with(p.name, ".w")) {
                long fan_in = 1;
                for (std::size_t i = 1; i < p.value.shape.size(); ++i) fan_in *= p.value.shape[i];
                double std = std::sqrt(2.0 / static_cast<double>(fan_in));
                for (auto& x : p.value.v) x = rng.normal() * std;
            } else if (ends_with(p.name, ".gamma")) {
                for (auto& x : p.value.v) x = 1.0;
            } else {
                for (auto& x : p.value.v) x = 0.0;
            }
            for (auto& x : p.m.v) x = 0.0;
            for (auto& x : p.v.v) x = 0.0;
            p.t = 0;
        }
    }

    json state() const {
        json s;
        for (const auto& p : params_) {
            s["params"][p.name] = {{"shape", p.value.shape},
                                   {"data", p.value.v},
                                   {"m", p.m.v},
                                   {"v", p.v.v},
                                   {"t", p.t}};
        }
        for (const auto& [name, t] : buffers_)
            s["buffers"][name] = {{"shape", t.shape}, {"data", t.v}};
        return s;
    }

    void load_state(const json& s) {
        for (auto& p : params_) {
            require(s.contains("params") && s["params"].contains(p.name), Errc::ShapeMismatch,
                    "checkpoint missing parameter " + p.name);
            const auto& e = s["params"][p.name];
            auto shape = e["shape"].get<std::vector<int>>();
            require(shape == p.value.shape, Errc::ShapeMismatch,
                    "checkpoint shape mismatch for " + p.name);
            p.value.v = e["data"].get<std::vector<double>>();
            p.m.v = e["m"].get<std::vector<double>>();
            p.v.v = e["v"].get<std::vector<double>>();
            p.t = e["t"].get<long>();
        }
        for (auto& [name, t] : buffers_) {
            require(s.contains("buffers") && s["buffers"].contains(name), Errc::ShapeMismatch,
                    "checkpoint missing buffer " + name);
            const auto& e = s["buffers"][name];
            auto shape = e["shape"].get<std::vector<int>>();
            require(shape == t.shape, Errc::ShapeMismatch, "checkpoint shape mismatch for " + name);
            t.v = e["data"].get<std::vector<double>>();
        }
    }

    // One optimizer step for every parameter that received a gradient.
    void apply_grads(const Adam& opt, const std::map<std::string, Tensor>& grads) {
        for (auto& p : params_) {
            auto it = grads.find(p.name);
            if (it != grads.end()) opt.step(p, it->second);
        }
    }

  private:
    static bool ends_with(const std::string& s, const std::string& suffix) {
        return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    }

    std::deque<Param> params_;
    std::deque<std::pair<std::string, Tensor>> buffers_;
    std::map<std::string, std::size_t> param_index_;
    std::map<std::string, std::size_t> buffer_index_;
};

// Per-step graph context tying parameter leaves back to their Params so one
// backward pass can feed the optimizer.
class StepContext {
  public:
    ad::Var use(Param& p) {
        auto it = nodes_.find(p.name);
        if (it != nodes_.end()) return it->second.second;
        auto node = ad::leaf(p.value, true);
        nodes_.emplace(p.name, std::make_pair(&p, node));
        return node;
    }

    // collect grads after backward(); parameters never touched get none
    std::map<std::string, Tensor> grads() const {
        std::map<std::string, Tensor> out;
        for (const auto& [name, pair] : nodes_) {
            const auto& node = pair.second;
            if (!node->grad.v.empty()) out[name] = node->grad;
        }
        return out;
    }

  private:
    std::map<std::string, std::pair<Param*, ad::Var>> nodes_;
};

}  // namespace scoregen::nn
