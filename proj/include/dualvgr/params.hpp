#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dualvgr/autodiff.hpp"
#include "dualvgr/rng.hpp"

namespace dualvgr {

// Named leaf tensors in a fixed registration order. The order drives both the
// initialization draw sequence and the optimizer update sequence, so it is
// part of the determinism contract.
class ParamStore {
public:
    ad::Var add_uniform(const std::string& name, int rows, int cols, Rng& rng, double bound) {
        Mat m(rows, cols);
        for (double& x : m.v) x = rng.uniform(-bound, bound);
        return insert(name, std::move(m));
    }

    // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); weight layout is [out x in].
    ad::Var add_linear_weight(const std::string& name, int out, int in, Rng& rng) {
        return add_uniform(name, out, in, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    }

    ad::Var add_zeros(const std::string& name, int rows, int cols) {
        return insert(name, Mat(rows, cols));
    }

    ad::Var add_const(const std::string& name, int rows, int cols, double fill) {
        return insert(name, Mat(rows, cols, fill));
    }

    ad::Var get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
        return items_[it->second].second;
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<std::pair<std::string, ad::Var>>& items() const { return items_; }
    size_t size() const { return items_.size(); }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& [_, v] : items_) n += v->val.size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, v] : items_) v->ensure_grad() = Mat(v->val.rows, v->val.cols);
    }

private:
    ad::Var insert(const std::string& name, Mat m) {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
        ad::Var v = ad::leaf(std::move(m), true);
        index_[name] = items_.size();
        items_.emplace_back(name, v);
        return v;
    }

    std::vector<std::pair<std::string, ad::Var>> items_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace dualvgr
