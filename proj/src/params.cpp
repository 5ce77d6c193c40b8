#include "qase/params.hpp"

#include <cmath>
#include <stdexcept>

namespace qase {

Tensor& ParamStore::at(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::runtime_error("no parameter named " + name);
    return it->second.value;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::runtime_error("no parameter named " + name);
    return it->second.value;
}

void ParamStore::add(const std::string& name, Tensor t, bool trainable) {
    if (has(name)) throw std::runtime_error("duplicate parameter " + name);
    params.emplace(name, Param{std::move(t), trainable});
}

std::size_t ParamStore::trainable_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params)
        if (p.trainable) n += p.value.numel();
    return n;
}

Tensor init_uniform(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = dist(rng);
    return t;
}

Var BoundParams::operator[](const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw std::runtime_error("no bound parameter " + name);
    return it->second;
}

BoundParams bind(Tape& tape, const ParamStore& store) {
    BoundParams bp;
    bp.tape = &tape;
    for (const auto& [name, p] : store.params) {
        Tensor t = p.value;
        t.requires_grad = p.trainable;
        bp.vars.emplace(name, tape.leaf(std::move(t)));
    }
    return bp;
}

}  // namespace qase
