#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "qase/autodiff.hpp"
#include "qase/tensor.hpp"

namespace qase {

struct Param {
    Tensor value;
    bool trainable = true;
};

// Named model parameters. std::map keeps iteration order stable, which the
// checkpoint layout and optimizer rely on.
struct ParamStore {
    std::map<std::string, Param> params;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return params.count(name) > 0; }
    void add(const std::string& name, Tensor t, bool trainable = true);

    std::size_t trainable_count() const;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init.
Tensor init_uniform(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& rng);

// Per-tape view of a ParamStore: one leaf per parameter, requires_grad set
// from the trainable flag.
struct BoundParams {
    Tape* tape = nullptr;
    std::map<std::string, Var> vars;

    Var operator[](const std::string& name) const;
};

BoundParams bind(Tape& tape, const ParamStore& store);

}  // namespace qase
