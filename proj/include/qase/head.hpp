#pragma once

#include <random>
#include <string>

#include "qase/autodiff.hpp"
#include "qase/params.hpp"
#include "qase/plm.hpp"
#include "qase/span.hpp"

namespace qase {

enum class HeadKind { None, Qase, Baseline };

std::string head_kind_name(HeadKind kind);
HeadKind head_kind_from_name(const std::string& name);

struct HeadConfig {
    std::size_t d_model = 64;
    std::size_t h = 64;  // projection width
    std::size_t n_heads = 4;

    void validate() const;
};

// Parameter names are prefixed "head."; serialized alongside the generator
// in the same checkpoint so inference can skip them wholesale.
void init_head_params(HeadKind kind, const HeadConfig& cfg, std::mt19937_64& rng,
                      ParamStore& store);

// ReLU(hidden * W_proj + b_proj), rowwise.
Var head_project(Tape& tape, const BoundParams& bp, const HeadConfig& cfg, Var hidden);

// Column-mean of the question rows replicated to the context length.
Var mean_expand_question(Tape& tape, Var z_q, std::size_t t_c);

// Scaled dot-product multi-head attention over width h, bidirectional.
Var head_mha(Tape& tape, const BoundParams& bp, const HeadConfig& cfg, Var query, Var key,
             Var value);

// project -> slice -> mean-expand -> MHA(z*_Q, z_C, z_C) -> linear -> softmax.
// Output rows align 1:1 with context tokens; each row is (p_O, p_I).
Var qase_forward(Tape& tape, const BoundParams& bp, const HeadConfig& cfg, Var hidden,
                 TokenRange context, TokenRange question);

// Ablation head: no MHA; each context row is concatenated with the mean
// question row, then linear+ReLU and a classifier.
Var baseline_forward(Tape& tape, const BoundParams& bp, const HeadConfig& cfg, Var hidden,
                     TokenRange context, TokenRange question);

// Mean negative log-likelihood of the IO tags over context tokens.
Var tagging_loss(Tape& tape, Var tag_probs, const TagSequence& tags);

// Exact trainable-parameter count of the head.
std::size_t count_params(HeadKind kind, std::size_t d_model, std::size_t h, std::size_t n_heads);

}  // namespace qase
