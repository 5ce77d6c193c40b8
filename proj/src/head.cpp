#include "qase/head.hpp"

#include <cmath>
#include <stdexcept>

namespace qase {

std::string head_kind_name(HeadKind kind) {
    switch (kind) {
        case HeadKind::None: return "none";
        case HeadKind::Qase: return "qase";
        case HeadKind::Baseline: return "baseline";
    }
    return "none";
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "none") return HeadKind::None;
    if (name == "qase") return HeadKind::Qase;
    if (name == "baseline") return HeadKind::Baseline;
    throw std::invalid_argument("unknown head kind: " + name);
}

void HeadConfig::validate() const {
    if (h == 0) throw std::invalid_argument("head config: h must be positive");
    if (n_heads == 0 || h % n_heads != 0)
        throw std::invalid_argument("head config: h not divisible by n_heads");
}

void init_head_params(HeadKind kind, const HeadConfig& cfg, std::mt19937_64& rng,
                      ParamStore& store) {
    if (kind == HeadKind::None) return;
    cfg.validate();
    const std::size_t d = cfg.d_model, h = cfg.h;
    store.add("head.proj.w", init_uniform({d, h}, d, rng));
    store.add("head.proj.b", init_uniform({1, h}, d, rng));
    if (kind == HeadKind::Qase) {
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            store.add(std::string("head.mha.") + w, init_uniform({h, h}, h, rng));
            store.add(std::string("head.mha.b") + std::string(w).substr(1),
                      init_uniform({1, h}, h, rng));
        }
        store.add("head.lin.w", init_uniform({h, 2}, h, rng));
        store.add("head.lin.b", init_uniform({1, 2}, h, rng));
    } else {
        store.add("head.mix.w", init_uniform({2 * h, h}, 2 * h, rng));
        store.add("head.mix.b", init_uniform({1, h}, 2 * h, rng));
        store.add("head.lin.w", init_uniform({h, 2}, h, rng));
        store.add("head.lin.b", init_uniform({1, 2}, h, rng));
    }
}

Var head_project(Tape& tape, const BoundParams& bp, const HeadConfig& cfg, Var hidden) {
    if (tape.value(hidden).cols() != cfg.d_model)
        throw std::invalid_argument("head_project: hidden width " +
                                    std::to_string(tape.value(hidden).cols()) +
                                    " != d_model " + std::to_string(cfg.d_model));
    return tape.relu(tape.add_row(tape.matmul(hidden, bp["head.proj.w"]), bp["head.proj.b"]));
}

Var mean_expand_question(Tape& tape, Var z_q, std::size_t t_c) {
    if (tape.value(z_q).rows() == 0)
        throw std::invalid_argument("mean_expand_question: empty question");
    return tape.replicate_row(tape.mean_rows(z_q), t_c);
}

Var head_mha(Tape& tape, const BoundParams& bp, const HeadConfig& cfg, Var query, Var key,
             Var value) {
    const std::size_t h = cfg.h;
    if (tape.value(query).cols() != h || tape.value(key).cols() != h ||
        tape.value(value).cols() != h)
        throw std::invalid_argument("head_mha: width mismatch");
    if (tape.value(key).rows() != tape.value(value).rows())
        throw std::invalid_argument("head_mha: key/value row count mismatch");
    const std::size_t dh = h / cfg.n_heads;
    Var q = tape.add_row(tape.matmul(query, bp["head.mha.wq"]), bp["head.mha.bq"]);
    Var k = tape.add_row(tape.matmul(key, bp["head.mha.wk"]), bp["head.mha.bk"]);
    Var v = tape.add_row(tape.matmul(value, bp["head.mha.wv"]), bp["head.mha.bv"]);
    std::vector<Var> heads;
    for (std::size_t i = 0; i < cfg.n_heads; ++i) {
        Var qh = tape.slice_cols(q, i * dh, (i + 1) * dh);
        Var kh = tape.slice_cols(k, i * dh, (i + 1) * dh);
        Var vh = tape.slice_cols(v, i * dh, (i + 1) * dh);
        Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)),
                                1.0 / std::sqrt(static_cast<double>(dh)));
        heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    return tape.add_row(tape.matmul(tape.concat_cols(heads), bp["head.mha.wo"]),
                        bp["head.mha.bo"]);
}

namespace {

void check_ranges(const Tape& tape, Var hidden, TokenRange context, TokenRange question) {
    const std::size_t t = tape.value(hidden).rows();
    if (context.size() == 0) throw std::invalid_argument("head: empty context range");
    if (question.size() == 0) throw std::invalid_argument("head: empty question range");
    if (context.end > t || question.end > t)
        throw std::invalid_argument("head: range exceeds hidden rows");
    if (context.begin < question.end && question.begin < context.end)
        throw std::invalid_argument("head: context/question ranges overlap");
}

}  // namespace

Var qase_forward(Tape& tape, const BoundParams& bp, const HeadConfig& cfg, Var hidden,
                 TokenRange context, TokenRange question) {
    check_ranges(tape, hidden, context, question);
    Var z = head_project(tape, bp, cfg, hidden);
    Var z_c = tape.slice_rows(z, context.begin, context.end);
    Var z_q = tape.slice_rows(z, question.begin, question.end);
    Var z_q_star = mean_expand_question(tape, z_q, context.size());
    Var attended = head_mha(tape, bp, cfg, z_q_star, z_c, z_c);
    // Residual from z_C: with the mean-question query every attended row is
    // the same vector, so without this the classifier would be blind to
    // token position and could never tag individual spans.
    Var mixed = tape.add(attended, z_c);
    Var logits = tape.add_row(tape.matmul(mixed, bp["head.lin.w"]), bp["head.lin.b"]);
    return tape.softmax_rows(logits);
}

Var baseline_forward(Tape& tape, const BoundParams& bp, const HeadConfig& cfg, Var hidden,
                     TokenRange context, TokenRange question) {
    check_ranges(tape, hidden, context, question);
    Var z = head_project(tape, bp, cfg, hidden);
    Var z_c = tape.slice_rows(z, context.begin, context.end);
    Var z_q = tape.slice_rows(z, question.begin, question.end);
    Var z_q_star = mean_expand_question(tape, z_q, context.size());
    Var mixed = tape.concat_cols({z_c, z_q_star});
    Var mid =
        tape.relu(tape.add_row(tape.matmul(mixed, bp["head.mix.w"]), bp["head.mix.b"]));
    Var logits = tape.add_row(tape.matmul(mid, bp["head.lin.w"]), bp["head.lin.b"]);
    return tape.softmax_rows(logits);
}

Var tagging_loss(Tape& tape, Var tag_probs, const TagSequence& tags) {
    if (tape.value(tag_probs).rows() != tags.size())
        throw std::invalid_argument("tagging_loss: length mismatch");
    std::vector<int> targets;
    targets.reserve(tags.size());
    for (Tag t : tags) targets.push_back(static_cast<int>(t));
    return tape.cross_entropy(tag_probs, targets);
}

std::size_t count_params(HeadKind kind, std::size_t d_model, std::size_t h,
                         std::size_t n_heads) {
    if (h == 0) throw std::invalid_argument("count_params: h must be positive");
    if (n_heads == 0 || h % n_heads != 0)
        throw std::invalid_argument("count_params: h not divisible by n_heads");
    switch (kind) {
        case HeadKind::None:
            return 0;
        case HeadKind::Qase:
            return d_model * h + h + 4 * (h * h + h) + 2 * h + 2;
        case HeadKind::Baseline:
            return d_model * h + h + (2 * h * h + h) + 2 * h + 2;
    }
    return 0;
}

}  // namespace qase
