#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "qase/head.hpp"

using namespace qase;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (auto& v : t.data) v = d(rng);
    return t;
}

struct HeadFixture {
    HeadConfig cfg;
    ParamStore store;
    Tensor hidden;                    // (6, d_model): 4 context rows + 2 question rows
    TokenRange ctx{0, 4}, q{4, 6};

    explicit HeadFixture(HeadKind kind, std::uint64_t seed, std::size_t d_model = 6,
                         std::size_t h = 4, std::size_t n_heads = 2) {
        cfg.d_model = d_model;
        cfg.h = h;
        cfg.n_heads = n_heads;
        std::mt19937_64 rng(seed);
        init_head_params(kind, cfg, rng, store);
        hidden = random_tensor({6, d_model}, rng);
    }
};

}  // namespace

TEST_CASE("parameter count formulas") {
    // d_model*h + h + 4(h^2+h) + 2h+2 = 32+4+80+10
    CHECK(count_params(HeadKind::Qase, 8, 4, 2) == 126);
    CHECK(count_params(HeadKind::Baseline, 8, 4, 2) == 8 * 4 + 4 + (2 * 16 + 4) + 10);
    CHECK(count_params(HeadKind::None, 8, 4, 2) == 0);
    CHECK_THROWS(count_params(HeadKind::Qase, 8, 0, 1));
    CHECK_THROWS(count_params(HeadKind::Qase, 8, 4, 3));
}

TEST_CASE("init_head_params matches the closed-form count") {
    for (HeadKind kind : {HeadKind::Qase, HeadKind::Baseline}) {
        HeadFixture f(kind, 1);
        CHECK(f.store.trainable_count() == count_params(kind, 6, 4, 2));
    }
    HeadFixture none(HeadKind::None, 1);
    CHECK(none.store.params.empty());
}

TEST_CASE("single-head attention matches a hand computation") {
    HeadConfig cfg;
    cfg.d_model = 1;
    cfg.h = 1;
    cfg.n_heads = 1;
    std::mt19937_64 rng(0);
    ParamStore store;
    init_head_params(HeadKind::Qase, cfg, rng, store);
    for (const char* w : {"head.mha.wq", "head.mha.wk", "head.mha.wv", "head.mha.wo"})
        store.at(w).data = {1.0};
    for (const char* b : {"head.mha.bq", "head.mha.bk", "head.mha.bv", "head.mha.bo"})
        store.at(b).data = {0.0};

    Tape tape;
    BoundParams bp = bind(tape, store);
    Var query = tape.constant(Tensor::matrix(1, 1, {2.0}));
    Var keys = tape.constant(Tensor::matrix(2, 1, {1.0, 3.0}));
    Var out = head_mha(tape, bp, cfg, query, keys, keys);

    const double w1 = std::exp(2.0 * 1.0), w3 = std::exp(2.0 * 3.0);  // scale = 1/sqrt(1)
    const double expect = (w1 * 1.0 + w3 * 3.0) / (w1 + w3);
    CHECK(tape.value(out).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("qase_forward emits one (p_O, p_I) distribution per context token") {
    HeadFixture f(HeadKind::Qase, 2);
    Tape tape;
    BoundParams bp = bind(tape, f.store);
    Var probs = qase_forward(tape, bp, f.cfg, tape.constant(f.hidden), f.ctx, f.q);
    const Tensor& p = tape.value(probs);
    REQUIRE(p.rows() == 4);
    REQUIRE(p.cols() == 2);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(p.at(i, 0) > 0.0);
        CHECK(p.at(i, 0) + p.at(i, 1) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("baseline_forward has the same output schema") {
    HeadFixture f(HeadKind::Baseline, 3);
    Tape tape;
    BoundParams bp = bind(tape, f.store);
    Var probs = baseline_forward(tape, bp, f.cfg, tape.constant(f.hidden), f.ctx, f.q);
    const Tensor& p = tape.value(probs);
    CHECK(p.rows() == 4);
    CHECK(p.cols() == 2);
}

TEST_CASE("empty or overlapping token ranges are rejected") {
    HeadFixture f(HeadKind::Qase, 4);
    Tape tape;
    BoundParams bp = bind(tape, f.store);
    Var hidden = tape.constant(f.hidden);
    CHECK_THROWS(qase_forward(tape, bp, f.cfg, hidden, {0, 0}, f.q));
    CHECK_THROWS(qase_forward(tape, bp, f.cfg, hidden, {0, 5}, {4, 6}));
}

TEST_CASE("question token order cannot change the head output") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        HeadFixture f(HeadKind::Qase, 100 + trial);
        Tape t1;
        const Tensor base =
            t1.value(qase_forward(t1, bind(t1, f.store), f.cfg, t1.constant(f.hidden), f.ctx, f.q));

        Tensor permuted = f.hidden;  // swap the two question rows
        for (std::size_t j = 0; j < f.cfg.d_model; ++j)
            std::swap(permuted.at(4, j), permuted.at(5, j));
        Tape t2;
        const Tensor swapped =
            t2.value(qase_forward(t2, bind(t2, f.store), f.cfg, t2.constant(permuted), f.ctx, f.q));
        for (std::size_t i = 0; i < base.numel(); ++i)
            CHECK(std::abs(base.data[i] - swapped.data[i]) <= 1e-12);
    }
}

TEST_CASE("tagging loss hits its closed-form anchors") {
    Tape tape;
    Var onehot = tape.constant(Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0}));
    CHECK(tape.value(tagging_loss(tape, onehot, {Tag::O, Tag::I})).item() == 0.0);

    Var uniform = tape.constant(Tensor::matrix(2, 2, {0.5, 0.5, 0.5, 0.5}));
    CHECK(tape.value(tagging_loss(tape, uniform, {Tag::I, Tag::O})).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-9));

    CHECK_THROWS(tagging_loss(tape, uniform, {Tag::I}));
}

TEST_CASE("full-head analytic gradients match central differences") {
    HeadFixture f(HeadKind::Qase, 7);
    const TagSequence tags = {Tag::O, Tag::I, Tag::I, Tag::O};

    auto loss_value = [&](const ParamStore& store) {
        Tape t;
        BoundParams bp = bind(t, store);
        Var probs = qase_forward(t, bp, f.cfg, t.constant(f.hidden), f.ctx, f.q);
        return t.value(tagging_loss(t, probs, tags)).item();
    };

    Tape tape;
    BoundParams bp = bind(tape, f.store);
    Var probs = qase_forward(tape, bp, f.cfg, tape.constant(f.hidden), f.ctx, f.q);
    tape.backward(tagging_loss(tape, probs, tags));

    const double h = 1e-5;
    for (const auto& [name, p] : f.store.params) {
        const Tensor& analytic = tape.grad(bp[name]);
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            ParamStore shifted = f.store;
            shifted.at(name).data[i] = p.value.data[i] + h;
            const double up = loss_value(shifted);
            shifted.at(name).data[i] = p.value.data[i] - h;
            const double down = loss_value(shifted);
            const double numeric = (up - down) / (2 * h);
            const double denom =
                std::max({std::abs(numeric), std::abs(analytic.data[i]), 1.0});
            CHECK(std::abs(numeric - analytic.data[i]) / denom <= 1e-4);
        }
    }
}
