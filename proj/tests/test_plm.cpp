#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "qase/params.hpp"
#include "qase/plm.hpp"

using namespace qase;

TEST_CASE("prompt templates carry the fixed instruction") {
    PromptTemplate tpl;
    const std::string p = build_prompt(tpl, "red fox.", "what animal?");
    CHECK(p ==
          "Instruction: Using the provided context, answer the question with exact phrases and "
          "avoid explanations.\n---\nContext: red fox.\n---\nQuestion: what animal?\n---\nAnswer:");

    tpl.multi_span = true;
    CHECK(build_prompt(tpl, "c", "q").find(
              "Format the response as follows: [\"answer1\", \"answer2\", ...].") !=
          std::string::npos);

    tpl.ordering = PromptOrdering::QuestionFirst;
    const std::string qf = build_prompt(tpl, "red fox.", "what animal?");
    CHECK(qf.find("Question: what animal?\n<sep>\nContext: red fox.") != std::string::npos);

    CHECK_THROWS(build_prompt(tpl, "", "q"));
    CHECK_THROWS(build_prompt(tpl, "c", ""));
}

TEST_CASE("word tokenizer splits punctuation and keeps offsets") {
    const auto t = word_tokenize("don't stop, now!");
    CHECK(t.tokens == std::vector<std::string>{"don", "'", "t", "stop", ",", "now", "!"});
    REQUIRE(t.offsets.size() == 7);
    CHECK(t.offsets[0] == std::pair<std::size_t, std::size_t>{0, 3});
    CHECK(t.offsets[3] == std::pair<std::size_t, std::size_t>{6, 10});
    CHECK(t.offsets[6] == std::pair<std::size_t, std::size_t>{15, 16});
}

TEST_CASE("vocab reserves control ids and maps unknowns to UNK") {
    const Vocab v = Vocab::build({"fox", "red", "fox"});
    CHECK(v.token(Vocab::PAD) == "<pad>");
    CHECK(v.token(Vocab::BOS) == "<bos>");
    CHECK(v.token(Vocab::EOS) == "<eos>");
    CHECK(v.token(Vocab::SEP) == "<sep>");
    CHECK(v.id("fox") >= 5);
    CHECK(v.id("wolf") == Vocab::UNK);
    CHECK(v.size() == 7);
}

namespace {

struct Fixture {
    PlmConfig cfg;
    Vocab vocab;
    EncodedPrompt ep;
    PromptTemplate tpl;
    std::string context = "the fox is red . the owl is old .";
    std::string question = "what is the fox ?";

    explicit Fixture(PromptOrdering ord = PromptOrdering::ContextFirst) {
        cfg.d_model = 16;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.d_ff = 16;
        cfg.max_seq_len = 128;
        tpl.ordering = ord;
        std::vector<std::string> words;
        for (const auto& w : word_tokenize(build_prompt(tpl, context, question)).tokens)
            words.push_back(w);
        vocab = Vocab::build(words);
        cfg.vocab_size = vocab.size();
        ep = encode_prompt(tpl, context, question, vocab, cfg);
    }
};

}  // namespace

TEST_CASE("encode_prompt marks token ranges that decode back to their segments") {
    Fixture f;
    CHECK(f.ep.context_range.size() == word_tokenize(f.context).tokens.size());
    CHECK(f.ep.question_range.size() == word_tokenize(f.question).tokens.size());
    CHECK(f.ep.context_offsets.size() == f.ep.context_range.size());
    // first context token is "the" at char 0
    CHECK(f.ep.context_offsets[0] == std::pair<std::size_t, std::size_t>{0, 3});
    CHECK(f.vocab.token(f.ep.ids[f.ep.question_range.begin]) == "what");
    CHECK(f.vocab.token(f.ep.ids[f.ep.context_range.begin]) == "the");

    Fixture qf(PromptOrdering::QuestionFirst);
    CHECK(qf.ep.question_range.end <= qf.ep.context_range.begin);
    // a SEP sits between question and context
    bool sep_between = false;
    for (std::size_t i = qf.ep.question_range.end; i < qf.ep.context_range.begin; ++i)
        sep_between |= qf.ep.ids[i] == Vocab::SEP;
    CHECK(sep_between);
}

TEST_CASE("encode_prompt enforces the sequence-length budget") {
    Fixture f;
    PlmConfig tiny = f.cfg;
    tiny.max_seq_len = 8;
    CHECK_THROWS(encode_prompt(f.tpl, f.context, f.question, f.vocab, tiny));
}

TEST_CASE("trailing PAD does not change encoder states of real tokens") {
    Fixture f;
    std::mt19937_64 rng(5);
    ParamStore store;
    init_plm_params(f.cfg, rng, store);
    LoraConfig lora;
    PlmForward fwd{&f.cfg, &lora, nullptr};

    Tape t1;
    BoundParams b1 = bind(t1, store);
    const Tensor& plain = t1.value(plm_encode(t1, b1, fwd, f.ep.ids));

    std::vector<int> padded = f.ep.ids;
    padded.push_back(Vocab::PAD);
    padded.push_back(Vocab::PAD);
    Tape t2;
    BoundParams b2 = bind(t2, store);
    const Tensor& withpad = t2.value(plm_encode(t2, b2, fwd, padded));

    for (std::size_t i = 0; i < f.ep.ids.size(); ++i)
        for (std::size_t j = 0; j < f.cfg.d_model; ++j)
            CHECK(plain.at(i, j) == doctest::Approx(withpad.at(i, j)).epsilon(1e-12));
}

TEST_CASE("fresh LoRA adapters are an exact no-op") {
    Fixture f;
    std::mt19937_64 rng(6);
    ParamStore store;
    init_plm_params(f.cfg, rng, store);

    LoraConfig off;
    PlmForward fwd_off{&f.cfg, &off, nullptr};
    Tape t1;
    const Tensor base = t1.value(plm_encode(t1, bind(t1, store), fwd_off, f.ep.ids));

    LoraConfig on;
    on.enabled = true;
    on.rank = 4;
    on.alpha = 8;
    apply_lora(store, f.cfg, on, rng);
    PlmForward fwd_on{&f.cfg, &on, nullptr};
    Tape t2;
    const Tensor adapted = t2.value(plm_encode(t2, bind(t2, store), fwd_on, f.ep.ids));

    CHECK(base.data == adapted.data);  // B starts at zero: delta is exactly 0
}

TEST_CASE("LoRA freezes the base model and scales by alpha/r") {
    Fixture f;
    std::mt19937_64 rng(7);
    ParamStore store;
    init_plm_params(f.cfg, rng, store);
    LoraConfig lora;
    lora.enabled = true;
    lora.rank = 8;
    lora.alpha = 32;
    CHECK(lora.scale() == 4.0);
    apply_lora(store, f.cfg, lora, rng);

    std::size_t adapters = 0;
    for (const auto& [name, p] : store.params) {
        const bool is_adapter = name.find(".lora.") != std::string::npos;
        CHECK(p.trainable == is_adapter);
        adapters += is_adapter;
    }
    CHECK(adapters == 2 * lora_adapted_matrices(store).size());
    CHECK(store.trainable_count() ==
          lora_adapted_matrices(store).size() * 2 * lora.rank * f.cfg.d_model);

    LoraConfig bad = lora;
    bad.rank = f.cfg.d_model;
    ParamStore fresh;
    init_plm_params(f.cfg, rng, fresh);
    CHECK_THROWS(apply_lora(fresh, f.cfg, bad, rng));
}

TEST_CASE("greedy decode is deterministic and bounded") {
    Fixture f;
    std::mt19937_64 rng(8);
    ParamStore store;
    init_plm_params(f.cfg, rng, store);
    LoraConfig lora;
    const auto a = greedy_decode(store, f.cfg, lora, f.ep.ids, 6);
    const auto b = greedy_decode(store, f.cfg, lora, f.ep.ids, 6);
    CHECK(a == b);
    CHECK(a.size() <= 6);
    for (int id : a) CHECK(id != Vocab::EOS);
}
