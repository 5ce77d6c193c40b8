#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "qase/data.hpp"

using namespace qase;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path("/tmp/qase_test_" + name) {
        std::ofstream out(path, std::ios::binary);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("squad loader reads alternative golds") {
    TempFile f("squad.json", R"({"data": [{"paragraphs": [{
        "context": "Norman rule lasted 13 years and 48 days in total.",
        "qas": [{"id": "q1", "question": "How long?",
                 "answers": [{"text": "13 years and 48 days", "answer_start": 19},
                             {"text": "13 years", "answer_start": 19}]}]}]}]})");
    const auto exs = load_squad(f.path);
    REQUIRE(exs.size() == 1);
    CHECK(exs[0].id == "q1");
    CHECK_FALSE(exs[0].multi_span);
    REQUIRE(exs[0].answers.size() == 2);
    CHECK(exs[0].answers[0].text == "13 years and 48 days");
    CHECK(exs[0].answers[0].start == 19);
    CHECK(exs[0].answers[0].end == 39);
}

TEST_CASE("squad loader rejects offset/text disagreement") {
    TempFile f("squad_bad.json", R"({"data": [{"paragraphs": [{
        "context": "abc def",
        "qas": [{"id": "q1", "question": "?",
                 "answers": [{"text": "def", "answer_start": 0}]}]}]}]})");
    CHECK_THROWS(load_squad(f.path));
}

TEST_CASE("multispan loader turns label runs into joint spans") {
    TempFile f("ms.json", R"({"data": [{"id": "m1",
        "context": ["red", "fox", "and", "blue", "bird"],
        "question": ["which", "animals"],
        "label": ["B", "I", "O", "B", "I"]}]})");
    const auto exs = load_multispan(f.path);
    REQUIRE(exs.size() == 1);
    CHECK(exs[0].multi_span);
    CHECK(exs[0].context == "red fox and blue bird");
    REQUIRE(exs[0].answers.size() == 2);
    CHECK(exs[0].answers[0].text == "red fox");
    CHECK(exs[0].answers[1].text == "blue bird");
}

TEST_CASE("quoref loader marks multiple joint spans as multi-span") {
    TempFile f("quoref.json", R"({"data": [{"paragraphs": [{
        "context": "Anna met Bo. Bo met Anna.",
        "qas": [{"id": "r1", "question": "Who met?",
                 "answers": [{"text": "Anna", "answer_start": 0},
                             {"text": "Bo", "answer_start": 9}]}]}]}]})");
    const auto exs = load_quoref(f.path);
    REQUIRE(exs.size() == 1);
    CHECK(exs[0].multi_span);
    CHECK(exs[0].answers.size() == 2);
}

TEST_CASE("jsonl interchange round-trips") {
    CorpusSpec spec;
    spec.n_examples = 20;
    spec.multi_span_fraction = 0.5;
    spec.seed = 9;
    const auto exs = generate_corpus(spec);
    const std::string path = "/tmp/qase_test_rt.jsonl";
    write_jsonl(path, exs);
    const auto back = read_jsonl(path);
    std::remove(path.c_str());
    REQUIRE(back.size() == exs.size());
    for (std::size_t i = 0; i < exs.size(); ++i) {
        CHECK(back[i].id == exs[i].id);
        CHECK(back[i].context == exs[i].context);
        CHECK(back[i].question == exs[i].question);
        CHECK(back[i].multi_span == exs[i].multi_span);
        CHECK(back[i].answers == exs[i].answers);
    }
}

TEST_CASE("generated corpora are valid, seeded, and exact") {
    CorpusSpec spec;
    spec.n_examples = 50;
    spec.multi_span_fraction = 0.4;
    spec.seed = 3;
    const auto a = generate_corpus(spec);
    const auto b = generate_corpus(spec);
    REQUIRE(a.size() == 50);
    std::size_t multi = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        validate_example(a[i]);  // throws on span/text disagreement
        CHECK(a[i].context == b[i].context);
        CHECK(a[i].answers == b[i].answers);
        multi += a[i].multi_span;
        if (a[i].multi_span) CHECK(a[i].answers.size() >= 2);
        else CHECK(a[i].answers.size() == 1);
    }
    CHECK(multi > 5);
    CHECK(multi < 35);

    spec.seed = 4;
    const auto c = generate_corpus(spec);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs |= (a[i].context != c[i].context);
    CHECK(differs);
}

TEST_CASE("multi-span answers are pairwise non-adjacent") {
    CorpusSpec spec;
    spec.n_examples = 40;
    spec.multi_span_fraction = 1.0;
    spec.seed = 11;
    for (const auto& ex : generate_corpus(spec)) {
        REQUIRE(ex.answers.size() == 2);
        const auto& a = ex.answers[0];
        const auto& b = ex.answers[1];
        CHECK(a.end + 1 < b.start);  // at least one full character between spans
    }
}

TEST_CASE("validate_example rejects tampered spans") {
    MrcExample ex;
    ex.id = "t";
    ex.context = "red fox";
    ex.question = "q";
    ex.answers = {{0, 3, "fox"}};
    CHECK_THROWS(validate_example(ex));
}
