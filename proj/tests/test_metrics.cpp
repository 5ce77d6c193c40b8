#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "qase/data.hpp"
#include "qase/metrics.hpp"

using namespace qase;

TEST_CASE("answer normalization") {
    CHECK(normalize_answer("The  Cat.") == "cat");
    CHECK(normalize_answer("a An the") == "");
    CHECK(normalize_answer("13 years, and 48 days!") == "13 years and 48 days");
}

TEST_CASE("squad exact match over alternative golds") {
    CHECK(squad_em("13 years and 48 days", {"13 years and 48 days"}) == 1);
    CHECK(squad_em("26", {"13 years and 48 days"}) == 0);
    CHECK(squad_em("The Cat", {"dog", "cat"}) == 1);
}

TEST_CASE("squad token F1") {
    // 4 shared tokens, 8 predicted, 4 gold -> P=0.5, R=1, F1=2/3
    CHECK(squad_f1("entrance to studio 5 at the City Road complex",
                   {"The entrance to studio 5"}) == doctest::Approx(2.0 / 3.0));
    CHECK(squad_f1("exact phrase", {"exact phrase"}) == doctest::Approx(1.0));
    CHECK(squad_f1("nothing shared", {"else entirely"}) == doctest::Approx(0.0));
    CHECK(squad_f1("a b", {"b c", "a b"}) == doctest::Approx(1.0));  // best gold taken
}

TEST_CASE("multi-span exact-match F1 uses one-to-one matching") {
    auto s = multispan_em_f1({"red fox", "blue bird"}, {"blue bird", "red fox"});
    CHECK(s.f1 == doctest::Approx(1.0));

    // duplicate prediction may match only one gold copy
    s = multispan_em_f1({"red", "red"}, {"red", "blue"});
    CHECK(s.precision == doctest::Approx(0.5));
    CHECK(s.recall == doctest::Approx(0.5));
    CHECK(s.f1 == doctest::Approx(0.5));

    s = multispan_em_f1({}, {});
    CHECK(s.f1 == doctest::Approx(1.0));
    s = multispan_em_f1({"x"}, {});
    CHECK(s.f1 == doctest::Approx(0.0));
}

TEST_CASE("multi-span overlap F1 gives partial credit") {
    // pred "x y" vs gold "y z": overlap 1 of 2 pred tokens and 1 of 2 gold tokens
    auto s = multispan_overlap_f1({"x y"}, {"y z"});
    CHECK(s.precision == doctest::Approx(0.5));
    CHECK(s.recall == doctest::Approx(0.5));
    CHECK(s.f1 == doctest::Approx(0.5));

    s = multispan_overlap_f1({"red fox", "blue bird"}, {"red fox", "blue bird"});
    CHECK(s.f1 == doctest::Approx(1.0));
}

TEST_CASE("parse_span_list handles the bracketed format and plain text") {
    CHECK(parse_span_list(R"([ " answer1 " , " answer2 " ])") ==
          std::vector<std::string>{"answer1", "answer2"});
    CHECK(parse_span_list(R"(["only one"])") == std::vector<std::string>{"only one"});
    CHECK(parse_span_list("plain answer") == std::vector<std::string>{"plain answer"});
    CHECK(parse_span_list("[ ]").empty());
}

TEST_CASE("evaluate macro-averages and checks id coverage") {
    std::vector<MrcExample> exs(2);
    exs[0].id = "a";
    exs[0].context = "x";
    exs[0].question = "q";
    exs[0].answers = {{0, 1, "x"}};
    exs[1] = exs[0];
    exs[1].id = "b";

    std::vector<Prediction> preds = {{"a", {"x"}}, {"b", {"y"}}};
    const auto rep = evaluate(preds, exs, DatasetKind::Squad);
    CHECK(rep.n_examples == 2);
    CHECK(*rep.em == doctest::Approx(50.0));
    CHECK(*rep.f1 == doctest::Approx(50.0));
    CHECK_FALSE(rep.em_f1.has_value());

    preds[1].id = "a";  // duplicate
    CHECK_THROWS(evaluate(preds, exs, DatasetKind::Squad));
    preds.pop_back();  // missing id
    CHECK_THROWS(evaluate(preds, exs, DatasetKind::Squad));
}

TEST_CASE("report formatting is stable") {
    MetricsReport rep;
    rep.kind = DatasetKind::MultiSpan;
    rep.n_examples = 3;
    rep.em_f1 = 12.5;
    rep.overlap_f1 = 50.0;
    CHECK(format_report(rep) ==
          "dataset = multispan\nn_examples = 3\nem_f1 = 12.500000\noverlap_f1 = 50.000000\n");
}
