#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <string>

#include "doctest.h"
#include "qase/plm.hpp"
#include "qase/span.hpp"

using namespace qase;

namespace {

// Context of n single-char words: "a b c ...". Token i covers chars [2i, 2i+1).
TokenOffsets unit_offsets(std::size_t n) {
    TokenOffsets offs;
    for (std::size_t i = 0; i < n; ++i) offs.emplace_back(2 * i, 2 * i + 1);
    return offs;
}

std::string unit_context(std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) s.push_back(' ');
        s.push_back(static_cast<char>('a' + (i % 26)));
    }
    return s;
}

}  // namespace

TEST_CASE("single span tags exactly the overlapped tokens") {
    const std::string ctx = "the cat sat on the mat";
    const auto toks = word_tokenize(ctx);
    CharSpan span{4, 11, "cat sat"};
    const TagSequence tags = spans_to_tags(toks.offsets, {span}, ctx.size());
    const TagSequence expect = {Tag::O, Tag::I, Tag::I, Tag::O, Tag::O, Tag::O};
    CHECK(tags == expect);
}

TEST_CASE("partial character overlap still tags the token") {
    const std::string ctx = "alpha beta";
    const auto toks = word_tokenize(ctx);
    // covers "ha be": clips both words
    const TagSequence tags = spans_to_tags(toks.offsets, {{3, 8, "ha be"}}, ctx.size());
    CHECK(tags == TagSequence{Tag::I, Tag::I});
}

TEST_CASE("tags_to_spans merges maximal runs") {
    const std::string ctx = unit_context(6);
    const auto spans =
        tags_to_spans(unit_offsets(6), {Tag::O, Tag::I, Tag::I, Tag::O, Tag::I, Tag::O}, ctx);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].text == "b c");
    CHECK(spans[0].start == 2);
    CHECK(spans[0].end == 5);
    CHECK(spans[1].text == "e");
}

TEST_CASE("out-of-bounds and empty spans are rejected") {
    const auto offs = unit_offsets(3);
    CHECK_THROWS(spans_to_tags(offs, {{0, 99, "x"}}, 5));
    CHECK_THROWS(spans_to_tags(offs, {{2, 2, ""}}, 5));
}

TEST_CASE("round-trip: random non-adjacent token-aligned span sets survive both codecs") {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng() % 30;
        const std::string ctx = unit_context(n);
        const auto offs = unit_offsets(n);

        // Random IO mask with no adjacent runs (each run separated by an O).
        TagSequence tags(n, Tag::O);
        std::size_t i = 0;
        while (i < n) {
            if (rng() % 3 == 0) {
                std::size_t len = 1 + rng() % 4;
                for (; len > 0 && i < n; --len, ++i) tags[i] = Tag::I;
                ++i;  // gap keeps runs non-adjacent
            } else {
                ++i;
            }
        }
        const auto spans = tags_to_spans(offs, tags, ctx);
        CHECK(spans_to_tags(offs, spans, ctx.size()) == tags);
    }
}
