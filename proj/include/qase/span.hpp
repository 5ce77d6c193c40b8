#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace qase {

// Character span into a context string, [start, end).
struct CharSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    std::string text;

    bool operator==(const CharSpan&) const = default;
};

// Per-context-token IO labels.
enum class Tag : int { O = 0, I = 1 };

using TagSequence = std::vector<Tag>;

// Character interval of each context token, [first, second).
using TokenOffsets = std::vector<std::pair<std::size_t, std::size_t>>;

// Token tagged I iff its interval overlaps any span by at least one
// character. Spans may arrive unsorted; they must lie inside the context.
TagSequence spans_to_tags(const TokenOffsets& offsets, const std::vector<CharSpan>& spans,
                          std::size_t context_len);

// Maximal runs of I become one span each, sorted by start.
std::vector<CharSpan> tags_to_spans(const TokenOffsets& offsets, const TagSequence& tags,
                                    const std::string& context);

}  // namespace qase
