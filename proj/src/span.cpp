#include "qase/span.hpp"

#include <stdexcept>

namespace qase {

TagSequence spans_to_tags(const TokenOffsets& offsets, const std::vector<CharSpan>& spans,
                          std::size_t context_len) {
    for (const CharSpan& s : spans) {
        if (s.start >= s.end) throw std::invalid_argument("spans_to_tags: empty span");
        if (s.end > context_len) throw std::invalid_argument("spans_to_tags: span out of bounds");
    }
    TagSequence tags(offsets.size(), Tag::O);
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        for (const CharSpan& s : spans) {
            if (offsets[i].first < s.end && s.start < offsets[i].second) {
                tags[i] = Tag::I;
                break;
            }
        }
    }
    return tags;
}

std::vector<CharSpan> tags_to_spans(const TokenOffsets& offsets, const TagSequence& tags,
                                    const std::string& context) {
    if (offsets.size() != tags.size())
        throw std::invalid_argument("tags_to_spans: length mismatch");
    std::vector<CharSpan> spans;
    std::size_t i = 0;
    while (i < tags.size()) {
        if (tags[i] == Tag::I) {
            std::size_t j = i;
            while (j + 1 < tags.size() && tags[j + 1] == Tag::I) ++j;
            CharSpan s;
            s.start = offsets[i].first;
            s.end = offsets[j].second;
            s.text = context.substr(s.start, s.end - s.start);
            spans.push_back(std::move(s));
            i = j + 1;
        } else {
            ++i;
        }
    }
    return spans;
}

}  // namespace qase
