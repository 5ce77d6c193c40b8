#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qase/span.hpp"

namespace qase {

// One (context, question, gold spans) record. Offsets index into context.
struct MrcExample {
    std::string id;
    std::string context;
    std::string question;
    std::vector<CharSpan> answers;
    bool multi_span = false;
};

// Throws if any answer text disagrees with context[start, end).
void validate_example(const MrcExample& ex);

// SQuAD v1.1 layout: data -> paragraphs -> qas -> answers{text, answer_start}.
// Multiple answers on one question are alternative golds (multi_span=false).
std::vector<MrcExample> load_squad(const std::string& path);

// Word-tokenized records with per-word IO labels; context is the
// space-joined word list and gold spans come from maximal I runs.
std::vector<MrcExample> load_multispan(const std::string& path);

// Quoref paragraph/qas layout; all answer spans are joint golds and
// multi_span is set when there is more than one.
std::vector<MrcExample> load_quoref(const std::string& path);

// Internal interchange format, one JSON record per line.
std::vector<MrcExample> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<MrcExample>& examples);

struct CorpusSpec {
    std::size_t n_examples = 64;
    double multi_span_fraction = 0.0;
    std::vector<std::string> filler_vocab;  // empty -> built-in default
    std::size_t answer_len_min = 1;
    std::size_t answer_len_max = 2;
    std::uint64_t seed = 0;
};

// Seeded synthetic corpus: templated contexts with planted answer phrases
// and questions naming the planted slot. Planted spans are exact and
// pairwise non-adjacent.
std::vector<MrcExample> generate_corpus(const CorpusSpec& spec);

}  // namespace qase
