#pragma once

#include <optional>
#include <string>
#include <vector>

namespace qase {

struct MrcExample;  // data.hpp

enum class DatasetKind { Squad, MultiSpan, Quoref };

struct Prediction {
    std::string id;
    std::vector<std::string> answer_texts;  // singleton for single-span datasets
};

struct MetricsReport {
    DatasetKind kind = DatasetKind::Squad;
    std::size_t n_examples = 0;
    std::optional<double> em;          // percentage
    std::optional<double> f1;          // percentage
    std::optional<double> em_f1;       // percentage
    std::optional<double> overlap_f1;  // percentage
};

struct PrfScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Leaderboard-style answer normalization: lowercase, strip ASCII
// punctuation, drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(const std::string& text);

// 1 iff the normalized prediction equals any normalized gold.
int squad_em(const std::string& pred, const std::vector<std::string>& golds);

// Token-bag F1 against each gold, best taken.
double squad_f1(const std::string& pred, const std::vector<std::string>& golds);

// Set-level exact-match P/R/F1 with one-to-one multiset matching of
// normalized spans. Both lists empty scores 1.
PrfScore multispan_em_f1(const std::vector<std::string>& pred_spans,
                         const std::vector<std::string>& gold_spans);

// Partial-match credit: per predicted span, best token overlap against any
// gold divided by the span's own token count; recall is symmetric.
PrfScore multispan_overlap_f1(const std::vector<std::string>& pred_spans,
                              const std::vector<std::string>& gold_spans);

// Macro-averaged dataset scores, x100. Prediction ids must cover example
// ids exactly once.
MetricsReport evaluate(const std::vector<Prediction>& preds,
                       const std::vector<MrcExample>& examples, DatasetKind kind);

// Splits a generated answer on the bracketed multi-span format
// ["answer1", "answer2", ...]; a plain string becomes a single span.
std::vector<std::string> parse_span_list(const std::string& text);

std::string dataset_kind_name(DatasetKind kind);
DatasetKind dataset_kind_from_name(const std::string& name);

// Flat key-value report text with stable key order.
std::string format_report(const MetricsReport& report);

void write_predictions(const std::string& path, const std::vector<Prediction>& preds);
std::vector<Prediction> read_predictions(const std::string& path);

}  // namespace qase
