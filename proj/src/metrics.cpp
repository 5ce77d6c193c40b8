#include "qase/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "qase/data.hpp"

namespace qase {

namespace {

std::vector<std::string> whitespace_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::vector<std::string> norm_tokens(const std::string& s) {
    return whitespace_tokens(normalize_answer(s));
}

// Multiset intersection size of two token bags.
std::size_t bag_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : a) ++counts[t];
    std::size_t common = 0;
    for (const auto& t : b) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    return common;
}

double harmonic_f1(double p, double r) {
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

}  // namespace

std::string normalize_answer(const std::string& text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (char c : text) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::ispunct(uc) && uc < 128) continue;  // ASCII punctuation only
        lowered.push_back(static_cast<char>(std::tolower(uc)));
    }
    std::string out;
    for (const std::string& tok : whitespace_tokens(lowered)) {
        if (tok == "a" || tok == "an" || tok == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

int squad_em(const std::string& pred, const std::vector<std::string>& golds) {
    if (golds.empty()) throw std::invalid_argument("squad_em: empty gold list");
    const std::string np = normalize_answer(pred);
    for (const auto& g : golds)
        if (np == normalize_answer(g)) return 1;
    return 0;
}

double squad_f1(const std::string& pred, const std::vector<std::string>& golds) {
    if (golds.empty()) throw std::invalid_argument("squad_f1: empty gold list");
    const auto pt = norm_tokens(pred);
    double best = 0.0;
    for (const auto& g : golds) {
        const auto gt = norm_tokens(g);
        if (pt.empty() || gt.empty()) {
            best = std::max(best, pt == gt ? 1.0 : 0.0);
            continue;
        }
        const std::size_t common = bag_overlap(pt, gt);
        if (common == 0) continue;
        const double p = static_cast<double>(common) / static_cast<double>(pt.size());
        const double r = static_cast<double>(common) / static_cast<double>(gt.size());
        best = std::max(best, harmonic_f1(p, r));
    }
    return best;
}

PrfScore multispan_em_f1(const std::vector<std::string>& pred_spans,
                         const std::vector<std::string>& gold_spans) {
    if (pred_spans.empty() && gold_spans.empty()) return {1.0, 1.0, 1.0};
    if (pred_spans.empty() || gold_spans.empty()) return {0.0, 0.0, 0.0};
    std::multiset<std::string> golds;
    for (const auto& g : gold_spans) golds.insert(normalize_answer(g));
    std::size_t matched = 0;
    for (const auto& p : pred_spans) {
        auto it = golds.find(normalize_answer(p));
        if (it != golds.end()) {
            golds.erase(it);
            ++matched;
        }
    }
    PrfScore s;
    s.precision = static_cast<double>(matched) / static_cast<double>(pred_spans.size());
    s.recall = static_cast<double>(matched) / static_cast<double>(gold_spans.size());
    s.f1 = harmonic_f1(s.precision, s.recall);
    return s;
}

PrfScore multispan_overlap_f1(const std::vector<std::string>& pred_spans,
                              const std::vector<std::string>& gold_spans) {
    if (pred_spans.empty() && gold_spans.empty()) return {1.0, 1.0, 1.0};
    if (pred_spans.empty() || gold_spans.empty()) return {0.0, 0.0, 0.0};
    std::vector<std::vector<std::string>> pt, gt;
    for (const auto& p : pred_spans) pt.push_back(norm_tokens(p));
    for (const auto& g : gold_spans) gt.push_back(norm_tokens(g));
    auto credit = [](const std::vector<std::vector<std::string>>& own,
                     const std::vector<std::vector<std::string>>& other) {
        double total = 0.0;
        for (const auto& o : own) {
            double best = 0.0;
            for (const auto& x : other) {
                if (o.empty()) {
                    best = std::max(best, x.empty() ? 1.0 : 0.0);
                    continue;
                }
                best = std::max(best, static_cast<double>(bag_overlap(o, x)) /
                                          static_cast<double>(o.size()));
            }
            total += best;
        }
        return total / static_cast<double>(own.size());
    };
    PrfScore s;
    s.precision = credit(pt, gt);
    s.recall = credit(gt, pt);
    s.f1 = harmonic_f1(s.precision, s.recall);
    return s;
}

namespace {

// Single-text view of an example's golds: alternatives for SQuAD-style
// records, one joint string for multi-span records.
std::vector<std::string> gold_alternatives(const MrcExample& ex) {
    if (ex.multi_span) {
        std::string joined;
        for (const auto& a : ex.answers) {
            if (!joined.empty()) joined.push_back(' ');
            joined += a.text;
        }
        return {joined};
    }
    std::vector<std::string> out;
    for (const auto& a : ex.answers) out.push_back(a.text);
    if (out.empty()) out.push_back("");
    return out;
}

std::vector<std::string> gold_span_texts(const MrcExample& ex) {
    std::vector<std::string> out;
    for (const auto& a : ex.answers) out.push_back(a.text);
    return out;
}

std::string joined_prediction(const Prediction& p) {
    std::string out;
    for (const auto& t : p.answer_texts) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

}  // namespace

MetricsReport evaluate(const std::vector<Prediction>& preds,
                       const std::vector<MrcExample>& examples, DatasetKind kind) {
    std::map<std::string, const Prediction*> by_id;
    for (const auto& p : preds) {
        if (!by_id.emplace(p.id, &p).second)
            throw std::invalid_argument("evaluate: duplicate prediction id " + p.id);
    }
    if (by_id.size() != examples.size())
        throw std::invalid_argument("evaluate: prediction/example count mismatch");

    MetricsReport report;
    report.kind = kind;
    report.n_examples = examples.size();
    double em_sum = 0.0, f1_sum = 0.0, emf1_sum = 0.0, overlap_sum = 0.0;
    for (const auto& ex : examples) {
        auto it = by_id.find(ex.id);
        if (it == by_id.end())
            throw std::invalid_argument("evaluate: missing prediction for id " + ex.id);
        const Prediction& p = *it->second;
        if (kind == DatasetKind::MultiSpan) {
            emf1_sum += multispan_em_f1(p.answer_texts, gold_span_texts(ex)).f1;
            overlap_sum += multispan_overlap_f1(p.answer_texts, gold_span_texts(ex)).f1;
        } else {
            const auto golds = gold_alternatives(ex);
            em_sum += squad_em(joined_prediction(p), golds);
            f1_sum += squad_f1(joined_prediction(p), golds);
        }
    }
    const double n = static_cast<double>(examples.size());
    if (kind == DatasetKind::MultiSpan) {
        report.em_f1 = 100.0 * emf1_sum / n;
        report.overlap_f1 = 100.0 * overlap_sum / n;
    } else {
        report.em = 100.0 * em_sum / n;
        report.f1 = 100.0 * f1_sum / n;
    }
    return report;
}

std::vector<std::string> parse_span_list(const std::string& text) {
    std::string t = text;
    // trim
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.erase(t.begin());
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
    if (t.size() >= 2 && t.front() == '[' && t.back() == ']') {
        std::vector<std::string> spans;
        std::string cur;
        bool in_quote = false;
        for (std::size_t i = 1; i + 1 < t.size(); ++i) {
            const char c = t[i];
            if (c == '"') {
                if (in_quote) {
                    while (!cur.empty() && std::isspace(static_cast<unsigned char>(cur.front())))
                        cur.erase(cur.begin());
                    while (!cur.empty() && std::isspace(static_cast<unsigned char>(cur.back())))
                        cur.pop_back();
                    spans.push_back(cur);
                }
                cur.clear();
                in_quote = !in_quote;
            } else if (in_quote) {
                cur.push_back(c);
            }
        }
        return spans;
    }
    if (t.empty()) return {};
    return {t};
}

std::string dataset_kind_name(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::Squad: return "squad";
        case DatasetKind::MultiSpan: return "multispan";
        case DatasetKind::Quoref: return "quoref";
    }
    return "squad";
}

DatasetKind dataset_kind_from_name(const std::string& name) {
    if (name == "squad") return DatasetKind::Squad;
    if (name == "multispan") return DatasetKind::MultiSpan;
    if (name == "quoref") return DatasetKind::Quoref;
    throw std::invalid_argument("unknown dataset kind: " + name);
}

std::string format_report(const MetricsReport& report) {
    std::ostringstream os;
    os << "dataset = " << dataset_kind_name(report.kind) << "\n";
    os << "n_examples = " << report.n_examples << "\n";
    char buf[64];
    auto emit = [&](const char* key, const std::optional<double>& v) {
        if (!v) return;
        std::snprintf(buf, sizeof(buf), "%.6f", *v);
        os << key << " = " << buf << "\n";
    };
    emit("em", report.em);
    emit("f1", report.f1);
    emit("em_f1", report.em_f1);
    emit("overlap_f1", report.overlap_f1);
    return os.str();
}

void write_predictions(const std::string& path, const std::vector<Prediction>& preds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    for (const auto& p : preds) {
        nlohmann::json j;
        j["id"] = p.id;
        j["answers"] = p.answer_texts;
        out << j.dump() << "\n";
    }
}

std::vector<Prediction> read_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<Prediction> preds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        Prediction p;
        p.id = j.at("id").get<std::string>();
        p.answer_texts = j.at("answers").get<std::vector<std::string>>();
        preds.push_back(std::move(p));
    }
    return preds;
}

}  // namespace qase
