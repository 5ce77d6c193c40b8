#include "qase/data.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace qase {

using nlohmann::json;

void validate_example(const MrcExample& ex) {
    for (const CharSpan& a : ex.answers) {
        if (a.start >= a.end || a.end > ex.context.size())
            throw std::runtime_error("example " + ex.id + ": answer offsets out of bounds");
        if (ex.context.substr(a.start, a.end - a.start) != a.text)
            throw std::runtime_error("example " + ex.id + ": answer text does not match context at [" +
                                     std::to_string(a.start) + "," + std::to_string(a.end) + ")");
    }
}

namespace {

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": JSON parse error: " + e.what());
    }
    return j;
}

// Shared SQuAD/Quoref paragraph walk. When joint_answers is set, every
// answer is a gold span of the same prediction; otherwise answers are
// alternatives and only the first is a span target.
std::vector<MrcExample> load_paragraph_qas(const std::string& path, bool joint_answers) {
    const json root = load_json_file(path);
    if (!root.contains("data") || !root["data"].is_array())
        throw std::runtime_error(path + ": expected top-level 'data' array");
    std::vector<MrcExample> out;
    for (const auto& article : root["data"]) {
        if (!article.contains("paragraphs"))
            throw std::runtime_error(path + ": article without 'paragraphs'");
        for (const auto& para : article["paragraphs"]) {
            const std::string context = para.at("context").get<std::string>();
            for (const auto& qa : para.at("qas")) {
                MrcExample ex;
                ex.id = qa.at("id").is_string() ? qa.at("id").get<std::string>()
                                                : qa.at("id").dump();
                ex.context = context;
                ex.question = qa.at("question").get<std::string>();
                for (const auto& ans : qa.at("answers")) {
                    CharSpan s;
                    s.text = ans.at("text").get<std::string>();
                    s.start = ans.at("answer_start").get<std::size_t>();
                    s.end = s.start + s.text.size();
                    ex.answers.push_back(std::move(s));
                }
                ex.multi_span = joint_answers && ex.answers.size() > 1;
                validate_example(ex);
                out.push_back(std::move(ex));
            }
        }
    }
    return out;
}

}  // namespace

std::vector<MrcExample> load_squad(const std::string& path) {
    return load_paragraph_qas(path, /*joint_answers=*/false);
}

std::vector<MrcExample> load_quoref(const std::string& path) {
    return load_paragraph_qas(path, /*joint_answers=*/true);
}

std::vector<MrcExample> load_multispan(const std::string& path) {
    const json root = load_json_file(path);
    if (!root.contains("data") || !root["data"].is_array())
        throw std::runtime_error(path + ": expected top-level 'data' array");
    std::vector<MrcExample> out;
    for (const auto& rec : root["data"]) {
        MrcExample ex;
        ex.id = rec.at("id").is_string() ? rec.at("id").get<std::string>() : rec.at("id").dump();
        const auto qwords = rec.at("question").get<std::vector<std::string>>();
        const auto cwords = rec.at("context").get<std::vector<std::string>>();
        const auto labels = rec.at("label").get<std::vector<std::string>>();
        if (labels.size() != cwords.size())
            throw std::runtime_error("example " + ex.id + ": label count " +
                                     std::to_string(labels.size()) + " != word count " +
                                     std::to_string(cwords.size()));
        std::ostringstream qs;
        for (std::size_t i = 0; i < qwords.size(); ++i) qs << (i ? " " : "") << qwords[i];
        ex.question = qs.str();

        std::vector<std::pair<std::size_t, std::size_t>> offsets;
        std::string context;
        for (const auto& w : cwords) {
            if (!context.empty()) context.push_back(' ');
            offsets.emplace_back(context.size(), context.size() + w.size());
            context += w;
        }
        ex.context = std::move(context);

        // BIO-compatible runs: a span opens at B, or at I after O.
        std::size_t i = 0;
        while (i < labels.size()) {
            if (labels[i] == "O") {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + 1 < labels.size() && labels[j + 1] == "I") ++j;
            CharSpan s;
            s.start = offsets[i].first;
            s.end = offsets[j].second;
            s.text = ex.context.substr(s.start, s.end - s.start);
            ex.answers.push_back(std::move(s));
            i = j + 1;
        }
        ex.multi_span = true;
        validate_example(ex);
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<MrcExample> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<MrcExample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        MrcExample ex;
        ex.id = j.at("id").get<std::string>();
        ex.context = j.at("context").get<std::string>();
        ex.question = j.at("question").get<std::string>();
        for (const auto& a : j.at("answers")) {
            CharSpan s;
            s.start = a.at("start").get<std::size_t>();
            s.end = a.at("end").get<std::size_t>();
            s.text = a.at("text").get<std::string>();
            ex.answers.push_back(std::move(s));
        }
        ex.multi_span = j.at("multi_span").get<bool>();
        validate_example(ex);
        out.push_back(std::move(ex));
    }
    return out;
}

void write_jsonl(const std::string& path, const std::vector<MrcExample>& examples) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    for (const auto& ex : examples) {
        json j;
        j["id"] = ex.id;
        j["context"] = ex.context;
        j["question"] = ex.question;
        json answers = json::array();
        for (const auto& a : ex.answers)
            answers.push_back({{"start", a.start}, {"end", a.end}, {"text", a.text}});
        j["answers"] = std::move(answers);
        j["multi_span"] = ex.multi_span;
        out << j.dump() << "\n";
    }
}

namespace {

const std::vector<std::string> kSlotNouns = {"pod",  "lamp", "door", "fish",
                                             "tree", "coin", "boat", "sock"};
const std::vector<std::string> kDefaultFillers = {"red",  "blue", "tall", "warm",
                                                  "cold", "soft", "old",  "round"};

}  // namespace

std::vector<MrcExample> generate_corpus(const CorpusSpec& spec) {
    if (spec.multi_span_fraction < 0.0 || spec.multi_span_fraction > 1.0)
        throw std::invalid_argument("generate_corpus: multi_span_fraction outside [0,1]");
    if (spec.answer_len_min == 0 || spec.answer_len_min > spec.answer_len_max)
        throw std::invalid_argument("generate_corpus: bad answer length range");
    const auto& fillers = spec.filler_vocab.empty() ? kDefaultFillers : spec.filler_vocab;
    if (fillers.size() < 2)
        throw std::invalid_argument("generate_corpus: vocabulary too small");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_filler(0, fillers.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_len(spec.answer_len_min, spec.answer_len_max);

    std::vector<MrcExample> out;
    out.reserve(spec.n_examples);
    for (std::size_t n = 0; n < spec.n_examples; ++n) {
        const bool multi = coin(rng) < spec.multi_span_fraction;

        // Three facts; the asked slot owns one fact, or two when multi-span.
        std::vector<std::size_t> noun_ids(kSlotNouns.size());
        for (std::size_t i = 0; i < noun_ids.size(); ++i) noun_ids[i] = i;
        std::shuffle(noun_ids.begin(), noun_ids.end(), rng);
        const std::string& asked = kSlotNouns[noun_ids[0]];
        std::vector<std::string> fact_nouns;
        if (multi)
            fact_nouns = {asked, kSlotNouns[noun_ids[1]], asked};
        else
            fact_nouns = {kSlotNouns[noun_ids[1]], asked, kSlotNouns[noun_ids[2]]};

        MrcExample ex;
        ex.id = "syn-" + std::to_string(n);
        ex.multi_span = multi;
        for (const std::string& noun : fact_nouns) {
            const std::size_t len = pick_len(rng);
            std::string phrase;
            for (std::size_t w = 0; w < len; ++w) {
                if (w) phrase.push_back(' ');
                phrase += fillers[pick_filler(rng)];
            }
            if (!ex.context.empty()) ex.context.push_back(' ');
            ex.context += "the " + noun + " is ";
            const std::size_t start = ex.context.size();
            ex.context += phrase;
            if (noun == asked) {
                CharSpan s;
                s.start = start;
                s.end = start + phrase.size();
                s.text = phrase;
                ex.answers.push_back(std::move(s));
            }
            ex.context += " .";
        }
        ex.question = "what is the " + asked + " ?";
        validate_example(ex);
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace qase
