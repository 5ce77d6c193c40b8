#include "qase/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace qase {

void TrainConfig::validate() const {
    if (beta < 0.0) throw std::invalid_argument("config: beta must be >= 0");
    if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be > 0");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    plm.validate();
}

void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
    auto to_u = [&](const std::string& v) { return static_cast<std::size_t>(std::stoull(v)); };
    if (key == "beta") cfg.beta = std::stod(value);
    else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
    else if (key == "epochs") cfg.epochs = to_u(value);
    else if (key == "batch_size") cfg.batch_size = to_u(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "head_kind") cfg.head_kind = head_kind_from_name(value);
    else if (key == "ordering") {
        if (value == "context-first") cfg.ordering = PromptOrdering::ContextFirst;
        else if (value == "question-first") cfg.ordering = PromptOrdering::QuestionFirst;
        else throw std::invalid_argument("config: unknown ordering " + value);
    } else if (key == "lora.enabled") cfg.lora.enabled = (value == "true" || value == "1");
    else if (key == "lora.rank") cfg.lora.rank = to_u(value);
    else if (key == "lora.alpha") cfg.lora.alpha = std::stod(value);
    else if (key == "lora.dropout") cfg.lora.dropout = std::stod(value);
    else if (key == "d_model") cfg.plm.d_model = to_u(value);
    else if (key == "n_layers") cfg.plm.n_layers = to_u(value);
    else if (key == "n_heads") cfg.plm.n_heads = to_u(value);
    else if (key == "d_ff") cfg.plm.d_ff = to_u(value);
    else if (key == "vocab_size") cfg.plm.vocab_size = to_u(value);
    else if (key == "max_seq_len") cfg.plm.max_seq_len = to_u(value);
    else if (key == "head_h") cfg.head.h = to_u(value);
    else if (key == "head_n_heads") cfg.head.n_heads = to_u(value);
    else if (key == "max_answer_len") cfg.max_answer_len = to_u(value);
    else throw std::invalid_argument("config: unknown key " + key);
}

TrainConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    TrainConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        apply_config_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

std::string format_config(const TrainConfig& cfg) {
    std::ostringstream os;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    os << "beta = " << num(cfg.beta) << "\n";
    os << "learning_rate = " << num(cfg.learning_rate) << "\n";
    os << "epochs = " << cfg.epochs << "\n";
    os << "batch_size = " << cfg.batch_size << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "head_kind = " << head_kind_name(cfg.head_kind) << "\n";
    os << "ordering = "
       << (cfg.ordering == PromptOrdering::ContextFirst ? "context-first" : "question-first")
       << "\n";
    os << "lora.enabled = " << (cfg.lora.enabled ? "true" : "false") << "\n";
    os << "lora.rank = " << cfg.lora.rank << "\n";
    os << "lora.alpha = " << num(cfg.lora.alpha) << "\n";
    os << "lora.dropout = " << num(cfg.lora.dropout) << "\n";
    os << "d_model = " << cfg.plm.d_model << "\n";
    os << "n_layers = " << cfg.plm.n_layers << "\n";
    os << "n_heads = " << cfg.plm.n_heads << "\n";
    os << "d_ff = " << cfg.plm.d_ff << "\n";
    os << "vocab_size = " << cfg.plm.vocab_size << "\n";
    os << "max_seq_len = " << cfg.plm.max_seq_len << "\n";
    os << "head_h = " << cfg.head.h << "\n";
    os << "head_n_heads = " << cfg.head.n_heads << "\n";
    os << "max_answer_len = " << cfg.max_answer_len << "\n";
    return os.str();
}

LossBreakdown combined_loss(double lml, double qase, double beta) {
    if (!std::isfinite(lml) || !std::isfinite(qase))
        throw std::invalid_argument("combined_loss: non-finite input");
    LossBreakdown b;
    b.lml = lml;
    b.qase = qase;
    b.total = lml + beta * qase;
    return b;
}

std::string target_answer_text(const MrcExample& ex) {
    if (ex.multi_span) {
        std::string out = "[";
        for (std::size_t i = 0; i < ex.answers.size(); ++i) {
            if (i) out += ", ";
            out += "\"" + ex.answers[i].text + "\"";
        }
        return out + "]";
    }
    return ex.answers.empty() ? std::string() : ex.answers.front().text;
}

namespace {

HeadConfig effective_head(const TrainConfig& cfg) {
    HeadConfig h = cfg.head;
    h.d_model = cfg.plm.d_model;
    if (h.h == 0) h.h = cfg.plm.d_model;
    return h;
}

std::vector<int> answer_token_ids(const MrcExample& ex, const Vocab& vocab) {
    const std::string text = target_answer_text(ex);
    std::vector<int> ids;
    if (!text.empty())
        for (const auto& tok : word_tokenize(text).tokens) ids.push_back(vocab.id(tok));
    return ids;
}

// Gold IO tags for tagging supervision. Alternative golds on single-span
// records supervise with the first alternative only.
TagSequence supervision_tags(const MrcExample& ex, const EncodedPrompt& ep) {
    std::vector<CharSpan> spans;
    if (ex.multi_span) spans = ex.answers;
    else if (!ex.answers.empty()) spans = {ex.answers.front()};
    return spans_to_tags(ep.context_offsets, spans, ex.context.size());
}

struct ExampleLoss {
    Var lml{-1};
    Var qase{-1};
    Var total{-1};
    Var probs{-1};
    TagSequence tags;
};

}  // namespace

Model init_model(const std::vector<MrcExample>& corpus, TrainConfig cfg) {
    cfg.validate();
    // Vocabulary from everything the model will ever see or emit.
    std::vector<std::string> words;
    for (const auto& ex : corpus) {
        PromptTemplate tpl{cfg.ordering, ex.multi_span};
        for (const auto& tok : word_tokenize(build_prompt(tpl, ex.context, ex.question)).tokens)
            words.push_back(tok);
        const std::string target = target_answer_text(ex);
        if (!target.empty())
            for (const auto& tok : word_tokenize(target).tokens) words.push_back(tok);
    }
    Model model;
    model.vocab = Vocab::build(words);
    cfg.plm.vocab_size = model.vocab.size();
    model.cfg = cfg;

    std::mt19937_64 rng(cfg.seed);
    init_plm_params(cfg.plm, rng, model.params);
    init_head_params(cfg.head_kind, effective_head(cfg), rng, model.params);
    if (cfg.lora.enabled) apply_lora(model.params, cfg.plm, cfg.lora, rng);
    return model;
}

namespace {

ExampleLoss run_example(Tape& tape, const BoundParams& bp, const Model& model,
                        const MrcExample& ex, std::mt19937_64* dropout_rng) {
    const TrainConfig& cfg = model.cfg;
    PromptTemplate tpl{cfg.ordering, ex.multi_span};
    const EncodedPrompt ep = encode_prompt(tpl, ex.context, ex.question, model.vocab, cfg.plm);

    PlmForward fwd;
    fwd.cfg = &cfg.plm;
    fwd.lora = &cfg.lora;
    fwd.dropout_rng = dropout_rng;

    Var enc = plm_encode(tape, bp, fwd, ep.ids);

    std::vector<int> target = answer_token_ids(ex, model.vocab);
    std::vector<int> prefix = {Vocab::BOS};
    prefix.insert(prefix.end(), target.begin(), target.end());
    std::vector<int> labels = target;
    labels.push_back(Vocab::EOS);
    Var logits = plm_decode(tape, bp, fwd, enc, ep.ids, prefix);
    ExampleLoss out;
    out.lml = tape.cross_entropy(tape.softmax_rows(logits), labels);

    if (cfg.head_kind == HeadKind::None) {
        out.total = out.lml;
        return out;
    }
    const HeadConfig hc = effective_head(cfg);
    out.probs = cfg.head_kind == HeadKind::Qase
                    ? qase_forward(tape, bp, hc, enc, ep.context_range, ep.question_range)
                    : baseline_forward(tape, bp, hc, enc, ep.context_range, ep.question_range);
    out.tags = supervision_tags(ex, ep);
    out.qase = tagging_loss(tape, out.probs, out.tags);
    out.total = tape.add(out.lml, tape.scale(out.qase, cfg.beta));
    return out;
}

struct AdamState {
    std::map<std::string, std::pair<Tensor, Tensor>> moments;  // first, second
    std::size_t step = 0;
};

void adam_update(ParamStore& store, const std::map<std::string, Tensor>& grads, AdamState& state,
                 double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++state.step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (const auto& [name, g] : grads) {
        Tensor& p = store.at(name);
        auto [it, fresh] = state.moments.try_emplace(
            name, std::make_pair(Tensor::zeros(p.shape), Tensor::zeros(p.shape)));
        Tensor& m = it->second.first;
        Tensor& v = it->second.second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
            p.data[i] -= lr * (m.data[i] / c1) / (std::sqrt(v.data[i] / c2) + eps);
        }
    }
}

}  // namespace

std::vector<EpochLog> train(Model& model, const std::vector<MrcExample>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
    const TrainConfig& cfg = model.cfg;
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0x7f4a7c159e3779b9ull);

    AdamState adam;
    std::vector<EpochLog> log;
    double prev_total = 0.0;
    std::size_t stalled = 0;
    std::size_t global_step = 0;

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_lml = 0.0, epoch_qase = 0.0, epoch_total = 0.0;
        std::size_t tag_hits = 0, tag_count = 0;

        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t bend = std::min(order.size(), b + cfg.batch_size);
            std::map<std::string, Tensor> grads;
            for (std::size_t k = b; k < bend; ++k) {
                const MrcExample& ex = corpus[order[k]];
                Tape tape;
                BoundParams bp = bind(tape, model.params);
                std::mt19937_64* drng =
                    (cfg.lora.enabled && cfg.lora.dropout > 0.0) ? &dropout_rng : nullptr;
                ExampleLoss el = run_example(tape, bp, model, ex, drng);
                const double total = tape.value(el.total).item();
                if (!std::isfinite(total))
                    throw std::runtime_error("train: non-finite loss at step " +
                                             std::to_string(global_step));
                ++global_step;
                epoch_lml += tape.value(el.lml).item();
                if (el.qase.id >= 0) epoch_qase += tape.value(el.qase).item();
                epoch_total += total;
                if (el.probs.id >= 0) {
                    const Tensor& p = tape.value(el.probs);
                    for (std::size_t i = 0; i < el.tags.size(); ++i) {
                        const int pred = p.at(i, 1) > p.at(i, 0) ? 1 : 0;
                        tag_hits += (pred == static_cast<int>(el.tags[i]));
                        ++tag_count;
                    }
                }
                tape.backward(el.total);
                for (const auto& [name, bv] : bp.vars) {
                    if (!model.params.params.at(name).trainable) continue;
                    const Tensor& g = tape.grad(bv);
                    auto [it, fresh] = grads.try_emplace(name, Tensor::zeros(g.shape));
                    for (std::size_t i = 0; i < g.numel(); ++i) it->second.data[i] += g.data[i];
                }
            }
            const double inv = 1.0 / static_cast<double>(bend - b);
            for (auto& [name, g] : grads)
                for (double& v : g.data) v *= inv;
            adam_update(model.params, grads, adam, cfg.learning_rate);
        }

        EpochLog e;
        e.epoch = epoch;
        const double n = static_cast<double>(corpus.size());
        e.loss.lml = epoch_lml / n;
        e.loss.qase = epoch_qase / n;
        e.loss.total = epoch_total / n;
        e.tag_accuracy = tag_count ? static_cast<double>(tag_hits) / tag_count : 0.0;
        log.push_back(e);

        // Convergence: total-loss improvement < 1e-4 for 3 consecutive epochs.
        if (epoch > 0 && prev_total - e.loss.total < 1e-4) {
            if (++stalled >= 3) break;
        } else {
            stalled = 0;
        }
        prev_total = e.loss.total;
    }
    return log;
}

std::vector<Prediction> infer(const Model& model, const std::vector<MrcExample>& examples) {
    const TrainConfig& cfg = model.cfg;
    std::vector<Prediction> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        PromptTemplate tpl{cfg.ordering, ex.multi_span};
        const EncodedPrompt ep = encode_prompt(tpl, ex.context, ex.question, model.vocab, cfg.plm);
        const std::vector<int> ids =
            greedy_decode(model.params, cfg.plm, cfg.lora, ep.ids, cfg.max_answer_len);
        std::string text;
        for (int id : ids) {
            if (!text.empty()) text.push_back(' ');
            text += model.vocab.token(id);
        }
        Prediction p;
        p.id = ex.id;
        p.answer_texts = ex.multi_span ? parse_span_list(text) : std::vector<std::string>{text};
        out.push_back(std::move(p));
    }
    return out;
}

ParamCounts report_params(const TrainConfig& cfg_in) {
    TrainConfig cfg = cfg_in;
    if (cfg.plm.vocab_size == 0) cfg.plm.vocab_size = 64;
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    ParamStore generator;
    init_plm_params(cfg.plm, rng, generator);
    if (cfg.lora.enabled) apply_lora(generator, cfg.plm, cfg.lora, rng);
    ParamCounts counts;
    counts.base = generator.trainable_count();
    const HeadConfig hc = effective_head(cfg);
    counts.delta = cfg.head_kind == HeadKind::None
                       ? 0
                       : count_params(cfg.head_kind, hc.d_model, hc.h, hc.n_heads);
    counts.with_head = counts.base + counts.delta;
    return counts;
}

namespace {

SweepRow run_one_setting(const std::vector<MrcExample>& train_set,
                         const std::vector<MrcExample>& dev_set, TrainConfig cfg,
                         DatasetKind kind) {
    Model model = init_model(train_set, cfg);
    train(model, train_set);
    SweepRow row;
    row.beta = cfg.beta;
    row.head = head_kind_name(cfg.head_kind);
    row.report = evaluate(infer(model, dev_set), dev_set, kind);
    return row;
}

}  // namespace

std::vector<SweepRow> sweep_beta(const std::vector<MrcExample>& train_set,
                                 const std::vector<MrcExample>& dev_set, TrainConfig cfg,
                                 const std::vector<double>& grid, DatasetKind kind) {
    if (grid.empty()) throw std::invalid_argument("sweep_beta: empty grid");
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    std::vector<SweepRow> rows;
    for (double beta : sorted) {
        TrainConfig c = cfg;
        c.beta = beta;
        try {
            rows.push_back(run_one_setting(train_set, dev_set, c, kind));
        } catch (const std::exception& e) {
            throw std::runtime_error("sweep: beta=" + std::to_string(beta) + ": " + e.what());
        }
    }
    return rows;
}

std::vector<SweepRow> sweep_heads(const std::vector<MrcExample>& train_set,
                                  const std::vector<MrcExample>& dev_set, TrainConfig cfg,
                                  const std::vector<HeadKind>& heads, DatasetKind kind) {
    if (heads.empty()) throw std::invalid_argument("sweep_heads: no head kinds");
    std::vector<SweepRow> rows;
    for (HeadKind h : heads) {
        TrainConfig c = cfg;
        c.head_kind = h;
        rows.push_back(run_one_setting(train_set, dev_set, c, kind));
    }
    return rows;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "beta\thead\tem\tf1\tem_f1\toverlap_f1\tn\n";
    char buf[64];
    auto cell = [&](const std::optional<double>& v) {
        if (!v) return std::string("-");
        std::snprintf(buf, sizeof(buf), "%.6f", *v);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.6f", r.beta);
        os << buf << "\t" << r.head << "\t" << cell(r.report.em) << "\t" << cell(r.report.f1)
           << "\t" << cell(r.report.em_f1) << "\t" << cell(r.report.overlap_f1) << "\t"
           << r.report.n_examples << "\n";
    }
    return os.str();
}

std::string format_epoch_log(const std::vector<EpochLog>& log) {
    std::ostringstream os;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return std::string(buf);
    };
    for (const auto& e : log) {
        os << "{\"epoch\": " << e.epoch << ", \"lml\": " << num(e.loss.lml)
           << ", \"qase\": " << num(e.loss.qase) << ", \"total\": " << num(e.loss.total)
           << ", \"tag_accuracy\": " << num(e.tag_accuracy) << "}\n";
    }
    return os.str();
}

namespace {

constexpr char kCkptMagic[8] = {'Q', 'A', 'S', 'E', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
    nlohmann::json manifest;
    manifest["config"] = format_config(model.cfg);
    manifest["vocab"] = model.vocab.tokens;
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, p] : model.params.params) {
        tensors.push_back({{"name", name},
                           {"shape", p.value.shape},
                           {"dtype", "f32"},
                           {"offset", offset}});
        offset += p.value.numel() * sizeof(float);
    }
    manifest["tensors"] = std::move(tensors);
    const std::string header = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out.write(kCkptMagic, sizeof(kCkptMagic));
    const std::uint64_t hlen = header.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, p] : model.params.params) {
        for (double v : p.value.data) {
            const float f = static_cast<float>(v);
            out.write(reinterpret_cast<const char*>(&f), sizeof(f));
        }
    }
}

Model load_checkpoint(const std::string& path, bool load_head) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
        throw std::runtime_error(path + ": not a checkpoint file");
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string header(hlen, '\0');
    in.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error(path + ": truncated header");
    const auto manifest = nlohmann::json::parse(header);

    Model model;
    {
        std::istringstream cs(manifest.at("config").get<std::string>());
        std::string line;
        while (std::getline(cs, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            apply_config_kv(model.cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }
    model.vocab.tokens = manifest.at("vocab").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < model.vocab.tokens.size(); ++i)
        model.vocab.ids[model.vocab.tokens[i]] = static_cast<int>(i);
    if (model.cfg.plm.vocab_size != model.vocab.size())
        throw std::runtime_error(path + ": vocab size disagrees with config");

    // Expected parameter skeleton; loaded tensors must match its shapes.
    std::mt19937_64 rng(model.cfg.seed);
    init_plm_params(model.cfg.plm, rng, model.params);
    if (load_head)
        init_head_params(model.cfg.head_kind, effective_head(model.cfg), rng, model.params);
    if (model.cfg.lora.enabled) apply_lora(model.params, model.cfg.plm, model.cfg.lora, rng);

    const std::streampos payload_start = in.tellg();
    std::size_t loaded = 0;
    for (const auto& t : manifest.at("tensors")) {
        const std::string name = t.at("name").get<std::string>();
        if (!load_head && name.rfind("head.", 0) == 0) continue;
        if (!model.params.has(name))
            throw std::runtime_error(path + ": unexpected tensor " + name);
        Tensor& dst = model.params.at(name);
        const auto shape = t.at("shape").get<std::vector<std::size_t>>();
        if (shape != dst.shape)
            throw std::runtime_error(path + ": shape mismatch for " + name);
        in.seekg(payload_start + static_cast<std::streamoff>(t.at("offset").get<std::size_t>()));
        for (double& v : dst.data) {
            float f = 0.0f;
            in.read(reinterpret_cast<char*>(&f), sizeof(f));
            v = static_cast<double>(f);
        }
        if (!in) throw std::runtime_error(path + ": truncated payload at " + name);
        ++loaded;
    }
    const std::size_t expected = model.params.params.size();
    if (loaded != expected)
        throw std::runtime_error(path + ": checkpoint is missing tensors (" +
                                 std::to_string(loaded) + "/" + std::to_string(expected) + ")");
    if (!load_head) model.cfg.head_kind = HeadKind::None;
    return model;
}

}  // namespace qase
