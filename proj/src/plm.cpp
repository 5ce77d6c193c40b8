#include "qase/plm.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <stdexcept>

namespace qase {

const char* const kInstructionText =
    "Using the provided context, answer the question with exact phrases and avoid explanations.";
const char* const kMultiSpanFormatText =
    "Format the response as follows: [\"answer1\", \"answer2\", ...].";

Vocab Vocab::build(const std::vector<std::string>& words) {
    Vocab v;
    v.tokens = {"<pad>", "<bos>", "<eos>", "<sep>", "<unk>"};
    for (std::size_t i = 0; i < v.tokens.size(); ++i) v.ids[v.tokens[i]] = static_cast<int>(i);
    std::set<std::string> uniq(words.begin(), words.end());
    for (const auto& w : uniq) {
        if (v.ids.count(w)) continue;
        v.ids[w] = static_cast<int>(v.tokens.size());
        v.tokens.push_back(w);
    }
    return v;
}

int Vocab::id(const std::string& word) const {
    auto it = ids.find(word);
    return it == ids.end() ? UNK : it->second;
}

void PlmConfig::validate() const {
    if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0)
        throw std::invalid_argument("plm config: zero-sized dimension");
    if (d_model % n_heads != 0)
        throw std::invalid_argument("plm config: d_model not divisible by n_heads");
}

std::string build_prompt(const PromptTemplate& tpl, const std::string& context,
                         const std::string& question) {
    if (context.empty()) throw std::invalid_argument("build_prompt: empty context");
    if (question.empty()) throw std::invalid_argument("build_prompt: empty question");
    std::string instr = std::string("Instruction: ") + kInstructionText;
    if (tpl.multi_span) instr += std::string(" ") + kMultiSpanFormatText;
    if (tpl.ordering == PromptOrdering::ContextFirst) {
        return instr + "\n---\nContext: " + context + "\n---\nQuestion: " + question +
               "\n---\nAnswer:";
    }
    return instr + "\n---\nQuestion: " + question + "\n<sep>\nContext: " + context +
           "\n---\nAnswer:";
}

TokenizedText word_tokenize(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("word_tokenize: empty input");
    TokenizedText out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    auto is_word = [](unsigned char c) { return std::isalnum(c) || c >= 128; };
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        if (is_word(c)) {
            while (j < n && is_word(static_cast<unsigned char>(text[j]))) ++j;
        }
        out.tokens.push_back(text.substr(i, j - i));
        out.offsets.emplace_back(i, j);
        i = j;
    }
    return out;
}

EncodedPrompt encode_prompt(const PromptTemplate& tpl, const std::string& context,
                            const std::string& question, const Vocab& vocab,
                            const PlmConfig& cfg) {
    if (context.empty()) throw std::invalid_argument("encode_prompt: empty context");
    if (question.empty()) throw std::invalid_argument("encode_prompt: empty question");

    std::string instr = std::string("Instruction: ") + kInstructionText;
    if (tpl.multi_span) instr += std::string(" ") + kMultiSpanFormatText;

    EncodedPrompt ep;
    auto push_text = [&](const std::string& text) {
        for (const auto& tok : word_tokenize(text).tokens) ep.ids.push_back(vocab.id(tok));
    };
    const TokenizedText ctx_tok = word_tokenize(context);
    auto push_context = [&] {
        ep.context_range.begin = ep.ids.size();
        for (std::size_t k = 0; k < ctx_tok.tokens.size(); ++k) {
            ep.ids.push_back(vocab.id(ctx_tok.tokens[k]));
            ep.context_offsets.push_back(ctx_tok.offsets[k]);
        }
        ep.context_range.end = ep.ids.size();
    };
    auto push_question = [&] {
        ep.question_range.begin = ep.ids.size();
        push_text(question);
        ep.question_range.end = ep.ids.size();
    };

    push_text(instr);
    push_text("---");
    if (tpl.ordering == PromptOrdering::ContextFirst) {
        push_text("Context:");
        push_context();
        push_text("---");
        push_text("Question:");
        push_question();
    } else {
        push_text("Question:");
        push_question();
        ep.ids.push_back(Vocab::SEP);
        push_text("Context:");
        push_context();
    }
    push_text("---");
    push_text("Answer:");

    if (ep.ids.size() > cfg.max_seq_len)
        throw std::runtime_error("encode_prompt: sequence length " +
                                 std::to_string(ep.ids.size()) + " exceeds max_seq_len " +
                                 std::to_string(cfg.max_seq_len));
    return ep;
}

namespace {

void init_attn(const std::string& prefix, std::size_t d, std::mt19937_64& rng,
               ParamStore& store) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
        store.add(prefix + "." + w, init_uniform({d, d}, d, rng));
        store.add(prefix + ".b" + std::string(w).substr(1), Tensor::zeros({1, d}));
    }
}

void init_ln(const std::string& prefix, std::size_t d, ParamStore& store) {
    Tensor g = Tensor::zeros({1, d});
    for (double& v : g.data) v = 1.0;
    store.add(prefix + ".g", std::move(g));
    store.add(prefix + ".b", Tensor::zeros({1, d}));
}

void init_ffn(const std::string& prefix, std::size_t d, std::size_t dff, std::mt19937_64& rng,
              ParamStore& store) {
    store.add(prefix + ".w1", init_uniform({d, dff}, d, rng));
    store.add(prefix + ".b1", Tensor::zeros({1, dff}));
    store.add(prefix + ".w2", init_uniform({dff, d}, dff, rng));
    store.add(prefix + ".b2", Tensor::zeros({1, d}));
}

}  // namespace

void init_plm_params(const PlmConfig& cfg, std::mt19937_64& rng, ParamStore& store) {
    cfg.validate();
    if (cfg.vocab_size == 0) throw std::invalid_argument("init_plm_params: vocab_size unset");
    const std::size_t d = cfg.d_model;
    store.add("plm.embed", init_uniform({cfg.vocab_size, d}, d, rng));
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string enc = "plm.enc." + std::to_string(l);
        init_attn(enc + ".attn", d, rng, store);
        init_ln(enc + ".ln1", d, store);
        init_ffn(enc + ".ffn", d, cfg.d_ff, rng, store);
        init_ln(enc + ".ln2", d, store);
        const std::string dec = "plm.dec." + std::to_string(l);
        init_attn(dec + ".self", d, rng, store);
        init_ln(dec + ".ln1", d, store);
        init_attn(dec + ".cross", d, rng, store);
        init_ln(dec + ".ln2", d, store);
        init_ffn(dec + ".ffn", d, cfg.d_ff, rng, store);
        init_ln(dec + ".ln3", d, store);
    }
    store.add("plm.out.w", init_uniform({d, cfg.vocab_size}, d, rng));
    store.add("plm.out.b", Tensor::zeros({1, cfg.vocab_size}));
}

namespace {

bool is_attn_weight(const std::string& name) {
    if (name.rfind("plm.", 0) != 0) return false;
    for (const char* suffix : {".wq", ".wk", ".wv", ".wo"}) {
        const std::string s = suffix;
        if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0)
            return true;
    }
    return false;
}

}  // namespace

void apply_lora(ParamStore& store, const PlmConfig& cfg, const LoraConfig& lora,
                std::mt19937_64& rng) {
    if (!lora.enabled) throw std::invalid_argument("apply_lora: config not enabled");
    if (lora.rank >= cfg.d_model)
        throw std::invalid_argument("apply_lora: rank must be < d_model");
    if (lora.dropout < 0.0 || lora.dropout >= 1.0)
        throw std::invalid_argument("apply_lora: dropout outside [0,1)");
    std::vector<std::string> adapted;
    for (auto& [name, p] : store.params) {
        if (name.rfind("plm.", 0) == 0) p.trainable = false;  // freeze the base model
        if (is_attn_weight(name)) adapted.push_back(name);
    }
    const std::size_t d = cfg.d_model, r = lora.rank;
    for (const auto& name : adapted) {
        store.add(name + ".lora.a", init_uniform({r, d}, d, rng));
        store.add(name + ".lora.b", Tensor::zeros({d, r}));  // zero so the initial delta is 0
    }
}

std::vector<std::string> lora_adapted_matrices(const ParamStore& store) {
    std::vector<std::string> out;
    for (const auto& [name, p] : store.params)
        if (is_attn_weight(name) && store.has(name + ".lora.a")) out.push_back(name);
    return out;
}

namespace {

Tensor sinusoidal_positions(std::size_t t, std::size_t d) {
    Tensor pe = Tensor::zeros({t, d});
    for (std::size_t pos = 0; pos < t; ++pos) {
        for (std::size_t i = 0; i < d; i += 2) {
            const double angle =
                static_cast<double>(pos) /
                std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
            pe.at(pos, i) = std::sin(angle);
            if (i + 1 < d) pe.at(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

constexpr double kMaskScore = -1e30;

// Linear projection through an attention weight, with the low-rank adapter
// path when one is attached.
Var projected(Tape& tape, const BoundParams& bp, const PlmForward& fwd, const std::string& wname,
              Var x) {
    Var out = tape.matmul(x, bp[wname]);
    if (bp.vars.count(wname + ".lora.a")) {
        Var xin = x;
        if (fwd.dropout_rng && fwd.lora && fwd.lora->dropout > 0.0) {
            const Tensor& xv = tape.value(x);
            const double keep = 1.0 - fwd.lora->dropout;
            Tensor mask = Tensor::zeros(xv.shape);
            std::uniform_real_distribution<double> u(0.0, 1.0);
            for (double& m : mask.data) m = (u(*fwd.dropout_rng) < keep) ? 1.0 / keep : 0.0;
            xin = tape.mul(x, tape.constant(std::move(mask)));
        }
        Var delta = tape.matmul(tape.matmul(xin, bp[wname + ".lora.b"]), bp[wname + ".lora.a"]);
        out = tape.add(out, tape.scale(delta, fwd.lora ? fwd.lora->scale() : 1.0));
    }
    return out;
}

// Multi-head scaled dot-product attention. mask, when present, is an
// additive (Tq x Tk) score offset.
Var mha_block(Tape& tape, const BoundParams& bp, const PlmForward& fwd, const std::string& prefix,
              std::size_t n_heads, Var q_in, Var kv_in, const Tensor* mask) {
    const std::size_t h = tape.value(q_in).cols();
    const std::size_t dh = h / n_heads;
    Var q = tape.add_row(projected(tape, bp, fwd, prefix + ".wq", q_in), bp[prefix + ".bq"]);
    Var k = tape.add_row(projected(tape, bp, fwd, prefix + ".wk", kv_in), bp[prefix + ".bk"]);
    Var v = tape.add_row(projected(tape, bp, fwd, prefix + ".wv", kv_in), bp[prefix + ".bv"]);
    Var mask_var{-1};
    if (mask) mask_var = tape.constant(*mask);
    std::vector<Var> heads;
    for (std::size_t i = 0; i < n_heads; ++i) {
        Var qh = tape.slice_cols(q, i * dh, (i + 1) * dh);
        Var kh = tape.slice_cols(k, i * dh, (i + 1) * dh);
        Var vh = tape.slice_cols(v, i * dh, (i + 1) * dh);
        Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)),
                                1.0 / std::sqrt(static_cast<double>(dh)));
        if (mask) scores = tape.add(scores, mask_var);
        heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    Var cat = tape.concat_cols(heads);
    return tape.add_row(projected(tape, bp, fwd, prefix + ".wo", cat), bp[prefix + ".bo"]);
}

Var ffn_block(Tape& tape, const BoundParams& bp, const std::string& prefix, Var x) {
    Var hmid = tape.relu(tape.add_row(tape.matmul(x, bp[prefix + ".w1"]), bp[prefix + ".b1"]));
    return tape.add_row(tape.matmul(hmid, bp[prefix + ".w2"]), bp[prefix + ".b2"]);
}

Tensor pad_mask(const std::vector<int>& key_ids, std::size_t t_q) {
    Tensor mask = Tensor::zeros({t_q, key_ids.size()});
    for (std::size_t j = 0; j < key_ids.size(); ++j) {
        if (key_ids[j] != Vocab::PAD) continue;
        for (std::size_t i = 0; i < t_q; ++i) mask.at(i, j) = kMaskScore;
    }
    return mask;
}

}  // namespace

Var plm_encode(Tape& tape, const BoundParams& bp, const PlmForward& fwd,
               const std::vector<int>& ids) {
    const PlmConfig& cfg = *fwd.cfg;
    if (ids.empty()) throw std::invalid_argument("plm_encode: empty input");
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
            throw std::invalid_argument("plm_encode: token id out of vocab");
    Var x = tape.gather_rows(bp["plm.embed"], ids);
    x = tape.add(x, tape.constant(sinusoidal_positions(ids.size(), cfg.d_model)));
    const Tensor mask = pad_mask(ids, ids.size());
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string enc = "plm.enc." + std::to_string(l);
        Var a = mha_block(tape, bp, fwd, enc + ".attn", cfg.n_heads, x, x, &mask);
        x = tape.layer_norm(tape.add(x, a), bp[enc + ".ln1.g"], bp[enc + ".ln1.b"]);
        Var f = ffn_block(tape, bp, enc + ".ffn", x);
        x = tape.layer_norm(tape.add(x, f), bp[enc + ".ln2.g"], bp[enc + ".ln2.b"]);
    }
    return x;
}

Var plm_decode(Tape& tape, const BoundParams& bp, const PlmForward& fwd, Var encoder_out,
               const std::vector<int>& encoder_ids, const std::vector<int>& prefix) {
    const PlmConfig& cfg = *fwd.cfg;
    if (prefix.empty() || prefix[0] != Vocab::BOS)
        throw std::invalid_argument("plm_decode: prefix must start with BOS");
    if (prefix.size() > cfg.max_seq_len)
        throw std::invalid_argument("plm_decode: prefix exceeds max_seq_len");
    const std::size_t t = prefix.size();
    Var x = tape.gather_rows(bp["plm.embed"], prefix);
    x = tape.add(x, tape.constant(sinusoidal_positions(t, cfg.d_model)));
    Tensor causal = Tensor::zeros({t, t});
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = i + 1; j < t; ++j) causal.at(i, j) = kMaskScore;
    const Tensor cross_mask = pad_mask(encoder_ids, t);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string dec = "plm.dec." + std::to_string(l);
        Var a = mha_block(tape, bp, fwd, dec + ".self", cfg.n_heads, x, x, &causal);
        x = tape.layer_norm(tape.add(x, a), bp[dec + ".ln1.g"], bp[dec + ".ln1.b"]);
        Var c = mha_block(tape, bp, fwd, dec + ".cross", cfg.n_heads, x, encoder_out, &cross_mask);
        x = tape.layer_norm(tape.add(x, c), bp[dec + ".ln2.g"], bp[dec + ".ln2.b"]);
        Var f = ffn_block(tape, bp, dec + ".ffn", x);
        x = tape.layer_norm(tape.add(x, f), bp[dec + ".ln3.g"], bp[dec + ".ln3.b"]);
    }
    return tape.add_row(tape.matmul(x, bp["plm.out.w"]), bp["plm.out.b"]);
}

std::vector<int> greedy_decode(const ParamStore& store, const PlmConfig& cfg,
                               const LoraConfig& lora, const std::vector<int>& prompt_ids,
                               std::size_t max_len) {
    Tape tape;
    BoundParams bp = bind(tape, store);
    PlmForward fwd;
    fwd.cfg = &cfg;
    fwd.lora = &lora;
    fwd.dropout_rng = nullptr;
    Var enc = plm_encode(tape, bp, fwd, prompt_ids);
    std::vector<int> prefix = {Vocab::BOS};
    std::vector<int> out;
    for (std::size_t step = 0; step < max_len; ++step) {
        Var logits = plm_decode(tape, bp, fwd, enc, prompt_ids, prefix);
        const Tensor& L = tape.value(logits);
        const std::size_t last = L.rows() - 1;
        int best = 0;
        double best_v = L.at(last, 0);
        for (std::size_t j = 1; j < L.cols(); ++j) {
            if (L.at(last, j) > best_v) {
                best_v = L.at(last, j);
                best = static_cast<int>(j);
            }
        }
        if (best == Vocab::EOS) break;
        out.push_back(best);
        prefix.push_back(best);
    }
    return out;
}

}  // namespace qase
