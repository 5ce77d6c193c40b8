#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "qase/autodiff.hpp"
#include "qase/params.hpp"
#include "qase/span.hpp"

namespace qase {

// Token vocabulary with fixed reserved ids.
struct Vocab {
    static constexpr int PAD = 0, BOS = 1, EOS = 2, SEP = 3, UNK = 4;

    std::vector<std::string> tokens;  // id -> token, reserved ids included
    std::map<std::string, int> ids;

    static Vocab build(const std::vector<std::string>& words);
    int id(const std::string& word) const;  // UNK for unknown words
    const std::string& token(int id) const { return tokens.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return tokens.size(); }
};

struct PlmConfig {
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t vocab_size = 0;
    std::size_t max_seq_len = 256;

    void validate() const;
};

struct LoraConfig {
    std::size_t rank = 8;
    double alpha = 32.0;
    double dropout = 0.05;
    bool enabled = false;

    double scale() const { return alpha / static_cast<double>(rank); }
};

enum class PromptOrdering { ContextFirst, QuestionFirst };

struct PromptTemplate {
    PromptOrdering ordering = PromptOrdering::ContextFirst;
    bool multi_span = false;
};

extern const char* const kInstructionText;
extern const char* const kMultiSpanFormatText;

// Exact template instantiation; question-first inserts <SEP> between the
// question and the context.
std::string build_prompt(const PromptTemplate& tpl, const std::string& context,
                         const std::string& question);

// Whitespace-and-punctuation word split with character offsets.
struct TokenizedText {
    std::vector<std::string> tokens;
    TokenOffsets offsets;
};
TokenizedText word_tokenize(const std::string& text);

struct TokenRange {
    std::size_t begin = 0, end = 0;  // token index range [begin, end)
    std::size_t size() const { return end - begin; }
};

struct EncodedPrompt {
    std::vector<int> ids;
    TokenRange context_range;
    TokenRange question_range;
    TokenOffsets context_offsets;  // char offsets into the raw context
};

// Tokenizes a (template, context, question) triple into model input;
// throws when the sequence would exceed cfg.max_seq_len.
EncodedPrompt encode_prompt(const PromptTemplate& tpl, const std::string& context,
                            const std::string& question, const Vocab& vocab,
                            const PlmConfig& cfg);

// Parameter construction. Names are prefixed "plm."; LoRA adapter tensors
// get ".lora.a" / ".lora.b" suffixes on the adapted projection.
void init_plm_params(const PlmConfig& cfg, std::mt19937_64& rng, ParamStore& store);
void apply_lora(ParamStore& store, const PlmConfig& cfg, const LoraConfig& lora,
                std::mt19937_64& rng);
std::vector<std::string> lora_adapted_matrices(const ParamStore& store);

// Forward passes. `dropout_rng` enables LoRA adapter dropout (training
// mode); pass nullptr for inference.
struct PlmForward {
    const PlmConfig* cfg = nullptr;
    const LoraConfig* lora = nullptr;
    std::mt19937_64* dropout_rng = nullptr;
};

// Encoder stack over token ids; PAD positions are masked from attention.
Var plm_encode(Tape& tape, const BoundParams& bp, const PlmForward& fwd,
               const std::vector<int>& ids);

// Causal decoder with cross-attention; returns logits, one row per prefix
// position. prefix must start with BOS.
Var plm_decode(Tape& tape, const BoundParams& bp, const PlmForward& fwd, Var encoder_out,
               const std::vector<int>& encoder_ids, const std::vector<int>& prefix);

// Greedy rollout to EOS or max_len tokens. Returns generated ids (no BOS/EOS).
std::vector<int> greedy_decode(const ParamStore& store, const PlmConfig& cfg,
                               const LoraConfig& lora, const std::vector<int>& prompt_ids,
                               std::size_t max_len);

}  // namespace qase
