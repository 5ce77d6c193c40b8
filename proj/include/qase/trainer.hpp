#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qase/data.hpp"
#include "qase/head.hpp"
#include "qase/metrics.hpp"
#include "qase/params.hpp"
#include "qase/plm.hpp"

namespace qase {

struct TrainConfig {
    double beta = 1.0;
    double learning_rate = 1e-4;
    std::size_t epochs = 3;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    HeadKind head_kind = HeadKind::Qase;
    PromptOrdering ordering = PromptOrdering::ContextFirst;
    LoraConfig lora;
    PlmConfig plm;
    HeadConfig head;               // head.h == 0 means "use d_model"
    std::size_t max_answer_len = 24;

    void validate() const;
};

TrainConfig parse_config_file(const std::string& path);
// Applies one "key = value" assignment (the config file grammar).
void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value);
std::string format_config(const TrainConfig& cfg);

struct LossBreakdown {
    double lml = 0.0;
    double qase = 0.0;
    double total = 0.0;
};

// total = lml + beta * qase; rejects non-finite inputs.
LossBreakdown combined_loss(double lml, double qase, double beta);

struct EpochLog {
    std::size_t epoch = 0;
    LossBreakdown loss;
    double tag_accuracy = 0.0;
};

struct Model {
    TrainConfig cfg;
    Vocab vocab;
    ParamStore params;
};

// Builds the vocabulary from the corpus and initializes all parameters
// from cfg.seed.
Model init_model(const std::vector<MrcExample>& corpus, TrainConfig cfg);

// Multi-task loop: Adam over L_LML + beta * L_QASE with per-epoch seeded
// shuffling and early stop on stalled total loss.
std::vector<EpochLog> train(Model& model, const std::vector<MrcExample>& corpus);

// Greedy generation; only generator tensors participate.
std::vector<Prediction> infer(const Model& model, const std::vector<MrcExample>& examples);

struct ParamCounts {
    std::size_t base = 0;       // trainable generator parameters
    std::size_t with_head = 0;
    std::size_t delta = 0;
};
ParamCounts report_params(const TrainConfig& cfg);

struct SweepRow {
    double beta = 0.0;
    std::string head;
    MetricsReport report;
};

// One full train+evaluate per beta value, rows sorted ascending by beta.
std::vector<SweepRow> sweep_beta(const std::vector<MrcExample>& train_set,
                                 const std::vector<MrcExample>& dev_set, TrainConfig cfg,
                                 const std::vector<double>& grid, DatasetKind kind);

// Head-ablation variant of the sweep: one run per head kind.
std::vector<SweepRow> sweep_heads(const std::vector<MrcExample>& train_set,
                                  const std::vector<MrcExample>& dev_set, TrainConfig cfg,
                                  const std::vector<HeadKind>& heads, DatasetKind kind);

std::string format_sweep_table(const std::vector<SweepRow>& rows);

std::string format_epoch_log(const std::vector<EpochLog>& log);

// Gold answer rendered the way the generator is trained to emit it:
// the bracketed list format for multi-span records, plain text otherwise.
std::string target_answer_text(const MrcExample& ex);

// Checkpoint: magic, JSON manifest (config, vocab, tensor tale), then a
// flat little-endian float32 payload.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path, bool load_head);

}  // namespace qase
