// Command-line front end: data generation, training, evaluation, inference,
// tagging, parameter accounting, and beta/head sweeps.
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qase/data.hpp"
#include "qase/head.hpp"
#include "qase/metrics.hpp"
#include "qase/span.hpp"
#include "qase/trainer.hpp"

namespace {

using namespace qase;

std::vector<MrcExample> load_data(const std::string& path, const std::string& format) {
    if (format == "jsonl") return read_jsonl(path);
    if (format == "squad") return load_squad(path);
    if (format == "multispan") return load_multispan(path);
    if (format == "quoref") return load_quoref(path);
    throw std::invalid_argument("unknown data format: " + format);
}

DatasetKind kind_for(const std::string& format, const std::string& dataset,
                     const std::vector<MrcExample>& examples) {
    if (!dataset.empty()) return dataset_kind_from_name(dataset);
    if (format == "squad") return DatasetKind::Squad;
    if (format == "multispan") return DatasetKind::MultiSpan;
    if (format == "quoref") return DatasetKind::Quoref;
    for (const auto& ex : examples)
        if (ex.multi_span) return DatasetKind::MultiSpan;
    return DatasetKind::Squad;
}

// Config flags shared by train/params/sweep. Flags override the config file,
// which overrides defaults; overrides are replayed through the same key-value
// grammar the file uses.
struct ConfigOpts {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (key = value lines)");
        auto kv = [this](const std::string& key) {
            return [this, key](const std::string& v) { overrides.emplace_back(key, v); };
        };
        cmd->add_option_function<std::string>("--seed", kv("seed"), "RNG seed");
        cmd->add_option_function<std::string>("--beta", kv("beta"), "tagging-loss weight");
        cmd->add_option_function<std::string>("--head", kv("head_kind"),
                                              "head kind: qase|baseline|none");
        cmd->add_option_function<std::string>("--ordering", kv("ordering"),
                                              "prompt ordering: context-first|question-first");
        cmd->add_option_function<std::string>("--epochs", kv("epochs"), "training epochs");
        cmd->add_option_function<std::string>("--lr", kv("learning_rate"), "learning rate");
        cmd->add_option_function<std::string>("--batch-size", kv("batch_size"), "batch size");
        cmd->add_option_function<std::string>("--lora", kv("lora.enabled"),
                                              "enable LoRA adapters (true|false)");
    }

    TrainConfig resolve() const {
        TrainConfig cfg;
        if (!config_path.empty()) cfg = parse_config_file(config_path);
        for (const auto& [k, v] : overrides) apply_config_kv(cfg, k, v);
        cfg.validate();
        return cfg;
    }
};

void write_text(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << text;
}

std::vector<double> parse_beta_grid(const std::string& s) {
    double lo = 0, hi = 0, step = 0;
    char c1 = 0, c2 = 0;
    std::istringstream is(s);
    if (!(is >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0 || hi < lo)
        throw std::invalid_argument("--beta-grid expects lo:hi:step, e.g. 0.5:2:0.1");
    std::vector<double> grid;
    for (int i = 0;; ++i) {
        const double b = lo + step * i;
        if (b > hi + 1e-9) break;
        grid.push_back(b);
    }
    return grid;
}

std::vector<CharSpan> parse_char_spans(const std::vector<std::string>& specs,
                                       const std::string& context) {
    std::vector<CharSpan> spans;
    for (const auto& s : specs) {
        const auto colon = s.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("--spans expects start:end, got " + s);
        CharSpan span;
        span.start = std::stoull(s.substr(0, colon));
        span.end = std::stoull(s.substr(colon + 1));
        if (span.end > context.size() || span.start >= span.end)
            throw std::invalid_argument("span " + s + " out of range for context");
        span.text = context.substr(span.start, span.end - span.start);
        spans.push_back(std::move(span));
    }
    return spans;
}

int run(int argc, char** argv) {
    CLI::App app{"QASE span-extraction trainer"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    CorpusSpec spec;
    std::string gen_out;
    gen->add_option("--out", gen_out, "output JSONL path")->required();
    gen->add_option("--n", spec.n_examples, "number of examples");
    gen->add_option("--multi-frac", spec.multi_span_fraction, "fraction of multi-span examples");
    gen->add_option("--answer-len-min", spec.answer_len_min, "min answer words");
    gen->add_option("--answer-len-max", spec.answer_len_max, "max answer words");
    gen->add_option("--seed", spec.seed, "RNG seed");

    // train
    auto* tr = app.add_subcommand("train", "fine-tune on a corpus");
    ConfigOpts tr_cfg;
    tr_cfg.attach(tr);
    std::string tr_data, tr_format = "jsonl", tr_out, tr_log;
    tr->add_option("--data", tr_data, "training data path")->required();
    tr->add_option("--format", tr_format, "data format: jsonl|squad|multispan|quoref");
    tr->add_option("--out", tr_out, "checkpoint output path")->required();
    tr->add_option("--log", tr_log, "epoch log path (default: stdout)");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_ckpt, ev_data, ev_format = "jsonl", ev_dataset, ev_report, ev_preds;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "evaluation data path")->required();
    ev->add_option("--format", ev_format, "data format: jsonl|squad|multispan|quoref");
    ev->add_option("--dataset", ev_dataset, "metric family: squad|multispan|quoref");
    ev->add_option("--report", ev_report, "report path (default: stdout)");
    ev->add_option("--preds", ev_preds, "also write predictions JSONL here");

    // infer
    auto* in = app.add_subcommand("infer", "generate answers for a dataset");
    std::string in_ckpt, in_data, in_format = "jsonl", in_out;
    in->add_option("--ckpt", in_ckpt, "checkpoint path")->required();
    in->add_option("--data", in_data, "input data path")->required();
    in->add_option("--format", in_format, "data format: jsonl|squad|multispan|quoref");
    in->add_option("--out", in_out, "predictions output path")->required();

    // tag
    auto* tg = app.add_subcommand("tag", "IO-tag a context for given char spans");
    std::string tg_context;
    std::vector<std::string> tg_spans;
    tg->add_option("--context", tg_context, "context text")->required();
    tg->add_option("--spans", tg_spans, "char spans, start:end")->delimiter(',');

    // params
    auto* pa = app.add_subcommand("params", "report trainable parameter counts");
    ConfigOpts pa_cfg;
    pa_cfg.attach(pa);

    // sweep
    auto* sw = app.add_subcommand("sweep", "train/eval over a beta grid or head kinds");
    ConfigOpts sw_cfg;
    sw_cfg.attach(sw);
    std::string sw_data, sw_dev, sw_format = "jsonl", sw_dataset, sw_grid, sw_heads, sw_report;
    sw->add_option("--data", sw_data, "training data path")->required();
    sw->add_option("--dev", sw_dev, "held-out data path")->required();
    sw->add_option("--format", sw_format, "data format: jsonl|squad|multispan|quoref");
    sw->add_option("--dataset", sw_dataset, "metric family: squad|multispan|quoref");
    sw->add_option("--beta-grid", sw_grid, "beta grid lo:hi:step");
    sw->add_option("--heads", sw_heads, "comma-separated head kinds to compare");
    sw->add_option("--report", sw_report, "table output path (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        write_jsonl(gen_out, generate_corpus(spec));
        return 0;
    }
    if (tr->parsed()) {
        const TrainConfig cfg = tr_cfg.resolve();
        const auto corpus = load_data(tr_data, tr_format);
        Model model = init_model(corpus, cfg);
        const auto log = train(model, corpus);
        save_checkpoint(tr_out, model);
        write_text(tr_log, format_epoch_log(log));
        return 0;
    }
    if (ev->parsed()) {
        const Model model = load_checkpoint(ev_ckpt, /*load_head=*/false);
        const auto examples = load_data(ev_data, ev_format);
        const auto preds = infer(model, examples);
        if (!ev_preds.empty()) write_predictions(ev_preds, preds);
        const auto report = evaluate(preds, examples, kind_for(ev_format, ev_dataset, examples));
        write_text(ev_report, format_report(report));
        return 0;
    }
    if (in->parsed()) {
        const Model model = load_checkpoint(in_ckpt, /*load_head=*/false);
        write_predictions(in_out, infer(model, load_data(in_data, in_format)));
        return 0;
    }
    if (tg->parsed()) {
        const TokenizedText toks = word_tokenize(tg_context);
        const TagSequence tags =
            spans_to_tags(toks.offsets, parse_char_spans(tg_spans, tg_context), tg_context.size());
        std::string line;
        for (Tag t : tags) {
            if (!line.empty()) line.push_back(' ');
            line.push_back(t == Tag::I ? 'I' : 'O');
        }
        std::cout << line << "\n";
        return 0;
    }
    if (pa->parsed()) {
        const ParamCounts counts = report_params(pa_cfg.resolve());
        std::cout << "base = " << counts.base << "\n"
                  << "with_head = " << counts.with_head << "\n"
                  << "delta = " << counts.delta << "\n";
        return 0;
    }
    if (sw->parsed()) {
        if (sw_grid.empty() == sw_heads.empty())
            throw std::invalid_argument("sweep: give exactly one of --beta-grid or --heads");
        const TrainConfig cfg = sw_cfg.resolve();
        const auto train_set = load_data(sw_data, sw_format);
        const auto dev_set = load_data(sw_dev, sw_format);
        const DatasetKind kind = kind_for(sw_format, sw_dataset, dev_set);
        std::vector<SweepRow> rows;
        if (!sw_grid.empty()) {
            rows = sweep_beta(train_set, dev_set, cfg, parse_beta_grid(sw_grid), kind);
        } else {
            std::vector<HeadKind> heads;
            std::istringstream is(sw_heads);
            std::string name;
            while (std::getline(is, name, ',')) heads.push_back(head_kind_from_name(name));
            rows = sweep_heads(train_set, dev_set, cfg, heads, kind);
        }
        write_text(sw_report, format_sweep_table(rows));
        return 0;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
