#include "fcn/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "fcn/errors.hpp"
#include "fcn/gradcheck.hpp"
#include "fcn/label_graph.hpp"

namespace fcn::cmd {

using nlohmann::json;

namespace {

void write_text(const std::filesystem::path& file, const std::string& text) {
    std::ofstream out(file);
    if (!out) throw FormatError("cannot write " + file.string());
    out << text;
}

RunConfig resolve_config(const std::filesystem::path& file,
                         const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!file.empty()) cfg = RunConfig::load(file);
    for (const auto& assignment : overrides) cfg.apply_override(assignment);
    return cfg;
}

void require_valid(const RunConfig& cfg, const Dataset& dataset) {
    const auto problems = cfg.validate(&dataset);
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ValidationError(msg);
    }
}

// One full train + test-evaluation run into run_dir.
PipelineResult run_pipeline(const Dataset& dataset, const LabelGraph& graph,
                            const Tensor& embeddings, const RunConfig& cfg,
                            const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    write_text(run_dir / "config.json", cfg.to_json_string());

    FcnTrainRun run = train_fcn(dataset, graph, cfg.encoder, cfg.gcn, cfg.train,
                                embeddings, cfg.train_embeddings);
    save_model(run.model.params(), run_dir / "model.bin");
    write_history_csv(run.result.history, run_dir / "history.csv");

    PipelineResult out{std::move(run.result), evaluate_split(run.model, dataset, Split::kTest)};
    write_text(run_dir / "metrics.json",
               metrics_to_json(out.test_metrics, &dataset.vocabulary, "test"));
    write_text(run_dir / "metrics.md",
               metrics_to_markdown(out.test_metrics, &dataset.vocabulary, "test"));
    return out;
}

Tensor resolve_embeddings(const std::filesystem::path& data_dir, const Dataset& dataset,
                          std::uint64_t seed) {
    std::vector<std::string> warnings;
    Tensor embeddings = load_label_embeddings(data_dir / "embeddings.txt", dataset.vocabulary,
                                              dataset.embedding_dim, seed, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    return embeddings;
}

}  // namespace

void gen_data(const GenDataOptions& options) {
    if (options.out.empty()) throw ValidationError("gen-data: --out is required");
    SyntheticDataset synthetic = generate_synthetic(options.gen);
    split_dataset(synthetic.dataset, options.ratios, options.gen.seed);
    save_dataset(synthetic.dataset, options.out);
    save_label_embeddings(options.out / "embeddings.txt", synthetic.dataset.vocabulary,
                          synthetic.embeddings);
}

void build_graph(const BuildGraphOptions& options) {
    const Dataset dataset = load_dataset(options.data);
    const LabelGraph graph = build_label_graph(dataset);
    save_label_graph(graph, options.out);
}

PipelineResult train(const TrainOptions& options) {
    const Dataset dataset = load_dataset(options.data);

    RunConfig cfg = resolve_config(options.config, options.overrides);
    cfg.derive_from_dataset(dataset);
    require_valid(cfg, dataset);

    std::filesystem::create_directories(options.run_dir);
    LabelGraph graph;
    if (options.graph.empty()) {
        graph = build_label_graph(dataset);
        save_label_graph(graph, options.run_dir / "graph.json");
    } else {
        graph = load_label_graph(options.graph);
    }

    const Tensor embeddings = resolve_embeddings(options.data, dataset, cfg.train.seed);
    return run_pipeline(dataset, graph, embeddings, cfg, options.run_dir);
}

EvalResult eval(const EvalOptions& options) {
    const Dataset dataset = load_dataset(options.data);
    const LabelGraph graph = load_label_graph(options.graph);
    ModelParams params = load_model(options.model);
    const FcnModel model(dataset, graph.normalized, std::move(params));

    const EvalResult result = evaluate_split(model, dataset, options.split);
    std::filesystem::create_directories(options.out_dir);
    write_text(options.out_dir / "metrics.json",
               metrics_to_json(result, &dataset.vocabulary, split_name(options.split)));
    write_text(options.out_dir / "metrics.md",
               metrics_to_markdown(result, &dataset.vocabulary, split_name(options.split)));
    return result;
}

namespace {

struct AblateSetting {
    std::string label;
    RunConfig cfg;
};

std::string window_label(const std::vector<std::size_t>& windows) {
    std::string out = "(";
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(windows[i]);
    }
    return out + ")";
}

std::vector<AblateSetting> grid_settings(const std::string& grid, const RunConfig& base) {
    std::vector<AblateSetting> settings;
    if (grid == "region") {
        const std::vector<std::vector<std::size_t>> regions = {
            {1}, {2}, {4, 4, 4, 4, 4}, {8, 9, 10}, {1, 2, 4, 6, 8}};
        for (const auto& windows : regions) {
            AblateSetting s{window_label(windows), base};
            s.cfg.encoder.window_sizes = windows;
            settings.push_back(std::move(s));
        }
    } else if (grid == "kernels") {
        for (std::size_t k : {2, 12, 24, 48}) {
            AblateSetting s{std::to_string(k), base};
            s.cfg.encoder.kernels_per_window = k;
            settings.push_back(std::move(s));
        }
    } else if (grid == "gcn") {
        for (std::size_t depth : {1, 2, 4, 8}) {
            AblateSetting s{std::to_string(depth), base};
            s.cfg.gcn.num_layers = depth;
            settings.push_back(std::move(s));
        }
    } else {
        throw ValidationError("unknown ablation grid: " + grid +
                              " (expected region, kernels or gcn)");
    }
    return settings;
}

std::string slugify(const std::string& label) {
    std::string out;
    for (char c : label) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out += c;
        } else if (c == ',') {
            out += '_';
        }
    }
    return out.empty() ? "row" : out;
}

std::size_t worker_count() {
    if (const char* env = std::getenv("FCN_NUM_WORKERS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<std::size_t>(n);
    }
    return 1;
}

std::string ablate_markdown(const std::string& grid, const std::vector<AblateRow>& rows) {
    std::ostringstream out;
    out << "# Ablation: " << grid << "\n\n";
    out << "| Setting | mAP | CP | CR | CF1 | OP | OR | OF1 | Top-3 CP | Top-3 CR | Top-3 CF1 "
           "| Top-3 OP | Top-3 OR | Top-3 OF1 |\n";
    out << "| --- | ---: | ---: | ---: | ---: | ---: | ---: | ---: | ---: | ---: | ---: | "
           "---: | ---: | ---: |\n";
    char buf[32];
    auto cell = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
        return std::string(buf);
    };
    for (const auto& row : rows) {
        out << "| " << row.setting;
        if (!row.ok) {
            out << " | failed: " << row.error;
            for (int i = 0; i < 12; ++i) out << " | -";
            out << " |\n";
            continue;
        }
        out << " | " << cell(row.metrics.map);
        for (const ClassMetrics* m : {&row.metrics.all, &row.metrics.top3}) {
            out << " | " << cell(m->cp) << " | " << cell(m->cr) << " | " << cell(m->cf1)
                << " | " << cell(m->op) << " | " << cell(m->orr) << " | " << cell(m->of1);
        }
        out << " |\n";
    }
    return out.str();
}

json ablate_json(const std::string& grid, const std::vector<AblateRow>& rows) {
    json out;
    out["grid"] = grid;
    out["rows"] = json::array();
    for (const auto& row : rows) {
        json entry;
        entry["setting"] = row.setting;
        entry["ok"] = row.ok;
        if (!row.ok) {
            entry["error"] = row.error;
        } else {
            entry["metrics"] = json::parse(metrics_to_json(row.metrics, nullptr, "test"));
        }
        out["rows"].push_back(std::move(entry));
    }
    return out;
}

}  // namespace

AblateReport ablate(const AblateOptions& options) {
    const Dataset dataset = load_dataset(options.data);
    RunConfig base = resolve_config(options.config, options.overrides);
    base.derive_from_dataset(dataset);

    std::vector<AblateSetting> settings = grid_settings(options.grid, base);
    for (auto& s : settings) s.cfg.derive_from_dataset(dataset);  // refresh output_dim

    std::filesystem::create_directories(options.run_dir);
    const LabelGraph graph = build_label_graph(dataset);
    save_label_graph(graph, options.run_dir / "graph.json");
    const Tensor embeddings = resolve_embeddings(options.data, dataset, base.train.seed);

    AblateReport report;
    report.rows.resize(settings.size());

    auto run_row = [&](std::size_t idx) {
        AblateRow row;
        row.setting = settings[idx].label;
        const auto row_dir =
            options.run_dir / ("row_" + std::to_string(idx) + "_" + slugify(row.setting));
        try {
            require_valid(settings[idx].cfg, dataset);
            PipelineResult result =
                run_pipeline(dataset, graph, embeddings, settings[idx].cfg, row_dir);
            row.metrics = result.test_metrics;
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        return row;
    };

    const std::size_t workers = worker_count();
    for (std::size_t start = 0; start < settings.size(); start += workers) {
        const std::size_t end = std::min(start + workers, settings.size());
        std::vector<std::future<AblateRow>> wave;
        for (std::size_t i = start; i < end; ++i) {
            wave.push_back(std::async(std::launch::async, run_row, i));
        }
        for (std::size_t i = start; i < end; ++i) {
            report.rows[i] = wave[i - start].get();
        }
    }

    write_text(options.run_dir / "report.md", ablate_markdown(options.grid, report.rows));
    write_text(options.run_dir / "report.json",
               ablate_json(options.grid, report.rows).dump(2) + "\n");
    return report;
}

namespace {

// The tiny gradient-check setup: 5 labels, 6-dim embeddings, [6 x 8] item
// features, 3-item outfits, windows (1,2) x 4 kernels (F = 8), hidden 4.
GeneratorConfig tiny_generator() {
    GeneratorConfig gen;
    gen.num_outfits = 14;
    gen.num_labels = 5;
    gen.num_attributes = 6;
    gen.feature_dim = 8;
    gen.embedding_dim = 6;
    gen.max_items = 3;
    gen.seed = 7;
    return gen;
}

RunConfig tiny_run_config() {
    RunConfig cfg;
    cfg.encoder.window_sizes = {1, 2};
    cfg.encoder.kernels_per_window = 4;
    cfg.encoder.max_items = 3;
    cfg.gcn.hidden_dim = 4;
    cfg.gcn.num_layers = 2;
    cfg.train.seed = 11;
    return cfg;
}

}  // namespace

int grad_check(const GradCheckOptions& options, std::ostream& out) {
    SyntheticDataset synthetic = generate_synthetic(tiny_generator());
    Dataset& dataset = synthetic.dataset;
    split_dataset(dataset, {8, 1, 1}, tiny_generator().seed);

    RunConfig cfg = tiny_run_config();
    if (!options.config.empty()) {
        cfg.merge_file(options.config);
        cfg.encoder.max_items = 3;  // the tiny dataset is fixed
    }
    cfg.derive_from_dataset(dataset);
    require_valid(cfg, dataset);

    std::vector<const Outfit*> batch = dataset.labeled_outfits_in(Split::kTrain);
    if (batch.size() > 6) batch.resize(6);
    if (batch.empty()) throw ValidationError("tiny dataset has no labeled training outfits");

    const double eps = 1e-3;
    const double threshold = 1e-4;
    const double lambda = cfg.train.weight_decay;
    bool all_pass = true;

    for (FinalActivation mode : {FinalActivation::kSoftmax, FinalActivation::kNone}) {
        GcnConfig gcn = cfg.gcn;
        gcn.final_activation = mode;
        ModelParams params =
            init_params(cfg.encoder, gcn, synthetic.embeddings, cfg.train.seed);
        FcnModel model(dataset, build_label_graph(dataset).normalized, std::move(params));

        // Analytic gradient of the full objective at the current point.
        std::vector<Tensor> grads;
        std::vector<Tensor*> grad_ptrs;
        for (const Tensor* p : model.parameters()) grads.emplace_back(p->shape());
        for (auto& g : grads) grad_ptrs.push_back(&g);
        model.batch_gradient(batch, grad_ptrs);
        const auto param_ptrs = model.parameters();
        for (std::size_t t = 0; t < grads.size(); ++t) {
            axpy(lambda, *param_ptrs[t], grads[t]);
        }
        if (options.corrupt_backward) grads[0][0] += 1e-2;

        std::vector<Tensor> values;
        for (const Tensor* p : model.parameters()) values.push_back(*p);

        FcnModel probe = model;
        const auto f = [&](const std::vector<Tensor>& p) {
            probe.assign_parameters(p);
            return objective(probe, batch, lambda);
        };
        const GradCheckReport report = finite_diff_check(f, values, grads, eps);

        const auto names = model.parameter_names();
        out << "final_activation=" << final_activation_name(mode) << "\n";
        for (std::size_t t = 0; t < names.size(); ++t) {
            const bool pass = report.per_tensor[t] <= threshold;
            all_pass = all_pass && pass;
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.3e", report.per_tensor[t]);
            out << "  " << (pass ? "PASS" : "FAIL") << "  " << names[t] << "  max_rel_err="
                << buf << "\n";
        }
    }
    out << (all_pass ? "gradcheck: all tensors pass" : "gradcheck: FAILURES above threshold")
        << " (threshold " << threshold << ", eps " << eps << ")\n";
    return all_pass ? 0 : 2;
}

}  // namespace fcn::cmd
