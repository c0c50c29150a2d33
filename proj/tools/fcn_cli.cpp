#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "fcn/commands.hpp"
#include "fcn/errors.hpp"

namespace {

// Exit codes: 0 success, 1 validation error, 2 runtime failure.
int run(int argc, char** argv) {
    CLI::App app{"Fashion cognitive network: outfit vs. physical-label classifier"};
    app.require_subcommand(1);

    fcn::cmd::GenDataOptions gen_opts;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
    gen->add_option("--out", gen_opts.out, "Output dataset directory")->required();
    gen->add_option("--outfits", gen_opts.gen.num_outfits, "Number of outfits");
    gen->add_option("--labels", gen_opts.gen.num_labels, "Number of physical labels");
    gen->add_option("--attributes", gen_opts.gen.num_attributes, "Attributes per item (N_a)");
    gen->add_option("--feature-dim", gen_opts.gen.feature_dim, "Attribute feature width (d)");
    gen->add_option("--embedding-dim", gen_opts.gen.embedding_dim, "Label embedding width (C)");
    gen->add_option("--max-items", gen_opts.gen.max_items, "Maximum items per outfit");
    gen->add_option("--rule-count", gen_opts.gen.rule_count, "Labels governed by planted rules");
    gen->add_option("--seed", gen_opts.gen.seed, "Generator seed");

    fcn::cmd::BuildGraphOptions graph_opts;
    auto* graph = app.add_subcommand("build-graph",
                                     "Build the label co-occurrence graph from a dataset");
    graph->add_option("--data", graph_opts.data, "Dataset directory")->required();
    graph->add_option("--out", graph_opts.out, "Output graph.json path")->required();

    fcn::cmd::TrainOptions train_opts;
    bool train_seed_set = false;
    std::uint64_t train_seed = 0;
    auto* train = app.add_subcommand("train", "Train the model and evaluate the test split");
    train->add_option("--data", train_opts.data, "Dataset directory")->required();
    train->add_option("--graph", train_opts.graph, "graph.json (built from the data if omitted)");
    train->add_option("--config", train_opts.config, "JSON config file");
    train->add_option("--run-dir", train_opts.run_dir, "Output directory")->required();
    train->add_option("--set", train_opts.overrides, "Override, e.g. --set train.lr0=0.05");
    train->add_option("--seed", train_seed, "Shortcut for --set train.seed=S")
        ->each([&](const std::string&) { train_seed_set = true; });

    fcn::cmd::EvalOptions eval_opts;
    std::string eval_split = "test";
    auto* eval = app.add_subcommand("eval", "Evaluate a saved model on a split");
    eval->add_option("--model", eval_opts.model, "model.bin path")->required();
    eval->add_option("--data", eval_opts.data, "Dataset directory")->required();
    eval->add_option("--graph", eval_opts.graph, "graph.json path")->required();
    eval->add_option("--split", eval_split, "train, val or test")
        ->check(CLI::IsMember({"train", "val", "test"}));
    eval->add_option("--out", eval_opts.out_dir, "Output directory for metrics files");

    fcn::cmd::AblateOptions ablate_opts;
    bool ablate_seed_set = false;
    std::uint64_t ablate_seed = 0;
    auto* ablate = app.add_subcommand("ablate", "Run an ablation grid (full train+eval per row)");
    ablate->add_option("--grid", ablate_opts.grid, "region, kernels or gcn")->required();
    ablate->add_option("--data", ablate_opts.data, "Dataset directory")->required();
    ablate->add_option("--config", ablate_opts.config, "JSON config file");
    ablate->add_option("--run-dir", ablate_opts.run_dir, "Output directory")->required();
    ablate->add_option("--set", ablate_opts.overrides, "Override, e.g. --set train.max_epochs=5");
    ablate->add_option("--seed", ablate_seed, "Shortcut for --set train.seed=S")
        ->each([&](const std::string&) { ablate_seed_set = true; });

    fcn::cmd::GradCheckOptions check_opts;
    auto* check = app.add_subcommand("gradcheck",
                                     "Finite-difference check of the tiny model's gradients");
    check->add_option("--config", check_opts.config, "JSON config overrides for the tiny setup");
    check->add_flag("--corrupt-backward", check_opts.corrupt_backward,
                    "Test hook: corrupt one analytic gradient")
        ->group("");  // hidden

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        fcn::cmd::gen_data(gen_opts);
        std::cout << "dataset written to " << gen_opts.out.string() << "\n";
        return 0;
    }
    if (graph->parsed()) {
        fcn::cmd::build_graph(graph_opts);
        std::cout << "graph written to " << graph_opts.out.string() << "\n";
        return 0;
    }
    if (train->parsed()) {
        if (train_seed_set) {
            train_opts.overrides.push_back("train.seed=" + std::to_string(train_seed));
        }
        const auto result = fcn::cmd::train(train_opts);
        std::printf("trained %zu epochs (best val mAP %.4f at epoch %zu); test mAP %.4f\n",
                    result.train.history.size(), result.train.best_val_map,
                    result.train.best_epoch, result.test_metrics.map);
        std::cout << "artifacts in " << train_opts.run_dir.string() << "\n";
        return 0;
    }
    if (eval->parsed()) {
        eval_opts.split = *fcn::split_from_name(eval_split);
        const auto result = fcn::cmd::eval(eval_opts);
        std::printf("%s split: mAP %.4f over %zu outfits\n", eval_split.c_str(), result.map,
                    result.num_examples);
        return 0;
    }
    if (ablate->parsed()) {
        if (ablate_seed_set) {
            ablate_opts.overrides.push_back("train.seed=" + std::to_string(ablate_seed));
        }
        const auto report = fcn::cmd::ablate(ablate_opts);
        bool any_failed = false;
        for (const auto& row : report.rows) {
            if (row.ok) {
                std::printf("%-14s test mAP %.4f\n", row.setting.c_str(), row.metrics.map);
            } else {
                std::printf("%-14s FAILED: %s\n", row.setting.c_str(), row.error.c_str());
                any_failed = true;
            }
        }
        std::cout << "report in " << ablate_opts.run_dir.string() << "\n";
        return any_failed ? 2 : 0;
    }
    return fcn::cmd::grad_check(check_opts, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const fcn::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
