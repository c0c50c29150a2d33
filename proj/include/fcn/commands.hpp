#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fcn/data.hpp"
#include "fcn/metrics.hpp"
#include "fcn/run_config.hpp"
#include "fcn/train.hpp"

namespace fcn::cmd {

struct GenDataOptions {
    std::filesystem::path out;
    GeneratorConfig gen;
    std::array<int, 3> ratios{8, 1, 1};
};

// generate + split + save (+ synthesized embeddings.txt).
void gen_data(const GenDataOptions& options);

struct BuildGraphOptions {
    std::filesystem::path data;
    std::filesystem::path out;
};

void build_graph(const BuildGraphOptions& options);

struct TrainOptions {
    std::filesystem::path data;
    std::filesystem::path graph;   // empty: build from the training split
    std::filesystem::path config;  // empty: defaults
    std::filesystem::path run_dir;
    std::vector<std::string> overrides;
};

struct PipelineResult {
    TrainResult train;
    EvalResult test_metrics;
};

// Full training run; writes config.json, graph.json (when built here),
// model.bin, history.csv, metrics.json and metrics.md under run_dir.
PipelineResult train(const TrainOptions& options);

struct EvalOptions {
    std::filesystem::path model;
    std::filesystem::path data;
    std::filesystem::path graph;
    std::filesystem::path out_dir = ".";
    Split split = Split::kTest;
};

EvalResult eval(const EvalOptions& options);

struct AblateOptions {
    std::string grid;  // region | kernels | gcn
    std::filesystem::path data;
    std::filesystem::path config;
    std::filesystem::path run_dir;
    std::vector<std::string> overrides;
};

struct AblateRow {
    std::string setting;
    bool ok = false;
    std::string error;
    EvalResult metrics;
};

struct AblateReport {
    std::vector<AblateRow> rows;
};

// Runs the grid row by row (FCN_NUM_WORKERS bounds parallel rows); a failing
// row is recorded and the grid continues.
AblateReport ablate(const AblateOptions& options);

struct GradCheckOptions {
    std::filesystem::path config;  // optional overrides on the tiny setup
    bool corrupt_backward = false; // test hook: perturb one analytic gradient
};

// Finite-difference check of the tiny model in both final-activation modes;
// prints one line per parameter tensor. Returns 0 when every tensor passes.
int grad_check(const GradCheckOptions& options, std::ostream& out);

}  // namespace fcn::cmd
