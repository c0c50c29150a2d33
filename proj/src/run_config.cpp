#include "fcn/run_config.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

#include "fcn/errors.hpp"

namespace fcn {

using nlohmann::json;

namespace {

json to_json(const RunConfig& cfg) {
    json j;
    j["encoder"] = {{"window_sizes", cfg.encoder.window_sizes},
                    {"kernels_per_window", cfg.encoder.kernels_per_window},
                    {"max_items", cfg.encoder.max_items},
                    {"num_attributes", cfg.encoder.num_attributes},
                    {"feature_dim", cfg.encoder.feature_dim}};
    j["gcn"] = {{"input_dim", cfg.gcn.input_dim},
                {"hidden_dim", cfg.gcn.hidden_dim},
                {"output_dim", cfg.gcn.output_dim},
                {"num_layers", cfg.gcn.num_layers},
                {"final_activation", final_activation_name(cfg.gcn.final_activation)}};
    j["train"] = {{"batch_size", cfg.train.batch_size},
                  {"lr0", cfg.train.lr0},
                  {"momentum", cfg.train.momentum},
                  {"weight_decay", cfg.train.weight_decay},
                  {"lr_gamma", cfg.train.lr_gamma},
                  {"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"min_delta", cfg.train.min_delta},
                  {"seed", cfg.train.seed}};
    j["train_embeddings"] = cfg.train_embeddings;
    j["baseline_hidden"] = cfg.baseline_hidden;
    return j;
}

template <typename T>
void read_if(const json& j, const char* key, T& target) {
    if (j.contains(key)) target = j.at(key).get<T>();
}

void check_keys(const json& j, const char* section, std::initializer_list<const char*> known,
                std::vector<std::string>& problems) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::none_of(known.begin(), known.end(),
                         [&](const char* k) { return key == k; })) {
            problems.push_back(std::string("unknown config key: ") +
                               (section[0] ? std::string(section) + "." + key : key));
        }
    }
}

void merge_json(RunConfig& cfg, const json& j) {
    std::vector<std::string> problems;
    check_keys(j, "", {"encoder", "gcn", "train", "train_embeddings", "baseline_hidden"},
               problems);
    try {
        if (j.contains("encoder")) {
            const json& e = j.at("encoder");
            check_keys(e, "encoder",
                       {"window_sizes", "kernels_per_window", "max_items", "num_attributes",
                        "feature_dim"},
                       problems);
            read_if(e, "window_sizes", cfg.encoder.window_sizes);
            read_if(e, "kernels_per_window", cfg.encoder.kernels_per_window);
            read_if(e, "max_items", cfg.encoder.max_items);
            read_if(e, "num_attributes", cfg.encoder.num_attributes);
            read_if(e, "feature_dim", cfg.encoder.feature_dim);
        }
        if (j.contains("gcn")) {
            const json& g = j.at("gcn");
            check_keys(g, "gcn",
                       {"input_dim", "hidden_dim", "output_dim", "num_layers",
                        "final_activation"},
                       problems);
            read_if(g, "input_dim", cfg.gcn.input_dim);
            read_if(g, "hidden_dim", cfg.gcn.hidden_dim);
            read_if(g, "output_dim", cfg.gcn.output_dim);
            read_if(g, "num_layers", cfg.gcn.num_layers);
            if (g.contains("final_activation")) {
                const std::string act = g.at("final_activation").get<std::string>();
                if (act == "softmax") {
                    cfg.gcn.final_activation = FinalActivation::kSoftmax;
                } else if (act == "none") {
                    cfg.gcn.final_activation = FinalActivation::kNone;
                } else {
                    problems.push_back("gcn.final_activation must be softmax or none, got " +
                                       act);
                }
            }
        }
        if (j.contains("train")) {
            const json& t = j.at("train");
            check_keys(t, "train",
                       {"batch_size", "lr0", "momentum", "weight_decay", "lr_gamma",
                        "max_epochs", "patience", "min_delta", "seed"},
                       problems);
            read_if(t, "batch_size", cfg.train.batch_size);
            read_if(t, "lr0", cfg.train.lr0);
            read_if(t, "momentum", cfg.train.momentum);
            read_if(t, "weight_decay", cfg.train.weight_decay);
            read_if(t, "lr_gamma", cfg.train.lr_gamma);
            read_if(t, "max_epochs", cfg.train.max_epochs);
            read_if(t, "patience", cfg.train.patience);
            read_if(t, "min_delta", cfg.train.min_delta);
            read_if(t, "seed", cfg.train.seed);
        }
        read_if(j, "train_embeddings", cfg.train_embeddings);
        read_if(j, "baseline_hidden", cfg.baseline_hidden);
    } catch (const json::exception& e) {
        problems.push_back(std::string("config type error: ") + e.what());
    }
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ValidationError(msg);
    }
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& file) {
    RunConfig cfg;
    cfg.merge_file(file);
    return cfg;
}

void RunConfig::merge_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ValidationError("cannot read config file " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("config parse failure: " + std::string(e.what()));
    }
    merge_json(*this, j);
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ValidationError("override must look like section.key=value, got " + assignment);
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // bare strings like "softmax" come through unquoted
    }

    json patch = std::move(value);
    std::size_t end = path.size();
    while (true) {
        const auto dot = path.rfind('.', end - 1);
        const std::string key =
            dot == std::string::npos ? path.substr(0, end) : path.substr(dot + 1, end - dot - 1);
        patch = json{{key, std::move(patch)}};
        if (dot == std::string::npos) break;
        end = dot;
    }
    merge_json(*this, patch);
}

void RunConfig::derive_from_dataset(const Dataset& dataset) {
    encoder.num_attributes = dataset.num_attributes;
    encoder.feature_dim = dataset.feature_dim;
    gcn.input_dim = dataset.embedding_dim;
    gcn.output_dim = encoder.embedding_size();
}

std::vector<std::string> RunConfig::validate(const Dataset* dataset) const {
    std::vector<std::string> problems;
    auto capture = [&](auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            problems.push_back(e.what());
        }
    };
    capture([&] { encoder.validate(); });
    capture([&] { gcn.validate(); });
    capture([&] { train.validate(); });
    if (gcn.output_dim != encoder.embedding_size()) {
        problems.push_back("gcn.output_dim " + std::to_string(gcn.output_dim) +
                           " does not match the encoder embedding size " +
                           std::to_string(encoder.embedding_size()));
    }
    if (baseline_hidden == 0) problems.push_back("baseline_hidden must be >= 1");
    if (dataset) {
        const std::size_t longest = dataset->max_outfit_len();
        if (longest > encoder.max_items) {
            problems.push_back("dataset has outfits of length " + std::to_string(longest) +
                               " > encoder.max_items " + std::to_string(encoder.max_items));
        }
        if (encoder.num_attributes != dataset->num_attributes ||
            encoder.feature_dim != dataset->feature_dim) {
            problems.push_back("encoder feature shape does not match the dataset header");
        }
        if (gcn.input_dim != dataset->embedding_dim) {
            problems.push_back("gcn.input_dim " + std::to_string(gcn.input_dim) +
                               " does not match the dataset embedding dim " +
                               std::to_string(dataset->embedding_dim));
        }
    }
    return problems;
}

std::string RunConfig::to_json_string() const { return to_json(*this).dump(2) + "\n"; }

}  // namespace fcn
