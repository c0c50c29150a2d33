#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fcn/data.hpp"
#include "fcn/model.hpp"
#include "fcn/train.hpp"

namespace fcn {

// Merged run configuration: JSON file + flat dotted-key overrides. Defaults
// follow the reported experiment settings; per-dataset dimensions (N_a, d, C,
// the GCN output width) are derived, not configured.
struct RunConfig {
    EncoderConfig encoder;
    GcnConfig gcn;
    TrainConfig train;
    bool train_embeddings = false;
    std::size_t baseline_hidden = 64;

    static RunConfig load(const std::filesystem::path& file);

    // Merges the file's keys into this config, keeping the rest.
    void merge_file(const std::filesystem::path& file);

    // Applies "section.key=value"; value is parsed as JSON when possible.
    void apply_override(const std::string& assignment);

    // Fills N_a, d and the GCN input/output dims from the dataset and the
    // encoder shape.
    void derive_from_dataset(const Dataset& dataset);

    // Collects every problem instead of stopping at the first.
    std::vector<std::string> validate(const Dataset* dataset) const;

    std::string to_json_string() const;
};

}  // namespace fcn
