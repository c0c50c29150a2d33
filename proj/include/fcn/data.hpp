#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fcn/tensor.hpp"

namespace fcn {

struct LabelDef {
    std::string name;
    std::string group;  // one of the seven physical-feature groups
};

struct LabelVocabulary {
    std::vector<LabelDef> labels;

    std::size_t size() const { return labels.size(); }
    std::ptrdiff_t find(std::string_view name) const;
    void validate() const;  // unique names, at least 2 labels

    // The 17 labels covered by the published per-attribute results.
    static LabelVocabulary o4u_default();
    // Placeholder vocabulary for generated datasets of arbitrary size.
    static LabelVocabulary synthetic(std::size_t n);
};

struct ItemFeatures {
    std::string item_id;
    std::string category;
    Tensor features;  // [N_a x d]
};

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);
std::optional<Split> split_from_name(std::string_view name);

struct Outfit {
    std::string outfit_id;
    std::vector<std::string> item_ids;  // ordered, 3 <= n <= n_max
    bool well_matched = false;          // l_f
    // l_p: 1 marks a physical label this outfit is incompatible with.
    // All-zero whenever well_matched is false.
    std::vector<std::uint8_t> labels;
};

struct Dataset {
    LabelVocabulary vocabulary;
    std::size_t num_attributes = 14;  // N_a
    std::size_t feature_dim = 512;    // d
    std::size_t embedding_dim = 100;  // C
    std::vector<ItemFeatures> items;  // manifest order
    std::unordered_map<std::string, std::size_t> item_index;
    std::vector<Outfit> outfits;
    std::unordered_map<std::string, Split> split;

    std::size_t num_labels() const { return vocabulary.size(); }
    const ItemFeatures& item(const std::string& id) const;  // DanglingReferenceError if absent
    Split split_of(const std::string& outfit_id) const;
    std::vector<const Outfit*> outfits_in(Split s) const;
    // Outfits that actually carry physical labels (l_f = true); the multi-label
    // task is only defined on these.
    std::vector<const Outfit*> labeled_outfits_in(Split s) const;
    std::size_t max_outfit_len() const;
    void rebuild_item_index();
    void validate() const;
};

// One synthetic generative rule: label `label` fires on a well-matched outfit
// iff the planted amplitude added along `direction` (rows
// [row_start, row_start+width) of item slot `item_slot`) exceeds `threshold`.
struct PlantedRule {
    std::size_t label = 0;
    std::size_t item_slot = 0;
    std::size_t row_start = 0;
    std::size_t width = 1;
    Tensor direction;  // [width x d], unit norm
    double threshold = 0.0;
    double prevalence = 0.0;  // target P(label | well matched)
};

struct GeneratorConfig {
    std::size_t num_outfits = 2000;
    std::size_t num_labels = 9;
    std::size_t num_attributes = 14;  // N_a
    std::size_t feature_dim = 32;     // d
    std::size_t embedding_dim = 100;  // C
    std::size_t max_items = 10;       // n_max
    // Labels [0, rule_count) follow planted rules; the rest are pure noise.
    // Clamped to num_labels.
    std::size_t rule_count = SIZE_MAX;
    std::uint64_t seed = 0;

    // Shape knobs. Prevalences decay geometrically from max_prevalence down to
    // min_prevalence across the label range; noise_scale is the sigma of the
    // background features relative to the planted amplitude in [0, 1].
    double noise_scale = 0.2;
    double max_prevalence = 0.55;
    double min_prevalence = 0.08;
    double well_matched_rate = 15748.0 / 29352.0;
};

struct SyntheticDataset {
    Dataset dataset;
    Tensor embeddings;  // synthesized [N x C] label embeddings
    std::vector<PlantedRule> rules;
};

SyntheticDataset generate_synthetic(const GeneratorConfig& config);

// floor(total * r_i / sum(r)) per bucket, remainder distributed in order.
std::array<std::size_t, 3> split_counts(std::size_t total, const std::array<int, 3>& ratios);

// Deterministic shuffle by seed, proportional train/val/test assignment.
void split_dataset(Dataset& dataset, const std::array<int, 3>& ratios, std::uint64_t seed);

// Dataset directory layout: manifest.json + features.bin (+ embeddings.txt).
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// One "name v1 v2 ... vC" line per vocabulary label.
void save_label_embeddings(const std::filesystem::path& file, const LabelVocabulary& vocabulary,
                           const Tensor& embeddings);

// Rows ordered by vocabulary; labels missing from the file get a seeded
// Gaussian draw (sigma 0.1) and a warning appended to `warnings`.
Tensor load_label_embeddings(const std::filesystem::path& file, const LabelVocabulary& vocabulary,
                             std::size_t embedding_dim, std::uint64_t seed,
                             std::vector<std::string>* warnings = nullptr);

}  // namespace fcn
