#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fcn/data.hpp"
#include "fcn/tensor.hpp"

namespace fcn {

// Label co-occurrence graph built once from the training split and frozen.
struct LabelGraph {
    std::size_t num_labels = 0;
    std::vector<std::uint64_t> counts;  // row-major N x N; diagonal = per-label count
    Tensor adjacency;   // A, conditional probabilities, zero diagonal
    Tensor normalized;  // A_hat = D^-1/2 (A + I) D^-1/2
};

// counts[i][j] = outfits where labels i and j both fire (i != j);
// counts[i][i] = outfits where label i fires.
std::vector<std::uint64_t> count_cooccurrence(const std::vector<const Outfit*>& outfits,
                                              std::size_t num_labels);

// A[i][j] = counts[i][j] / counts[i][i] for i != j, diagonal zero (the self
// connection is added as +I during normalization). Rows of never-seen labels
// stay all-zero.
Tensor build_adjacency(const std::vector<std::uint64_t>& counts, std::size_t num_labels);

// A_hat[i][j] = (A + I)[i][j] / sqrt(rowsum_i * rowsum_j).
Tensor normalize_adjacency(const Tensor& a);

// Convenience: co-occurrence over the labeled training outfits.
LabelGraph build_label_graph(const Dataset& dataset);

void save_label_graph(const LabelGraph& graph, const std::filesystem::path& file);
LabelGraph load_label_graph(const std::filesystem::path& file);

}  // namespace fcn
