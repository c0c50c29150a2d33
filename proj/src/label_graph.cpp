#include "fcn/label_graph.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "fcn/errors.hpp"

namespace fcn {

using nlohmann::json;

std::vector<std::uint64_t> count_cooccurrence(const std::vector<const Outfit*>& outfits,
                                              std::size_t num_labels) {
    if (outfits.empty()) {
        throw ValidationError("count_cooccurrence: need at least one outfit");
    }
    std::vector<std::uint64_t> counts(num_labels * num_labels, 0);
    for (const Outfit* outfit : outfits) {
        if (outfit->labels.size() != num_labels) {
            throw ShapeError("outfit " + outfit->outfit_id + " has " +
                             std::to_string(outfit->labels.size()) + " labels, expected " +
                             std::to_string(num_labels));
        }
        for (std::size_t i = 0; i < num_labels; ++i) {
            if (!outfit->labels[i]) continue;
            for (std::size_t j = 0; j < num_labels; ++j) {
                if (outfit->labels[j]) ++counts[i * num_labels + j];
            }
        }
    }
    return counts;
}

Tensor build_adjacency(const std::vector<std::uint64_t>& counts, std::size_t num_labels) {
    Tensor a({num_labels, num_labels});
    for (std::size_t i = 0; i < num_labels; ++i) {
        const std::uint64_t total = counts[i * num_labels + i];
        if (total == 0) continue;  // never-seen label keeps a zero row
        for (std::size_t j = 0; j < num_labels; ++j) {
            if (j == i) continue;
            a(i, j) = static_cast<double>(counts[i * num_labels + j]) /
                      static_cast<double>(total);
        }
    }
    return a;
}

Tensor normalize_adjacency(const Tensor& a) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
        throw ShapeError("normalize_adjacency: expected square matrix, got " + a.shape_str());
    }
    const std::size_t n = a.dim(0);
    Tensor with_self(a);
    for (std::size_t i = 0; i < n; ++i) with_self(i, i) += 1.0;

    std::vector<double> degree(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) degree[i] += with_self(i, j);
    }
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out(i, j) = with_self(i, j) / std::sqrt(degree[i] * degree[j]);
        }
    }
    return out;
}

LabelGraph build_label_graph(const Dataset& dataset) {
    LabelGraph graph;
    graph.num_labels = dataset.num_labels();
    graph.counts = count_cooccurrence(dataset.labeled_outfits_in(Split::kTrain),
                                      graph.num_labels);
    graph.adjacency = build_adjacency(graph.counts, graph.num_labels);
    graph.normalized = normalize_adjacency(graph.adjacency);
    return graph;
}

namespace {

json matrix_to_json(const Tensor& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.dim(0); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.dim(1); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Tensor matrix_from_json(const json& rows, std::size_t n) {
    Tensor m({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) m(i, j) = rows.at(i).at(j).get<double>();
    }
    return m;
}

}  // namespace

void save_label_graph(const LabelGraph& graph, const std::filesystem::path& file) {
    json out;
    out["N"] = graph.num_labels;
    json counts = json::array();
    for (std::size_t i = 0; i < graph.num_labels; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < graph.num_labels; ++j) {
            row.push_back(graph.counts[i * graph.num_labels + j]);
        }
        counts.push_back(std::move(row));
    }
    out["counts"] = std::move(counts);
    out["A"] = matrix_to_json(graph.adjacency);
    out["A_hat"] = matrix_to_json(graph.normalized);

    std::ofstream stream(file);
    if (!stream) throw FormatError("cannot write " + file.string());
    stream << out.dump(2) << '\n';
}

LabelGraph load_label_graph(const std::filesystem::path& file) {
    std::ifstream stream(file);
    if (!stream) throw FormatError("missing " + file.string());
    json in;
    try {
        stream >> in;
    } catch (const json::exception& e) {
        throw FormatError("graph parse failure: " + std::string(e.what()));
    }

    LabelGraph graph;
    try {
        graph.num_labels = in.at("N").get<std::size_t>();
        graph.counts.resize(graph.num_labels * graph.num_labels);
        for (std::size_t i = 0; i < graph.num_labels; ++i) {
            for (std::size_t j = 0; j < graph.num_labels; ++j) {
                graph.counts[i * graph.num_labels + j] =
                    in.at("counts").at(i).at(j).get<std::uint64_t>();
            }
        }
        graph.adjacency = matrix_from_json(in.at("A"), graph.num_labels);
        graph.normalized = matrix_from_json(in.at("A_hat"), graph.num_labels);
    } catch (const json::exception& e) {
        throw FormatError("graph field error: " + std::string(e.what()));
    }
    return graph;
}

}  // namespace fcn
