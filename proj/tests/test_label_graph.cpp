#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "fcn/errors.hpp"
#include "fcn/label_graph.hpp"
#include "fcn/rng.hpp"

using namespace fcn;

namespace {

std::vector<Outfit> outfits_with_labels(const std::vector<std::vector<std::uint8_t>>& rows) {
    std::vector<Outfit> outfits;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Outfit o;
        o.outfit_id = "outfit_" + std::to_string(i);
        o.well_matched = true;
        o.labels = rows[i];
        outfits.push_back(std::move(o));
    }
    return outfits;
}

std::vector<const Outfit*> pointers(const std::vector<Outfit>& outfits) {
    std::vector<const Outfit*> out;
    for (const auto& o : outfits) out.push_back(&o);
    return out;
}

// The 3-outfit / 3-label fixture used throughout.
const std::vector<std::vector<std::uint8_t>> kFixture = {{1, 1, 0}, {1, 0, 0}, {0, 1, 1}};

}  // namespace

TEST_CASE("co-occurrence counts match the hand example") {
    const auto outfits = outfits_with_labels(kFixture);
    const auto counts = count_cooccurrence(pointers(outfits), 3);
    CHECK(counts[0 * 3 + 0] == 2);
    CHECK(counts[1 * 3 + 1] == 2);
    CHECK(counts[2 * 3 + 2] == 1);
    CHECK(counts[0 * 3 + 1] == 1);
    CHECK(counts[1 * 3 + 0] == 1);
    CHECK(counts[1 * 3 + 2] == 1);
    CHECK(counts[2 * 3 + 1] == 1);
    CHECK(counts[0 * 3 + 2] == 0);
    CHECK(counts[2 * 3 + 0] == 0);
}

TEST_CASE("single outfit with every label on gives all-ones counts") {
    const auto outfits = outfits_with_labels({{1, 1, 1}});
    const auto counts = count_cooccurrence(pointers(outfits), 3);
    for (std::size_t i = 0; i < 9; ++i) CHECK(counts[i] == 1);
}

TEST_CASE("no label ever firing gives all-zero counts") {
    const auto outfits = outfits_with_labels({{0, 0, 0}, {0, 0, 0}});
    const auto counts = count_cooccurrence(pointers(outfits), 3);
    for (std::size_t i = 0; i < 9; ++i) CHECK(counts[i] == 0);
}

TEST_CASE("empty outfit list is rejected") {
    CHECK_THROWS_AS(count_cooccurrence({}, 3), ValidationError);
}

TEST_CASE("adjacency from the hand example") {
    const auto outfits = outfits_with_labels(kFixture);
    const Tensor a = build_adjacency(count_cooccurrence(pointers(outfits), 3), 3);
    const Tensor expected = Tensor::matrix(3, 3, {0, 0.5, 0, 0.5, 0, 0.5, 0, 1, 0});
    for (std::size_t i = 0; i < 9; ++i) CHECK(a[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("label that always co-occurs yields a 1.0 entry") {
    const auto outfits = outfits_with_labels({{1, 1, 0}, {1, 1, 0}});
    const Tensor a = build_adjacency(count_cooccurrence(pointers(outfits), 3), 3);
    CHECK(a(0, 1) == 1.0);
    CHECK(a(1, 0) == 1.0);
}

TEST_CASE("never-seen label keeps a zero row with no NaN") {
    const auto outfits = outfits_with_labels({{1, 0, 0}, {1, 0, 0}});
    const Tensor a = build_adjacency(count_cooccurrence(pointers(outfits), 3), 3);
    CHECK(a.all_finite());
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(a(1, j) == 0.0);
        CHECK(a(2, j) == 0.0);
    }
}

TEST_CASE("normalization matches the hand-derived values") {
    const Tensor a = Tensor::matrix(3, 3, {0, 0.5, 0, 0.5, 0, 0.5, 0, 1, 0});
    const Tensor a_hat = normalize_adjacency(a);
    const Tensor expected =
        Tensor::matrix(3, 3, {0.6667, 0.2887, 0, 0.2887, 0.5, 0.25, 0, 0.5, 0.5});
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(a_hat[i] == doctest::Approx(expected[i]).epsilon(1e-4));
    }
}

TEST_CASE("zero adjacency normalizes to the identity") {
    const Tensor a_hat = normalize_adjacency(Tensor({3, 3}));
    CHECK(a_hat == Tensor::identity(3));
}

TEST_CASE("symmetric adjacency keeps a symmetric normalization") {
    Rng rng(14);
    Tensor a({4, 4});
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j) {
            a(i, j) = a(j, i) = rng.uniform();
        }
    }
    const Tensor a_hat = normalize_adjacency(a);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(a_hat(i, j) == doctest::Approx(a_hat(j, i)).epsilon(1e-12));
        }
    }
}

TEST_CASE("self-loops survive normalization and zero pattern is preserved") {
    Rng rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a({5, 5});
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                if (i != j && rng.bernoulli(0.4)) a(i, j) = rng.uniform();
            }
        }
        const Tensor a_hat = normalize_adjacency(a);
        for (std::size_t i = 0; i < 5; ++i) CHECK(a_hat(i, i) > 0.0);
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                if (i == j) continue;
                CHECK((a(i, j) == 0.0) == (a_hat(i, j) == 0.0));
            }
        }
    }
}

TEST_CASE("conditional probabilities are scale-free in the counts") {
    const auto outfits = outfits_with_labels(kFixture);
    auto counts = count_cooccurrence(pointers(outfits), 3);
    const Tensor a = build_adjacency(counts, 3);
    for (auto& c : counts) c *= 7;
    const Tensor scaled = build_adjacency(counts, 3);
    CHECK(a == scaled);
}

TEST_CASE("graph.json round-trips") {
    const auto dir = std::filesystem::temp_directory_path() / "fcn_graph_test";
    std::filesystem::create_directories(dir);

    const auto outfits = outfits_with_labels(kFixture);
    LabelGraph graph;
    graph.num_labels = 3;
    graph.counts = count_cooccurrence(pointers(outfits), 3);
    graph.adjacency = build_adjacency(graph.counts, 3);
    graph.normalized = normalize_adjacency(graph.adjacency);

    save_label_graph(graph, dir / "graph.json");
    const LabelGraph loaded = load_label_graph(dir / "graph.json");
    CHECK(loaded.num_labels == graph.num_labels);
    CHECK(loaded.counts == graph.counts);
    CHECK(loaded.adjacency == graph.adjacency);
    CHECK(loaded.normalized == graph.normalized);
    std::filesystem::remove_all(dir);
}
