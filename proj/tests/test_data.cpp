#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "fcn/data.hpp"
#include "fcn/errors.hpp"
#include "fcn/rng.hpp"

using namespace fcn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("fcn_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

GeneratorConfig small_config() {
    GeneratorConfig cfg;
    cfg.num_outfits = 120;
    cfg.num_labels = 5;
    cfg.num_attributes = 8;
    cfg.feature_dim = 6;
    cfg.embedding_dim = 12;
    cfg.max_items = 6;
    cfg.seed = 21;
    return cfg;
}

// Brute-force rule detector: scores every (item slot, attribute window) by the
// point-biserial correlation between the label and the projection of the
// window onto the positive-minus-negative mean direction.
struct DetectedRule {
    std::size_t slot = 0, start = 0, width = 0;
};

DetectedRule detect_rule(const Dataset& data, const std::vector<const Outfit*>& outfits,
                         std::size_t label) {
    const std::size_t d = data.feature_dim;
    // Split halves: the direction is estimated on one half and the correlation
    // measured on the other, so wide windows cannot win by overfitting.
    const std::size_t half = outfits.size() / 2;
    struct Candidate {
        DetectedRule rule;
        double corr;
    };
    std::vector<Candidate> candidates;
    for (std::size_t slot = 0; slot < 3; ++slot) {
        for (std::size_t width = 1; width <= 4 && width <= data.num_attributes; ++width) {
            for (std::size_t start = 0; start + width <= data.num_attributes; ++start) {
                const std::size_t dims = width * d;
                auto window_at = [&](const Outfit& o, std::vector<double>& out) {
                    const Tensor& f = data.item(o.item_ids[slot]).features;
                    for (std::size_t r = 0; r < width; ++r)
                        for (std::size_t k = 0; k < d; ++k)
                            out[r * d + k] = f(start + r, k);
                };

                double corr_sum = 0.0;
                int folds = 0;
                for (int fold = 0; fold < 2; ++fold) {
                    const std::size_t fit_lo = fold ? half : 0;
                    const std::size_t fit_hi = fold ? outfits.size() : half;
                    const std::size_t eval_lo = fold ? 0 : half;
                    const std::size_t eval_hi = fold ? half : outfits.size();

                    std::vector<double> mean_pos(dims, 0.0), mean_neg(dims, 0.0);
                    std::size_t n_pos = 0, n_neg = 0;
                    std::vector<double> window(dims);
                    for (std::size_t i = fit_lo; i < fit_hi; ++i) {
                        const Outfit& o = *outfits[i];
                        window_at(o, window);
                        auto& mean = o.labels[label] ? mean_pos : mean_neg;
                        (o.labels[label] ? n_pos : n_neg)++;
                        for (std::size_t v = 0; v < dims; ++v) mean[v] += window[v];
                    }
                    if (n_pos == 0 || n_neg == 0) continue;
                    std::vector<double> direction(dims);
                    for (std::size_t v = 0; v < dims; ++v) {
                        direction[v] = mean_pos[v] / n_pos - mean_neg[v] / n_neg;
                    }

                    double s1 = 0, s2 = 0, sp = 0;
                    std::size_t eval_pos = 0;
                    for (std::size_t i = eval_lo; i < eval_hi; ++i) {
                        const Outfit& o = *outfits[i];
                        window_at(o, window);
                        double proj = 0;
                        for (std::size_t v = 0; v < dims; ++v) proj += window[v] * direction[v];
                        s1 += proj;
                        s2 += proj * proj;
                        if (o.labels[label]) {
                            sp += proj;
                            ++eval_pos;
                        }
                    }
                    const double n = static_cast<double>(eval_hi - eval_lo);
                    if (eval_pos == 0 || eval_pos == eval_hi - eval_lo) continue;
                    const double p = eval_pos / n;
                    const double mean_all = s1 / n;
                    const double var = s2 / n - mean_all * mean_all;
                    if (var <= 0) continue;
                    corr_sum += std::abs((sp / eval_pos - mean_all) * std::sqrt(p / (1 - p)) /
                                         std::sqrt(var));
                    ++folds;
                }
                if (folds) candidates.push_back({{slot, start, width}, corr_sum / folds});
            }
        }
    }

    // A window containing the signal window scores essentially the same
    // correlation, so among near-ties prefer the smallest window (then the
    // earliest, then the lowest slot).
    double best_corr = 0.0;
    for (const auto& c : candidates) best_corr = std::max(best_corr, c.corr);
    DetectedRule best{99, 99, 99};
    for (const auto& c : candidates) {
        if (c.corr < 0.98 * best_corr) continue;
        const auto key = std::tuple{c.rule.width, c.rule.start, c.rule.slot};
        if (best.width == 99 || key < std::tuple{best.width, best.start, best.slot}) {
            best = c.rule;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("default vocabulary has 17 unique labels") {
    const LabelVocabulary vocab = LabelVocabulary::o4u_default();
    CHECK(vocab.size() == 17);
    CHECK_NOTHROW(vocab.validate());
    std::size_t body = 0;
    for (const auto& label : vocab.labels) body += label.group == "body-shape";
    CHECK(body == 8);
}

TEST_CASE("generator is deterministic down to the bytes") {
    TempDir a("gen_a"), b("gen_b");
    const GeneratorConfig cfg = small_config();

    SyntheticDataset first = generate_synthetic(cfg);
    split_dataset(first.dataset, {8, 1, 1}, cfg.seed);
    save_dataset(first.dataset, a.path);
    save_label_embeddings(a.path / "embeddings.txt", first.dataset.vocabulary, first.embeddings);

    SyntheticDataset second = generate_synthetic(cfg);
    split_dataset(second.dataset, {8, 1, 1}, cfg.seed);
    save_dataset(second.dataset, b.path);
    save_label_embeddings(b.path / "embeddings.txt", second.dataset.vocabulary,
                          second.embeddings);

    CHECK(slurp(a.path / "manifest.json") == slurp(b.path / "manifest.json"));
    CHECK(slurp(a.path / "features.bin") == slurp(b.path / "features.bin"));
    CHECK(slurp(a.path / "embeddings.txt") == slurp(b.path / "embeddings.txt"));
}

TEST_CASE("different seeds give different data") {
    GeneratorConfig cfg = small_config();
    const SyntheticDataset first = generate_synthetic(cfg);
    cfg.seed += 1;
    const SyntheticDataset second = generate_synthetic(cfg);
    CHECK(first.dataset.items[0].features != second.dataset.items[0].features);
}

TEST_CASE("bad outfits never carry physical labels") {
    const SyntheticDataset synthetic = generate_synthetic(small_config());
    for (const Outfit& outfit : synthetic.dataset.outfits) {
        if (outfit.well_matched) continue;
        for (std::uint8_t v : outfit.labels) CHECK(v == 0);
    }
}

TEST_CASE("label prevalence lands in the required band") {
    GeneratorConfig cfg;
    cfg.num_outfits = 2000;
    cfg.num_labels = 9;
    cfg.num_attributes = 10;
    cfg.feature_dim = 8;
    cfg.max_items = 5;
    cfg.rule_count = 9;
    cfg.seed = 0;
    const SyntheticDataset synthetic = generate_synthetic(cfg);

    std::size_t well = 0;
    std::vector<std::size_t> fired(cfg.num_labels, 0);
    for (const Outfit& outfit : synthetic.dataset.outfits) {
        well += outfit.well_matched;
        for (std::size_t j = 0; j < cfg.num_labels; ++j) fired[j] += outfit.labels[j];
    }
    const double well_rate = static_cast<double>(well) / cfg.num_outfits;
    CHECK(well_rate > 0.48);
    CHECK(well_rate < 0.60);
    for (std::size_t j = 0; j < cfg.num_labels; ++j) {
        const double over_all = static_cast<double>(fired[j]) / cfg.num_outfits;
        const double over_labeled = static_cast<double>(fired[j]) / well;
        CHECK(over_all >= 0.03);
        CHECK(over_all <= 0.6);
        CHECK(over_labeled >= 0.03);
        CHECK(over_labeled <= 0.6);
    }
}

TEST_CASE("planted rules are recoverable by the brute-force detector") {
    GeneratorConfig cfg;
    cfg.num_outfits = 2000;
    cfg.num_labels = 9;
    cfg.num_attributes = 14;
    cfg.feature_dim = 16;
    cfg.max_items = 6;
    cfg.rule_count = 9;
    cfg.seed = 0;
    const SyntheticDataset synthetic = generate_synthetic(cfg);

    std::vector<const Outfit*> labeled;
    for (const Outfit& o : synthetic.dataset.outfits) {
        if (o.well_matched) labeled.push_back(&o);
    }

    std::size_t recovered = 0;
    for (const PlantedRule& rule : synthetic.rules) {
        const DetectedRule found = detect_rule(synthetic.dataset, labeled, rule.label);
        if (found.slot == rule.item_slot && found.start == rule.row_start &&
            found.width == rule.width) {
            ++recovered;
        }
    }
    CHECK(recovered >= 9);  // >= 90% of 9 rules rounds up to all of them
}

TEST_CASE("split proportions and determinism") {
    CHECK(split_counts(10, {8, 1, 1}) == std::array<std::size_t, 3>{8, 1, 1});
    CHECK(split_counts(29352, {8, 1, 1}) == std::array<std::size_t, 3>{23482, 2935, 2935});

    SyntheticDataset synthetic = generate_synthetic(small_config());
    split_dataset(synthetic.dataset, {8, 1, 1}, 5);
    const auto counts = split_counts(synthetic.dataset.outfits.size(), {8, 1, 1});
    CHECK(synthetic.dataset.outfits_in(Split::kTrain).size() == counts[0]);
    CHECK(synthetic.dataset.outfits_in(Split::kVal).size() == counts[1]);
    CHECK(synthetic.dataset.outfits_in(Split::kTest).size() == counts[2]);

    Dataset copy = synthetic.dataset;
    split_dataset(copy, {8, 1, 1}, 5);
    CHECK(copy.split == synthetic.dataset.split);

    Dataset tiny = synthetic.dataset;
    tiny.outfits.resize(2);
    CHECK_THROWS_AS(split_dataset(tiny, {8, 1, 1}, 0), ValidationError);
}

TEST_CASE("save then load is the identity") {
    TempDir dir("roundtrip");
    SyntheticDataset synthetic = generate_synthetic(small_config());
    split_dataset(synthetic.dataset, {8, 1, 1}, 3);
    save_dataset(synthetic.dataset, dir.path);

    const Dataset loaded = load_dataset(dir.path);
    const Dataset& original = synthetic.dataset;
    CHECK(loaded.num_attributes == original.num_attributes);
    CHECK(loaded.feature_dim == original.feature_dim);
    CHECK(loaded.embedding_dim == original.embedding_dim);
    REQUIRE(loaded.items.size() == original.items.size());
    for (std::size_t i = 0; i < loaded.items.size(); ++i) {
        CHECK(loaded.items[i].item_id == original.items[i].item_id);
        CHECK(loaded.items[i].category == original.items[i].category);
        CHECK(loaded.items[i].features == original.items[i].features);  // bit-exact
    }
    REQUIRE(loaded.outfits.size() == original.outfits.size());
    for (std::size_t i = 0; i < loaded.outfits.size(); ++i) {
        CHECK(loaded.outfits[i].outfit_id == original.outfits[i].outfit_id);
        CHECK(loaded.outfits[i].item_ids == original.outfits[i].item_ids);
        CHECK(loaded.outfits[i].well_matched == original.outfits[i].well_matched);
        CHECK(loaded.outfits[i].labels == original.outfits[i].labels);
    }
    CHECK(loaded.split == original.split);
}

TEST_CASE("loader rejects corrupted datasets with distinct errors") {
    TempDir dir("corrupt");
    SyntheticDataset synthetic = generate_synthetic(small_config());
    split_dataset(synthetic.dataset, {8, 1, 1}, 3);
    save_dataset(synthetic.dataset, dir.path);

    const std::string manifest = slurp(dir.path / "manifest.json");

    SUBCASE("corrupt header N_a is a shape error") {
        auto j = nlohmann::json::parse(manifest);
        j["N_a"] = j["N_a"].get<int>() + 1;
        std::ofstream(dir.path / "manifest.json") << j.dump(2);
        CHECK_THROWS_AS(load_dataset(dir.path), ShapeError);
    }

    SUBCASE("dangling item reference names the id") {
        auto j = nlohmann::json::parse(manifest);
        j["outfits"][0]["item_ids"][0] = "item_999999";
        std::ofstream(dir.path / "manifest.json") << j.dump(2);
        try {
            load_dataset(dir.path);
            FAIL("expected DanglingReferenceError");
        } catch (const DanglingReferenceError& e) {
            CHECK(std::string(e.what()).find("item_999999") != std::string::npos);
        }
    }

    SUBCASE("version mismatch is a format error") {
        auto j = nlohmann::json::parse(manifest);
        j["format_version"] = 99;
        std::ofstream(dir.path / "manifest.json") << j.dump(2);
        CHECK_THROWS_AS(load_dataset(dir.path), FormatError);
    }

    SUBCASE("bad magic is a format error") {
        std::string bytes = slurp(dir.path / "features.bin");
        bytes[0] = 'X';
        std::ofstream(dir.path / "features.bin", std::ios::binary) << bytes;
        CHECK_THROWS_AS(load_dataset(dir.path), FormatError);
    }

    SUBCASE("physical labels on a bad outfit are rejected") {
        auto j = nlohmann::json::parse(manifest);
        for (auto& outfit : j["outfits"]) {
            if (!outfit["l_f"].get<bool>()) {
                outfit["l_p"] = {0};
                break;
            }
        }
        std::ofstream(dir.path / "manifest.json") << j.dump(2);
        CHECK_THROWS_AS(load_dataset(dir.path), FormatError);
    }
}

TEST_CASE("label embeddings load in vocabulary order with fallbacks") {
    TempDir dir("emb");
    const LabelVocabulary vocab = LabelVocabulary::o4u_default();
    const std::size_t dim = 4;

    SUBCASE("full file covers every label, including multi-word names") {
        Tensor emb({vocab.size(), dim});
        Rng rng(2);
        for (std::size_t i = 0; i < emb.size(); ++i) emb[i] = rng.normal();
        save_label_embeddings(dir.path / "emb.txt", vocab, emb);

        std::vector<std::string> warnings;
        const Tensor loaded =
            load_label_embeddings(dir.path / "emb.txt", vocab, dim, 0, &warnings);
        CHECK(warnings.empty());
        CHECK(loaded == emb);
    }

    SUBCASE("missing file falls back to seeded noise with one warning per label") {
        std::vector<std::string> warnings;
        const Tensor loaded =
            load_label_embeddings(dir.path / "absent.txt", vocab, dim, 9, &warnings);
        CHECK(warnings.size() == 17);
        CHECK(loaded.all_finite());
        const Tensor again = load_label_embeddings(dir.path / "absent.txt", vocab, dim, 9);
        CHECK(again == loaded);
    }

    SUBCASE("labels sharing a text vector share a row") {
        std::ofstream out(dir.path / "emb.txt");
        out << "hourglass 1 2 3 4\n";
        out << "athletics 1 2 3 4\n";
        out.close();
        const Tensor loaded = load_label_embeddings(dir.path / "emb.txt", vocab, dim, 0);
        const std::size_t a = vocab.find("hourglass"), b = vocab.find("athletics");
        for (std::size_t j = 0; j < dim; ++j) CHECK(loaded(a, j) == loaded(b, j));
    }

    SUBCASE("inconsistent vector lengths are rejected") {
        std::ofstream out(dir.path / "emb.txt");
        out << "hourglass 1 2 3 4\n";
        out << "athletics 1 2 3\n";
        out.close();
        CHECK_THROWS_AS(load_label_embeddings(dir.path / "emb.txt", vocab, dim, 0),
                        FormatError);
    }
}

TEST_CASE("generator validates its configuration") {
    GeneratorConfig cfg = small_config();
    cfg.num_outfits = 0;
    CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);
    cfg = small_config();
    cfg.max_items = 2;
    CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);
}
