#include "fcn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "fcn/errors.hpp"
#include "fcn/rng.hpp"

namespace fcn {

using nlohmann::json;

namespace {

constexpr char kFeatureMagic[4] = {'F', 'C', 'N', 'F'};
constexpr std::uint32_t kFormatVersion = 1;

std::string format_id(const char* prefix, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%06zu", prefix, n);
    return buf;
}

const char* category_for_slot(std::size_t slot) {
    switch (slot) {
        case 0: return "clothing";
        case 1: return "bag";
        case 2: return "shoes";
        default: return "accessory";
    }
}

void write_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff),
        static_cast<unsigned char>((v >> 24) & 0xff),
    };
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) |
           (static_cast<std::uint32_t>(bytes[3]) << 24);
}

std::uint32_t float_bits(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    return bits;
}

float bits_float(std::uint32_t bits) {
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::ptrdiff_t LabelVocabulary::find(std::string_view name) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].name == name) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
}

void LabelVocabulary::validate() const {
    if (labels.size() < 2) {
        throw ValidationError("vocabulary needs at least 2 labels, got " +
                              std::to_string(labels.size()));
    }
    std::unordered_set<std::string> seen;
    for (const auto& label : labels) {
        if (!seen.insert(label.name).second) {
            throw ValidationError("duplicate label name: " + label.name);
        }
    }
}

LabelVocabulary LabelVocabulary::o4u_default() {
    return LabelVocabulary{{
        {"top hourglass", "body-shape"},
        {"hourglass", "body-shape"},
        {"athletics", "body-shape"},
        {"inverted triangle", "body-shape"},
        {"triangle", "body-shape"},
        {"spoon", "body-shape"},
        {"round", "body-shape"},
        {"dimension", "body-shape"},
        {"skin yellow", "skin-color"},
        {"skin dark", "skin-color"},
        {"skin brown", "skin-color"},
        {"hair light brown", "hair-color"},
        {"hair grey", "hair-color"},
        {"height high", "height"},
        {"height low", "height"},
        {"breasts big", "breasts-size"},
        {"contrast low", "color-contrast"},
    }};
}

LabelVocabulary LabelVocabulary::synthetic(std::size_t n) {
    static const char* kGroups[] = {"body-shape",   "skin-color",   "hair-style", "hair-color",
                                    "height",       "breasts-size", "color-contrast"};
    LabelVocabulary vocab;
    vocab.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        vocab.labels.push_back({format_id("label", i), kGroups[i % 7]});
    }
    return vocab;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        default: return "test";
    }
}

std::optional<Split> split_from_name(std::string_view name) {
    if (name == "train") return Split::kTrain;
    if (name == "val") return Split::kVal;
    if (name == "test") return Split::kTest;
    return std::nullopt;
}

const ItemFeatures& Dataset::item(const std::string& id) const {
    auto it = item_index.find(id);
    if (it == item_index.end()) {
        throw DanglingReferenceError("unknown item id: " + id);
    }
    return items[it->second];
}

Split Dataset::split_of(const std::string& outfit_id) const {
    auto it = split.find(outfit_id);
    if (it == split.end()) {
        throw DanglingReferenceError("outfit has no split assignment: " + outfit_id);
    }
    return it->second;
}

std::vector<const Outfit*> Dataset::outfits_in(Split s) const {
    std::vector<const Outfit*> out;
    for (const auto& outfit : outfits) {
        auto it = split.find(outfit.outfit_id);
        if (it != split.end() && it->second == s) out.push_back(&outfit);
    }
    return out;
}

std::vector<const Outfit*> Dataset::labeled_outfits_in(Split s) const {
    std::vector<const Outfit*> out;
    for (const Outfit* outfit : outfits_in(s)) {
        if (outfit->well_matched) out.push_back(outfit);
    }
    return out;
}

std::size_t Dataset::max_outfit_len() const {
    std::size_t n = 0;
    for (const auto& outfit : outfits) n = std::max(n, outfit.item_ids.size());
    return n;
}

void Dataset::rebuild_item_index() {
    item_index.clear();
    for (std::size_t i = 0; i < items.size(); ++i) item_index[items[i].item_id] = i;
}

void Dataset::validate() const {
    vocabulary.validate();
    const std::size_t n_labels = vocabulary.size();
    for (const auto& entry : items) {
        if (entry.features.rank() != 2 || entry.features.dim(0) != num_attributes ||
            entry.features.dim(1) != feature_dim) {
            throw ShapeError("item " + entry.item_id + " has features " +
                             entry.features.shape_str() + ", expected [" +
                             std::to_string(num_attributes) + "x" + std::to_string(feature_dim) +
                             "]");
        }
        if (!entry.features.all_finite()) {
            throw FormatError("item " + entry.item_id + " has non-finite features");
        }
    }
    for (const auto& outfit : outfits) {
        for (const auto& id : outfit.item_ids) item(id);
        if (outfit.labels.size() != n_labels) {
            throw ShapeError("outfit " + outfit.outfit_id + " has " +
                             std::to_string(outfit.labels.size()) + " labels, expected " +
                             std::to_string(n_labels));
        }
        if (!outfit.well_matched) {
            for (std::uint8_t v : outfit.labels) {
                if (v != 0) {
                    throw FormatError("outfit " + outfit.outfit_id +
                                      " is not well matched but carries physical labels");
                }
            }
        }
    }
}

SyntheticDataset generate_synthetic(const GeneratorConfig& config) {
    if (config.num_outfits == 0 || config.num_labels < 2 || config.num_attributes == 0 ||
        config.feature_dim == 0 || config.embedding_dim == 0) {
        throw ValidationError("generator counts must be positive (and num_labels >= 2)");
    }
    if (config.max_items < 3) {
        throw ValidationError("generator max_items must be at least 3");
    }

    const std::size_t n_labels = config.num_labels;
    const std::size_t n_attr = config.num_attributes;
    const std::size_t d = config.feature_dim;
    const std::size_t rule_count = std::min(config.rule_count, n_labels);

    SyntheticDataset result;
    Dataset& data = result.dataset;
    data.vocabulary =
        n_labels == 17 ? LabelVocabulary::o4u_default() : LabelVocabulary::synthetic(n_labels);
    data.num_attributes = n_attr;
    data.feature_dim = d;
    data.embedding_dim = config.embedding_dim;

    Rng root(config.seed);
    Rng rule_rng = root.fork(1);
    Rng outfit_rng = root.fork(2);
    Rng emb_rng = root.fork(3);

    // Geometric prevalence decay from max_prevalence down to min_prevalence.
    std::vector<double> prevalence(n_labels);
    const double decay = config.min_prevalence / config.max_prevalence;
    for (std::size_t j = 0; j < n_labels; ++j) {
        const double frac = static_cast<double>(j) / static_cast<double>(n_labels - 1);
        prevalence[j] = config.max_prevalence * std::pow(decay, frac);
    }

    // Rules live on the guaranteed-present item slots (every outfit has >= 3 items)
    // with windows narrow enough for the encoder's smaller filters. Windows are
    // kept disjoint per slot where space allows, so each label has its own
    // clean signal region.
    std::vector<std::vector<bool>> occupied(3, std::vector<bool>(n_attr, false));
    result.rules.reserve(rule_count);
    for (std::size_t j = 0; j < rule_count; ++j) {
        PlantedRule rule;
        rule.label = j;
        for (int attempt = 0; attempt < 200; ++attempt) {
            rule.item_slot = rule_rng.index(3);
            rule.width = 1 + rule_rng.index(std::min<std::size_t>(4, n_attr));
            rule.row_start = rule_rng.index(n_attr - rule.width + 1);
            bool clash = false;
            for (std::size_t r = rule.row_start; r < rule.row_start + rule.width; ++r) {
                clash = clash || occupied[rule.item_slot][r];
            }
            if (!clash) break;
        }
        for (std::size_t r = rule.row_start; r < rule.row_start + rule.width; ++r) {
            occupied[rule.item_slot][r] = true;
        }
        // Unit direction with equal energy per row, so every row of the window
        // carries signal and the window extent is identifiable.
        rule.direction = Tensor({rule.width, d});
        for (std::size_t r = 0; r < rule.width; ++r) {
            double norm = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                rule.direction(r, k) = rule_rng.normal();
                norm += rule.direction(r, k) * rule.direction(r, k);
            }
            norm = std::sqrt(norm * static_cast<double>(rule.width));
            for (std::size_t k = 0; k < d; ++k) rule.direction(r, k) /= norm;
        }
        rule.prevalence = prevalence[j];
        rule.threshold = 1.0 - prevalence[j];  // amplitudes are uniform in [0, 1)
        result.rules.push_back(std::move(rule));
    }

    std::size_t item_counter = 0;
    data.outfits.reserve(config.num_outfits);
    for (std::size_t i = 0; i < config.num_outfits; ++i) {
        const std::size_t n = 3 + outfit_rng.index(config.max_items - 2);
        const bool well = outfit_rng.bernoulli(config.well_matched_rate);

        std::vector<Tensor> features;
        features.reserve(n);
        for (std::size_t slot = 0; slot < n; ++slot) {
            Tensor f({n_attr, d});
            for (std::size_t v = 0; v < f.size(); ++v) f[v] = config.noise_scale * outfit_rng.normal();
            features.push_back(std::move(f));
        }

        Outfit outfit;
        outfit.outfit_id = format_id("outfit", i);
        outfit.well_matched = well;
        outfit.labels.assign(n_labels, 0);

        // Planted signal is added to every outfit's features; labels only
        // materialize on well-matched outfits.
        for (const PlantedRule& rule : result.rules) {
            const double amplitude = outfit_rng.uniform();
            Tensor& f = features[rule.item_slot];
            for (std::size_t r = 0; r < rule.width; ++r) {
                for (std::size_t k = 0; k < d; ++k) {
                    f(rule.row_start + r, k) += amplitude * rule.direction(r, k);
                }
            }
            if (well && amplitude > rule.threshold) outfit.labels[rule.label] = 1;
        }
        if (well) {
            for (std::size_t j = rule_count; j < n_labels; ++j) {
                if (outfit_rng.bernoulli(prevalence[j])) outfit.labels[j] = 1;
            }
        }

        for (std::size_t slot = 0; slot < n; ++slot) {
            ItemFeatures item;
            item.item_id = format_id("item", item_counter++);
            item.category = category_for_slot(slot);
            // Quantize through f32 so the on-disk format round-trips bit-exactly.
            Tensor& f = features[slot];
            for (std::size_t v = 0; v < f.size(); ++v) {
                f[v] = static_cast<double>(static_cast<float>(f[v]));
            }
            item.features = std::move(f);
            outfit.item_ids.push_back(item.item_id);
            data.items.push_back(std::move(item));
        }
        data.outfits.push_back(std::move(outfit));
    }
    data.rebuild_item_index();

    result.embeddings = Tensor({n_labels, config.embedding_dim});
    for (std::size_t v = 0; v < result.embeddings.size(); ++v) {
        result.embeddings[v] = emb_rng.normal();
    }
    return result;
}

std::array<std::size_t, 3> split_counts(std::size_t total, const std::array<int, 3>& ratios) {
    if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0) {
        throw ValidationError("split ratios must be positive");
    }
    const std::size_t sum =
        static_cast<std::size_t>(ratios[0]) + ratios[1] + ratios[2];
    std::array<std::size_t, 3> counts{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        counts[i] = total * static_cast<std::size_t>(ratios[i]) / sum;
        assigned += counts[i];
    }
    for (std::size_t i = 0; assigned < total; i = (i + 1) % 3) {
        ++counts[i];
        ++assigned;
    }
    return counts;
}

void split_dataset(Dataset& dataset, const std::array<int, 3>& ratios, std::uint64_t seed) {
    if (dataset.outfits.size() < 3) {
        throw ValidationError("need at least 3 outfits to split, got " +
                              std::to_string(dataset.outfits.size()));
    }
    std::vector<std::size_t> order(dataset.outfits.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const auto counts = split_counts(order.size(), ratios);
    dataset.split.clear();
    for (std::size_t i = 0; i < order.size(); ++i) {
        Split s = i < counts[0]              ? Split::kTrain
                  : i < counts[0] + counts[1] ? Split::kVal
                                              : Split::kTest;
        dataset.split[dataset.outfits[order[i]].outfit_id] = s;
    }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["N_a"] = dataset.num_attributes;
    manifest["d"] = dataset.feature_dim;
    manifest["C"] = dataset.embedding_dim;
    manifest["vocabulary"] = json::array();
    for (const auto& label : dataset.vocabulary.labels) {
        manifest["vocabulary"].push_back({{"name", label.name}, {"group", label.group}});
    }
    manifest["items"] = json::array();
    for (const auto& item : dataset.items) {
        manifest["items"].push_back({{"item_id", item.item_id}, {"category", item.category}});
    }
    manifest["outfits"] = json::array();
    for (const auto& outfit : dataset.outfits) {
        json entry;
        entry["outfit_id"] = outfit.outfit_id;
        entry["item_ids"] = outfit.item_ids;
        entry["l_f"] = outfit.well_matched;
        json lp = json::array();
        for (std::size_t j = 0; j < outfit.labels.size(); ++j) {
            if (outfit.labels[j]) lp.push_back(j);
        }
        entry["l_p"] = std::move(lp);
        manifest["outfits"].push_back(std::move(entry));
    }
    json split_obj = json::object();
    for (const auto& [id, s] : dataset.split) split_obj[id] = split_name(s);
    manifest["split"] = std::move(split_obj);

    {
        std::ofstream out(dir / "manifest.json");
        if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
        out << manifest.dump(2) << '\n';
    }

    std::ofstream bin(dir / "features.bin", std::ios::binary);
    if (!bin) throw FormatError("cannot write " + (dir / "features.bin").string());
    bin.write(kFeatureMagic, 4);
    write_u32(bin, static_cast<std::uint32_t>(dataset.items.size()));
    write_u32(bin, static_cast<std::uint32_t>(dataset.num_attributes));
    write_u32(bin, static_cast<std::uint32_t>(dataset.feature_dim));
    for (const auto& item : dataset.items) {
        for (std::size_t v = 0; v < item.features.size(); ++v) {
            write_u32(bin, float_bits(static_cast<float>(item.features[v])));
        }
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("missing " + (dir / "manifest.json").string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw FormatError("manifest parse failure: " + std::string(e.what()));
    }

    if (!manifest.contains("format_version") ||
        manifest["format_version"].get<std::uint32_t>() != kFormatVersion) {
        throw FormatError("manifest format_version mismatch, expected " +
                          std::to_string(kFormatVersion));
    }

    Dataset dataset;
    try {
        dataset.num_attributes = manifest.at("N_a").get<std::size_t>();
        dataset.feature_dim = manifest.at("d").get<std::size_t>();
        dataset.embedding_dim = manifest.at("C").get<std::size_t>();
        for (const auto& entry : manifest.at("vocabulary")) {
            dataset.vocabulary.labels.push_back(
                {entry.at("name").get<std::string>(), entry.at("group").get<std::string>()});
        }
        for (const auto& entry : manifest.at("items")) {
            ItemFeatures item;
            item.item_id = entry.at("item_id").get<std::string>();
            item.category = entry.at("category").get<std::string>();
            dataset.items.push_back(std::move(item));
        }
        for (const auto& entry : manifest.at("outfits")) {
            Outfit outfit;
            outfit.outfit_id = entry.at("outfit_id").get<std::string>();
            outfit.item_ids = entry.at("item_ids").get<std::vector<std::string>>();
            outfit.well_matched = entry.at("l_f").get<bool>();
            outfit.labels.assign(dataset.vocabulary.size(), 0);
            for (const auto& idx : entry.at("l_p")) {
                const std::size_t j = idx.get<std::size_t>();
                if (j >= dataset.vocabulary.size()) {
                    throw FormatError("outfit " + outfit.outfit_id + " references label index " +
                                      std::to_string(j) + " outside the vocabulary");
                }
                outfit.labels[j] = 1;
            }
            dataset.outfits.push_back(std::move(outfit));
        }
        for (const auto& [id, name] : manifest.at("split").items()) {
            const auto s = split_from_name(name.get<std::string>());
            if (!s) throw FormatError("unknown split name: " + name.get<std::string>());
            dataset.split[id] = *s;
        }
    } catch (const json::exception& e) {
        throw FormatError("manifest field error: " + std::string(e.what()));
    }

    std::ifstream bin(dir / "features.bin", std::ios::binary);
    if (!bin) throw FormatError("missing " + (dir / "features.bin").string());
    char magic[4];
    bin.read(magic, 4);
    if (!bin || std::memcmp(magic, kFeatureMagic, 4) != 0) {
        throw FormatError("features.bin has bad magic, expected FCNF");
    }
    const std::uint32_t item_count = read_u32(bin);
    const std::uint32_t file_attrs = read_u32(bin);
    const std::uint32_t file_dim = read_u32(bin);
    if (item_count != dataset.items.size()) {
        throw ShapeError("features.bin holds " + std::to_string(item_count) +
                         " items, manifest lists " + std::to_string(dataset.items.size()));
    }
    if (file_attrs != dataset.num_attributes || file_dim != dataset.feature_dim) {
        throw ShapeError("features.bin header [" + std::to_string(file_attrs) + "x" +
                         std::to_string(file_dim) + "] does not match manifest [" +
                         std::to_string(dataset.num_attributes) + "x" +
                         std::to_string(dataset.feature_dim) + "]");
    }
    for (auto& item : dataset.items) {
        item.features = Tensor({dataset.num_attributes, dataset.feature_dim});
        for (std::size_t v = 0; v < item.features.size(); ++v) {
            item.features[v] = static_cast<double>(bits_float(read_u32(bin)));
        }
        if (!bin) throw FormatError("features.bin truncated at item " + item.item_id);
    }

    dataset.rebuild_item_index();
    dataset.validate();
    return dataset;
}

void save_label_embeddings(const std::filesystem::path& file, const LabelVocabulary& vocabulary,
                           const Tensor& embeddings) {
    std::ofstream out(file);
    if (!out) throw FormatError("cannot write " + file.string());
    for (std::size_t i = 0; i < vocabulary.size(); ++i) {
        out << vocabulary.labels[i].name;
        for (std::size_t j = 0; j < embeddings.dim(1); ++j) {
            out << ' ' << format_double(embeddings(i, j));
        }
        out << '\n';
    }
}

Tensor load_label_embeddings(const std::filesystem::path& file, const LabelVocabulary& vocabulary,
                             std::size_t embedding_dim, std::uint64_t seed,
                             std::vector<std::string>* warnings) {
    // Lines are "name v1 v2 ... vC"; the vector is the longest all-numeric
    // token suffix, which tolerates label names containing spaces.
    std::unordered_map<std::string, std::vector<double>> rows;
    std::ifstream in(file);
    if (in) {
        std::string line;
        std::size_t vector_len = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream tokens(line);
            std::vector<std::string> parts;
            std::string tok;
            while (tokens >> tok) parts.push_back(tok);
            std::size_t first_value = parts.size();
            std::vector<double> values;
            while (first_value > 1) {
                const std::string& cand = parts[first_value - 1];
                char* end = nullptr;
                const double v = std::strtod(cand.c_str(), &end);
                if (end != cand.c_str() + cand.size()) break;
                values.insert(values.begin(), v);
                --first_value;
            }
            if (values.empty()) {
                throw FormatError("embedding line has no numeric values: " + line);
            }
            if (vector_len == 0) {
                vector_len = values.size();
            } else if (values.size() != vector_len) {
                throw FormatError("inconsistent embedding vector lengths: " +
                                  std::to_string(values.size()) + " vs " +
                                  std::to_string(vector_len));
            }
            std::string name = parts[0];
            for (std::size_t i = 1; i < first_value; ++i) name += ' ' + parts[i];
            rows[name] = std::move(values);
        }
        if (vector_len != 0 && vector_len != embedding_dim) {
            throw FormatError("embedding file has " + std::to_string(vector_len) +
                              "-dim vectors, expected " + std::to_string(embedding_dim));
        }
    }

    Tensor out({vocabulary.size(), embedding_dim});
    Rng rng(seed);
    for (std::size_t i = 0; i < vocabulary.size(); ++i) {
        const std::string& name = vocabulary.labels[i].name;
        auto it = rows.find(name);
        if (it != rows.end()) {
            for (std::size_t j = 0; j < embedding_dim; ++j) out(i, j) = it->second[j];
        } else {
            for (std::size_t j = 0; j < embedding_dim; ++j) out(i, j) = 0.1 * rng.normal();
            if (warnings) {
                warnings->push_back("no embedding for label \"" + name +
                                    "\"; using a random draw");
            }
        }
    }
    return out;
}

}  // namespace fcn
