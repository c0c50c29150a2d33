#include "fcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "fcn/errors.hpp"
#include "fcn/rng.hpp"

namespace fcn {

using nlohmann::json;

void EncoderConfig::validate() const {
    if (window_sizes.empty()) throw ValidationError("encoder.window_sizes must be non-empty");
    for (std::size_t h : window_sizes) {
        if (h == 0 || h > num_attributes) {
            throw ValidationError("encoder window size " + std::to_string(h) +
                                  " must lie in [1, N_a=" + std::to_string(num_attributes) + "]");
        }
    }
    if (kernels_per_window == 0) throw ValidationError("encoder.kernels_per_window must be >= 1");
    if (max_items == 0) throw ValidationError("encoder.max_items must be >= 1");
    if (num_attributes == 0 || feature_dim == 0) {
        throw ValidationError("encoder N_a and d must be positive");
    }
}

const char* final_activation_name(FinalActivation a) {
    return a == FinalActivation::kSoftmax ? "softmax" : "none";
}

std::vector<std::size_t> GcnConfig::layer_dims() const {
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    for (std::size_t l = 1; l < num_layers; ++l) dims.push_back(hidden_dim);
    dims.push_back(output_dim);
    return dims;
}

void GcnConfig::validate() const {
    if (num_layers == 0) throw ValidationError("gcn.num_layers must be >= 1");
    if (input_dim == 0 || hidden_dim == 0 || output_dim == 0) {
        throw ValidationError("gcn dimensions must be positive");
    }
}

std::vector<Tensor*> ModelParams::trainable() {
    std::vector<Tensor*> out;
    for (auto& bank : filters) {
        for (auto& filter : bank) out.push_back(&filter);
    }
    for (auto& w : gcn_weights) out.push_back(&w);
    if (train_embeddings) out.push_back(&label_embeddings);
    return out;
}

std::vector<const Tensor*> ModelParams::trainable() const {
    std::vector<const Tensor*> out;
    for (const auto& bank : filters) {
        for (const auto& filter : bank) out.push_back(&filter);
    }
    for (const auto& w : gcn_weights) out.push_back(&w);
    if (train_embeddings) out.push_back(&label_embeddings);
    return out;
}

std::vector<std::string> ModelParams::trainable_names() const {
    std::vector<std::string> names;
    for (std::size_t w = 0; w < filters.size(); ++w) {
        for (std::size_t k = 0; k < filters[w].size(); ++k) {
            names.push_back("filter.h" + std::to_string(encoder.window_sizes[w]) + ".k" +
                            std::to_string(k));
        }
    }
    for (std::size_t l = 0; l < gcn_weights.size(); ++l) {
        names.push_back("gcn.W" + std::to_string(l));
    }
    if (train_embeddings) names.push_back("label_embeddings");
    return names;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams out;
    out.encoder = encoder;
    out.gcn = gcn;
    out.train_embeddings = train_embeddings;
    out.filters.resize(filters.size());
    for (std::size_t w = 0; w < filters.size(); ++w) {
        for (const auto& filter : filters[w]) out.filters[w].emplace_back(filter.shape());
    }
    for (const auto& w : gcn_weights) out.gcn_weights.emplace_back(w.shape());
    out.label_embeddings = Tensor(label_embeddings.shape());
    return out;
}

namespace {

void fill_glorot(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
}

}  // namespace

ModelParams init_params(const EncoderConfig& encoder, const GcnConfig& gcn,
                        Tensor label_embeddings, std::uint64_t seed) {
    EncoderConfig enc = encoder;
    std::stable_sort(enc.window_sizes.begin(), enc.window_sizes.end());
    enc.validate();
    gcn.validate();
    if (gcn.output_dim != enc.embedding_size()) {
        throw ShapeError("gcn.output_dim " + std::to_string(gcn.output_dim) +
                         " must equal the encoder embedding size " +
                         std::to_string(enc.embedding_size()));
    }
    if (label_embeddings.rank() != 2 || label_embeddings.dim(1) != gcn.input_dim) {
        throw ShapeError("label embeddings " + label_embeddings.shape_str() +
                         " do not match gcn.input_dim " + std::to_string(gcn.input_dim));
    }

    ModelParams params;
    params.encoder = enc;
    params.gcn = gcn;
    params.label_embeddings = std::move(label_embeddings);

    Rng rng(seed);
    params.filters.resize(enc.window_sizes.size());
    for (std::size_t w = 0; w < enc.window_sizes.size(); ++w) {
        const std::size_t h = enc.window_sizes[w];
        for (std::size_t k = 0; k < enc.kernels_per_window; ++k) {
            Tensor filter({enc.max_items, h, enc.feature_dim});
            fill_glorot(filter, filter.size(), 1, rng);
            params.filters[w].push_back(std::move(filter));
        }
    }
    const auto dims = gcn.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Tensor w({dims[l], dims[l + 1]});
        fill_glorot(w, dims[l], dims[l + 1], rng);
        params.gcn_weights.push_back(std::move(w));
    }
    return params;
}

namespace {

constexpr char kModelMagic[4] = {'F', 'C', 'N', 'M'};
constexpr std::uint32_t kModelVersion = 1;

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

void write_tensor(std::ostream& out, const Tensor& t) {
    write_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i) {
        write_u32(out, static_cast<std::uint32_t>(t.dim(i)));
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = t[i];
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        write_u32(out, static_cast<std::uint32_t>(bits & 0xffffffffULL));
        write_u32(out, static_cast<std::uint32_t>(bits >> 32));
    }
}

Tensor read_tensor(std::istream& in) {
    const std::uint32_t rank = read_u32(in);
    if (rank == 0 || rank > 3) throw FormatError("model tensor has invalid rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = read_u32(in);
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const std::uint64_t lo = read_u32(in);
        const std::uint64_t hi = read_u32(in);
        const std::uint64_t bits = lo | (hi << 32);
        std::memcpy(&t[i], &bits, 8);
    }
    if (!in) throw FormatError("model file truncated");
    return t;
}

json encoder_to_json(const EncoderConfig& enc) {
    return json{{"window_sizes", enc.window_sizes},
                {"kernels_per_window", enc.kernels_per_window},
                {"max_items", enc.max_items},
                {"num_attributes", enc.num_attributes},
                {"feature_dim", enc.feature_dim}};
}

EncoderConfig encoder_from_json(const json& j) {
    EncoderConfig enc;
    enc.window_sizes = j.at("window_sizes").get<std::vector<std::size_t>>();
    enc.kernels_per_window = j.at("kernels_per_window").get<std::size_t>();
    enc.max_items = j.at("max_items").get<std::size_t>();
    enc.num_attributes = j.at("num_attributes").get<std::size_t>();
    enc.feature_dim = j.at("feature_dim").get<std::size_t>();
    return enc;
}

json gcn_to_json(const GcnConfig& gcn) {
    return json{{"input_dim", gcn.input_dim},
                {"hidden_dim", gcn.hidden_dim},
                {"output_dim", gcn.output_dim},
                {"num_layers", gcn.num_layers},
                {"final_activation", final_activation_name(gcn.final_activation)}};
}

GcnConfig gcn_from_json(const json& j) {
    GcnConfig gcn;
    gcn.input_dim = j.at("input_dim").get<std::size_t>();
    gcn.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    gcn.output_dim = j.at("output_dim").get<std::size_t>();
    gcn.num_layers = j.at("num_layers").get<std::size_t>();
    const std::string act = j.at("final_activation").get<std::string>();
    if (act == "softmax") {
        gcn.final_activation = FinalActivation::kSoftmax;
    } else if (act == "none") {
        gcn.final_activation = FinalActivation::kNone;
    } else {
        throw FormatError("unknown final_activation: " + act);
    }
    return gcn;
}

}  // namespace

void save_model(const ModelParams& params, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw FormatError("cannot write " + file.string());
    out.write(kModelMagic, 4);
    write_u32(out, kModelVersion);

    json meta;
    meta["encoder"] = encoder_to_json(params.encoder);
    meta["gcn"] = gcn_to_json(params.gcn);
    meta["train_embeddings"] = params.train_embeddings;
    const std::string blob = meta.dump();
    write_u32(out, static_cast<std::uint32_t>(blob.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));

    write_tensor(out, params.label_embeddings);
    for (const auto& bank : params.filters) {
        for (const auto& filter : bank) write_tensor(out, filter);
    }
    for (const auto& w : params.gcn_weights) write_tensor(out, w);
}

ModelParams load_model(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw FormatError("missing " + file.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kModelMagic, 4) != 0) {
        throw FormatError("model file has bad magic, expected FCNM");
    }
    if (read_u32(in) != kModelVersion) throw FormatError("model format version mismatch");

    const std::uint32_t blob_len = read_u32(in);
    std::string blob(blob_len, '\0');
    in.read(blob.data(), blob_len);
    if (!in) throw FormatError("model file truncated in config block");

    ModelParams params;
    try {
        const json meta = json::parse(blob);
        params.encoder = encoder_from_json(meta.at("encoder"));
        params.gcn = gcn_from_json(meta.at("gcn"));
        params.train_embeddings = meta.at("train_embeddings").get<bool>();
    } catch (const json::exception& e) {
        throw FormatError("model config block error: " + std::string(e.what()));
    }

    params.label_embeddings = read_tensor(in);
    params.filters.resize(params.encoder.window_sizes.size());
    for (std::size_t w = 0; w < params.filters.size(); ++w) {
        for (std::size_t k = 0; k < params.encoder.kernels_per_window; ++k) {
            params.filters[w].push_back(read_tensor(in));
        }
    }
    const auto dims = params.gcn.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        params.gcn_weights.push_back(read_tensor(in));
    }
    return params;
}

Tensor assemble_outfit_tensor(const Outfit& outfit, const Dataset& dataset,
                              std::size_t max_items) {
    if (outfit.item_ids.size() > max_items) {
        throw ShapeError("outfit " + outfit.outfit_id + " has " +
                         std::to_string(outfit.item_ids.size()) + " items, max_items is " +
                         std::to_string(max_items));
    }
    Tensor z({max_items, dataset.num_attributes, dataset.feature_dim});
    const std::size_t plane = dataset.num_attributes * dataset.feature_dim;
    for (std::size_t slot = 0; slot < outfit.item_ids.size(); ++slot) {
        const Tensor& features = dataset.item(outfit.item_ids[slot]).features;
        std::copy(features.data(), features.data() + plane, z.data() + slot * plane);
    }
    return z;
}

EncoderTrace encode_outfit(Tensor input, const ModelParams& params) {
    const EncoderConfig& enc = params.encoder;
    if (input.rank() != 3 || input.dim(0) != enc.max_items ||
        input.dim(1) != enc.num_attributes || input.dim(2) != enc.feature_dim) {
        throw ShapeError("encoder input " + input.shape_str() + " does not match config [" +
                         std::to_string(enc.max_items) + "x" + std::to_string(enc.num_attributes) +
                         "x" + std::to_string(enc.feature_dim) + "]");
    }
    EncoderTrace trace;
    trace.input = std::move(input);
    trace.embedding = Tensor({enc.embedding_size()});
    trace.pooled.resize(params.filters.size());
    std::size_t offset = 0;
    for (std::size_t w = 0; w < params.filters.size(); ++w) {
        for (const Tensor& filter : params.filters[w]) {
            const Tensor conv = conv_window(trace.input, filter);
            const MaxPool pooled = maxpool_positions(conv);
            trace.pooled[w].push_back(pooled);
            trace.embedding[offset++] = pooled.value;
        }
    }
    return trace;
}

void encode_outfit_backward(const EncoderTrace& trace, const ModelParams& params,
                            const Tensor& grad_embedding,
                            std::vector<std::vector<Tensor*>>& filter_grads) {
    const EncoderConfig& enc = params.encoder;
    const std::size_t rows = enc.num_attributes;
    const std::size_t width = enc.feature_dim;
    std::size_t offset = 0;
    for (std::size_t w = 0; w < params.filters.size(); ++w) {
        const std::size_t h = enc.window_sizes[w];
        for (std::size_t k = 0; k < params.filters[w].size(); ++k) {
            const double g = grad_embedding[offset++];
            if (g == 0.0) continue;
            const std::size_t t = trace.pooled[w][k].index;  // argmax position
            Tensor& grad_filter = *filter_grads[w][k];
            for (std::size_t c = 0; c < enc.max_items; ++c) {
                const double* zbase = trace.input.data() + (c * rows + t) * width;
                double* gbase = grad_filter.data() + c * h * width;
                for (std::size_t i = 0; i < h * width; ++i) gbase[i] += g * zbase[i];
            }
        }
    }
}

GcnTrace gcn_run(const Tensor& embeddings, const Tensor& a_hat,
                 const std::vector<Tensor>& weights, FinalActivation final_activation) {
    GcnTrace trace;
    trace.final_activation = final_activation;
    Tensor x = embeddings;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        trace.inputs.push_back(x);
        Tensor propagated = matmul(a_hat, x);
        Tensor pre_act = matmul(propagated, weights[l]);
        if (l + 1 < weights.size()) {
            x = relu(pre_act);
        } else if (final_activation == FinalActivation::kSoftmax) {
            x = softmax_rows(pre_act);
        } else {
            x = pre_act;
        }
        trace.propagated.push_back(std::move(propagated));
        trace.pre_act.push_back(std::move(pre_act));
    }
    trace.output = std::move(x);
    return trace;
}

Tensor gcn_forward(const Tensor& embeddings, const Tensor& a_hat,
                   const std::vector<Tensor>& weights, FinalActivation final_activation) {
    return gcn_run(embeddings, a_hat, weights, final_activation).output;
}

void gcn_backward(const GcnTrace& trace, const Tensor& a_hat,
                  const std::vector<Tensor>& weights, const Tensor& grad_output,
                  const std::vector<Tensor*>& weight_grads, Tensor* grad_input) {
    Tensor grad = grad_output;  // d loss / d X_{l+1}
    for (std::size_t l = weights.size(); l-- > 0;) {
        Tensor grad_pre;
        if (l + 1 == weights.size()) {
            grad_pre = trace.final_activation == FinalActivation::kSoftmax
                           ? softmax_rows_backward(trace.output, grad)
                           : grad;
        } else {
            grad_pre = relu_backward(trace.pre_act[l], grad);
        }
        Tensor grad_propagated(trace.propagated[l].shape());
        matmul_backward(trace.propagated[l], weights[l], grad_pre, grad_propagated,
                        *weight_grads[l]);
        Tensor grad_a_scratch(a_hat.shape());
        Tensor grad_x(trace.inputs[l].shape());
        matmul_backward(a_hat, trace.inputs[l], grad_propagated, grad_a_scratch, grad_x);
        grad = std::move(grad_x);
    }
    if (grad_input) *grad_input = std::move(grad);
}

Tensor score_labels(const Tensor& classifiers, const Tensor& embedding) {
    if (classifiers.rank() != 2 || embedding.rank() != 1 ||
        classifiers.dim(1) != embedding.dim(0)) {
        throw ShapeError("score: incompatible shapes " + classifiers.shape_str() + " and " +
                         embedding.shape_str());
    }
    const std::size_t n = classifiers.dim(0), f = classifiers.dim(1);
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = classifiers.data() + i * f;
        double acc = 0.0;
        for (std::size_t j = 0; j < f; ++j) acc += row[j] * embedding[j];
        out[i] = acc;
    }
    return out;
}

void score_backward(const Tensor& classifiers, const Tensor& embedding,
                    const Tensor& grad_scores, Tensor& grad_classifiers,
                    Tensor& grad_embedding) {
    const std::size_t n = classifiers.dim(0), f = classifiers.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad_scores[i];
        if (g == 0.0) continue;
        const double* row = classifiers.data() + i * f;
        double* grow = grad_classifiers.data() + i * f;
        for (std::size_t j = 0; j < f; ++j) {
            grow[j] += g * embedding[j];
            grad_embedding[j] += g * row[j];
        }
    }
}

Tensor Model::predict_matrix(const std::vector<const Outfit*>& outfits) const {
    if (outfits.empty()) throw ValidationError("predict_matrix: empty outfit list");
    Tensor first = predict(*outfits.front());
    Tensor out({outfits.size(), first.dim(0)});
    std::copy(first.data(), first.data() + first.size(), out.data());
    for (std::size_t i = 1; i < outfits.size(); ++i) {
        const Tensor scores = predict(*outfits[i]);
        std::copy(scores.data(), scores.data() + scores.size(), out.data() + i * out.dim(1));
    }
    return out;
}

FcnModel::FcnModel(const Dataset& dataset, Tensor a_hat, ModelParams params)
    : dataset_(&dataset), a_hat_(std::move(a_hat)), params_(std::move(params)) {
    const std::size_t n = dataset.num_labels();
    if (a_hat_.rank() != 2 || a_hat_.dim(0) != n || a_hat_.dim(1) != n) {
        throw ShapeError("a_hat " + a_hat_.shape_str() + " does not match " + std::to_string(n) +
                         " labels");
    }
    if (params_.label_embeddings.dim(0) != n) {
        throw ShapeError("label embeddings " + params_.label_embeddings.shape_str() +
                         " do not match " + std::to_string(n) + " labels");
    }
    if (params_.encoder.num_attributes != dataset.num_attributes ||
        params_.encoder.feature_dim != dataset.feature_dim) {
        throw ShapeError("encoder config expects [" +
                         std::to_string(params_.encoder.num_attributes) + "x" +
                         std::to_string(params_.encoder.feature_dim) + "] features, dataset has [" +
                         std::to_string(dataset.num_attributes) + "x" +
                         std::to_string(dataset.feature_dim) + "]");
    }
}

Tensor FcnModel::predict(const Outfit& outfit) const {
    const Tensor classifiers = gcn_forward(params_.label_embeddings, a_hat_, params_.gcn_weights,
                                           params_.gcn.final_activation);
    const EncoderTrace trace =
        encode_outfit(assemble_outfit_tensor(outfit, *dataset_, params_.encoder.max_items),
                      params_);
    return score_labels(classifiers, trace.embedding);
}

Tensor FcnModel::predict_matrix(const std::vector<const Outfit*>& outfits) const {
    if (outfits.empty()) throw ValidationError("predict_matrix: empty outfit list");
    // The classifier matrix only depends on the parameters; build it once.
    const Tensor classifiers = gcn_forward(params_.label_embeddings, a_hat_, params_.gcn_weights,
                                           params_.gcn.final_activation);
    Tensor out({outfits.size(), dataset_->num_labels()});
    for (std::size_t i = 0; i < outfits.size(); ++i) {
        const EncoderTrace trace = encode_outfit(
            assemble_outfit_tensor(*outfits[i], *dataset_, params_.encoder.max_items), params_);
        const Tensor scores = score_labels(classifiers, trace.embedding);
        std::copy(scores.data(), scores.data() + scores.size(), out.data() + i * out.dim(1));
    }
    return out;
}

void FcnModel::assign_parameters(const std::vector<Tensor>& values) {
    auto targets = params_.trainable();
    if (values.size() != targets.size()) {
        throw ShapeError("assign_parameters: got " + std::to_string(values.size()) +
                         " tensors, model has " + std::to_string(targets.size()));
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!targets[i]->same_shape(values[i])) {
            throw ShapeError("assign_parameters: tensor " + std::to_string(i) + " is " +
                             values[i].shape_str() + ", expected " + targets[i]->shape_str());
        }
        *targets[i] = values[i];
    }
}

}  // namespace fcn
