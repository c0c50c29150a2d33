#include "fcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "fcn/errors.hpp"
#include "fcn/rng.hpp"

namespace fcn {

double TrainConfig::lr_at(std::size_t epoch) const {
    return lr0 * std::pow(lr_gamma, static_cast<double>(epoch));
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw ValidationError("train.batch_size must be >= 1");
    if (lr0 < 0.0) throw ValidationError("train.lr0 must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("train.momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ValidationError("train.weight_decay must be >= 0");
    if (lr_gamma <= 0.0 || lr_gamma > 1.0) throw ValidationError("train.lr_gamma must be in (0, 1]");
    if (max_epochs == 0) throw ValidationError("train.max_epochs must be >= 1");
}

LossResult bce_loss(const Tensor& scores, const Tensor& targets) {
    if (!scores.same_shape(targets)) {
        throw ShapeError("bce_loss: scores " + scores.shape_str() + " vs targets " +
                         targets.shape_str());
    }
    LossResult out;
    out.grad = Tensor(scores.shape());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double y = targets[i];
        if (y != 0.0 && y != 1.0) {
            throw ValidationError("bce_loss: target " + std::to_string(y) + " is not binary");
        }
        const double x = scores[i];
        // max(x, 0) - x*y + log(1 + exp(-|x|))
        out.value += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
        const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                    : std::exp(x) / (1.0 + std::exp(x));
        out.grad[i] = sig - y;
    }
    return out;
}

Tensor labels_to_tensor(const std::vector<std::uint8_t>& labels) {
    Tensor out({labels.size()});
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] ? 1.0 : 0.0;
    return out;
}

double objective(const Model& model, const std::vector<const Outfit*>& batch,
                 double weight_decay) {
    if (batch.empty()) throw ValidationError("objective: empty batch");
    double data_loss = 0.0;
    for (const Outfit* outfit : batch) {
        data_loss += bce_loss(model.predict(*outfit), labels_to_tensor(outfit->labels)).value;
    }
    data_loss /= static_cast<double>(batch.size());

    double reg = 0.0;
    for (const Tensor* t : model.parameters()) reg += squared_norm(*t);
    return data_loss + 0.5 * weight_decay * reg;
}

void sgd_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
              std::vector<Tensor>& velocity, const TrainConfig& config, std::size_t epoch,
              const std::vector<std::string>& names) {
    const double lr = config.lr_at(epoch);
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (!grads[t].all_finite()) {
            const std::string name = t < names.size() ? names[t] : std::to_string(t);
            throw NumericError("non-finite gradient in tensor " + name);
        }
        Tensor& v = velocity[t];
        Tensor& p = *params[t];
        for (std::size_t i = 0; i < p.size(); ++i) {
            v[i] = config.momentum * v[i] + grads[t][i];
            p[i] -= lr * v[i];
        }
    }
}

namespace {

double validation_map(const Model& model, const std::vector<const Outfit*>& val_set) {
    const Tensor scores = model.predict_matrix(val_set);
    std::vector<std::uint8_t> labels;
    labels.reserve(scores.size());
    for (const Outfit* outfit : val_set) {
        labels.insert(labels.end(), outfit->labels.begin(), outfit->labels.end());
    }
    return evaluate_scores(scores, labels).map;
}

std::vector<Tensor> snapshot(const std::vector<Tensor*>& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Tensor* p : params) out.push_back(*p);
    return out;
}

void restore(const std::vector<Tensor*>& params, const std::vector<Tensor>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = values[i];
}

}  // namespace

TrainResult train_model(Model& model, const std::vector<const Outfit*>& train_set,
                        const std::vector<const Outfit*>& val_set, const TrainConfig& config) {
    config.validate();
    if (train_set.empty()) throw ValidationError("training split is empty");
    if (val_set.empty()) throw ValidationError("validation split is empty");

    const auto params = model.parameters();
    const auto names = model.parameter_names();
    std::vector<Tensor> velocity;
    std::vector<Tensor> grads;
    for (const Tensor* p : params) {
        velocity.emplace_back(p->shape());
        grads.emplace_back(p->shape());
    }

    TrainResult result;
    result.best_val_map = -std::numeric_limits<double>::infinity();
    std::vector<Tensor> best = snapshot(params);
    std::size_t stall = 0;

    Rng shuffle_rng(config.seed);
    std::vector<const Outfit*> order(train_set);

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            const std::vector<const Outfit*> batch(order.begin() + start, order.begin() + end);

            for (auto& g : grads) g.fill(0.0);
            std::vector<Tensor*> grad_ptrs;
            for (auto& g : grads) grad_ptrs.push_back(&g);
            const double batch_loss = model.batch_gradient(batch, grad_ptrs);
            epoch_loss += batch_loss * static_cast<double>(batch.size());

            // Eq-6 style L2 term enters through the analytic gradient.
            if (config.weight_decay > 0.0) {
                for (std::size_t t = 0; t < params.size(); ++t) {
                    axpy(config.weight_decay, *params[t], grads[t]);
                }
            }
            sgd_step(params, grads, velocity, config, epoch, names);
        }
        epoch_loss /= static_cast<double>(order.size());

        const double val_map = validation_map(model, val_set);
        result.history.push_back({epoch, epoch_loss, val_map, config.lr_at(epoch)});

        if (val_map > result.best_val_map + config.min_delta) {
            result.best_val_map = val_map;
            result.best_epoch = epoch;
            best = snapshot(params);
            stall = 0;
        } else {
            ++stall;
            if (stall >= config.patience) break;
        }
    }

    restore(params, best);
    return result;
}

double FcnModel::batch_gradient(const std::vector<const Outfit*>& batch,
                                const std::vector<Tensor*>& grads) const {
    if (batch.empty()) throw ValidationError("batch_gradient: empty batch");
    const double scale = 1.0 / static_cast<double>(batch.size());

    // Map the flat gradient list back onto the parameter structure.
    const std::size_t num_windows = params_.filters.size();
    const std::size_t kernels = params_.encoder.kernels_per_window;
    std::vector<std::vector<Tensor*>> filter_grads(num_windows);
    std::size_t cursor = 0;
    for (std::size_t w = 0; w < num_windows; ++w) {
        for (std::size_t k = 0; k < kernels; ++k) filter_grads[w].push_back(grads[cursor++]);
    }
    std::vector<Tensor*> weight_grads;
    for (std::size_t l = 0; l < params_.gcn_weights.size(); ++l) {
        weight_grads.push_back(grads[cursor++]);
    }
    Tensor* embedding_grad = params_.train_embeddings ? grads[cursor++] : nullptr;

    // The classifier matrix is shared across the batch: run the GCN once and
    // accumulate its output gradient over all examples.
    const GcnTrace gcn_trace = gcn_run(params_.label_embeddings, a_hat_, params_.gcn_weights,
                                       params_.gcn.final_activation);
    Tensor grad_classifiers(gcn_trace.output.shape());

    double loss = 0.0;
    for (const Outfit* outfit : batch) {
        const EncoderTrace enc_trace = encode_outfit(
            assemble_outfit_tensor(*outfit, *dataset_, params_.encoder.max_items), params_);
        const Tensor scores = score_labels(gcn_trace.output, enc_trace.embedding);
        LossResult bce = bce_loss(scores, labels_to_tensor(outfit->labels));
        loss += bce.value;

        for (std::size_t i = 0; i < bce.grad.size(); ++i) bce.grad[i] *= scale;
        Tensor grad_embedding({enc_trace.embedding.dim(0)});
        score_backward(gcn_trace.output, enc_trace.embedding, bce.grad, grad_classifiers,
                       grad_embedding);
        encode_outfit_backward(enc_trace, params_, grad_embedding, filter_grads);
    }

    gcn_backward(gcn_trace, a_hat_, params_.gcn_weights, grad_classifiers, weight_grads,
                 embedding_grad);
    return loss * scale;
}

FcnTrainRun train_fcn(const Dataset& dataset, const LabelGraph& graph,
                      const EncoderConfig& encoder, const GcnConfig& gcn,
                      const TrainConfig& config, Tensor label_embeddings,
                      bool train_embeddings) {
    ModelParams params = init_params(encoder, gcn, std::move(label_embeddings), config.seed);
    params.train_embeddings = train_embeddings;
    FcnTrainRun run{FcnModel(dataset, graph.normalized, std::move(params)), TrainResult{}};
    run.result = train_model(run.model, dataset.labeled_outfits_in(Split::kTrain),
                             dataset.labeled_outfits_in(Split::kVal), config);
    return run;
}

LinearBaseline::LinearBaseline(const Dataset& dataset, std::size_t hidden_dim,
                               std::uint64_t seed)
    : dataset_(&dataset),
      w1_({hidden_dim, dataset.feature_dim}),
      w2_({dataset.num_labels(), hidden_dim}) {
    if (hidden_dim == 0) throw ValidationError("baseline hidden_dim must be >= 1");
    Rng rng(seed);
    const double limit1 = std::sqrt(6.0 / static_cast<double>(dataset.feature_dim + hidden_dim));
    for (std::size_t i = 0; i < w1_.size(); ++i) w1_[i] = rng.uniform(-limit1, limit1);
    const double limit2 = std::sqrt(6.0 / static_cast<double>(hidden_dim + dataset.num_labels()));
    for (std::size_t i = 0; i < w2_.size(); ++i) w2_[i] = rng.uniform(-limit2, limit2);
}

Tensor LinearBaseline::mean_features(const Outfit& outfit) const {
    Tensor mean({dataset_->feature_dim});
    const std::size_t rows = dataset_->num_attributes;
    for (const auto& id : outfit.item_ids) {
        const Tensor& f = dataset_->item(id).features;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* base = f.data() + r * dataset_->feature_dim;
            for (std::size_t k = 0; k < dataset_->feature_dim; ++k) mean[k] += base[k];
        }
    }
    const double denom = static_cast<double>(outfit.item_ids.size() * rows);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] /= denom;
    return mean;
}

Tensor LinearBaseline::predict(const Outfit& outfit) const {
    return score_labels(w2_, relu(score_labels(w1_, mean_features(outfit))));
}

double LinearBaseline::batch_gradient(const std::vector<const Outfit*>& batch,
                                      const std::vector<Tensor*>& grads) const {
    if (batch.empty()) throw ValidationError("batch_gradient: empty batch");
    const double scale = 1.0 / static_cast<double>(batch.size());
    Tensor& grad_w1 = *grads[0];
    Tensor& grad_w2 = *grads[1];

    double loss = 0.0;
    for (const Outfit* outfit : batch) {
        const Tensor x = mean_features(*outfit);
        const Tensor pre = score_labels(w1_, x);
        const Tensor hidden = relu(pre);
        const Tensor scores = score_labels(w2_, hidden);
        LossResult bce = bce_loss(scores, labels_to_tensor(outfit->labels));
        loss += bce.value;

        for (std::size_t i = 0; i < bce.grad.size(); ++i) bce.grad[i] *= scale;
        Tensor grad_hidden({hidden.dim(0)});
        score_backward(w2_, hidden, bce.grad, grad_w2, grad_hidden);
        const Tensor grad_pre = relu_backward(pre, grad_hidden);
        Tensor grad_x({x.dim(0)});
        score_backward(w1_, x, grad_pre, grad_w1, grad_x);
    }
    return loss * scale;
}

LinearTrainRun train_linear_baseline(const Dataset& dataset, const TrainConfig& config,
                                     std::size_t hidden_dim) {
    LinearTrainRun run{LinearBaseline(dataset, hidden_dim, config.seed), TrainResult{}};
    run.result = train_model(run.model, dataset.labeled_outfits_in(Split::kTrain),
                             dataset.labeled_outfits_in(Split::kVal), config);
    return run;
}

EvalResult evaluate_split(const Model& model, const Dataset& dataset, Split split) {
    const auto outfits = dataset.labeled_outfits_in(split);
    if (outfits.empty()) {
        throw ValidationError(std::string("no labeled outfits in split ") + split_name(split));
    }
    const Tensor scores = model.predict_matrix(outfits);
    std::vector<std::uint8_t> labels;
    labels.reserve(scores.size());
    for (const Outfit* outfit : outfits) {
        labels.insert(labels.end(), outfit->labels.begin(), outfit->labels.end());
    }
    return evaluate_scores(scores, labels);
}

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw FormatError("cannot write " + file.string());
    out << "epoch,train_loss,val_mAP,lr\n";
    char buf[128];
    for (const auto& row : history) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", row.epoch, row.train_loss,
                      row.val_map, row.lr);
        out << buf;
    }
}

}  // namespace fcn
