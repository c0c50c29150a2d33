#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fcn/data.hpp"
#include "fcn/label_graph.hpp"
#include "fcn/metrics.hpp"
#include "fcn/model.hpp"
#include "fcn/tensor.hpp"

namespace fcn {

struct TrainConfig {
    std::size_t batch_size = 10;
    double lr0 = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-5;  // lambda
    double lr_gamma = 0.9;       // per-epoch exponential decay
    std::size_t max_epochs = 200;
    std::size_t patience = 10;   // epochs without validation mAP improvement
    double min_delta = 1e-4;
    std::uint64_t seed = 0;

    double lr_at(std::size_t epoch) const;
    void validate() const;
};

struct LossResult {
    double value = 0.0;
    Tensor grad;  // d loss / d scores = sigmoid(scores) - targets
};

// Multi-label binary cross-entropy over raw scores, computed in the
// log-sum-exp stable form. Targets must be exactly 0 or 1.
LossResult bce_loss(const Tensor& scores, const Tensor& targets);

Tensor labels_to_tensor(const std::vector<std::uint8_t>& labels);

// J = mean batch BCE + (lambda/2) * ||theta||^2 over the trainable tensors.
double objective(const Model& model, const std::vector<const Outfit*>& batch,
                 double weight_decay);

// v <- momentum * v + grad; theta <- theta - lr0 * gamma^epoch * v.
// Throws NumericError naming the tensor on non-finite gradients.
void sgd_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
              std::vector<Tensor>& velocity, const TrainConfig& config, std::size_t epoch,
              const std::vector<std::string>& names);

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_map = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;
    double best_val_map = 0.0;
};

// Seeded shuffle, minibatches, SGD with momentum and weight decay, per-epoch
// validation mAP, early stop on patience. The model is left holding the
// best-validation parameters.
TrainResult train_model(Model& model, const std::vector<const Outfit*>& train_set,
                        const std::vector<const Outfit*>& val_set, const TrainConfig& config);

struct FcnTrainRun {
    FcnModel model;
    TrainResult result;
};

// Builds the model from configs and trains it on the labeled training split.
FcnTrainRun train_fcn(const Dataset& dataset, const LabelGraph& graph,
                      const EncoderConfig& encoder, const GcnConfig& gcn,
                      const TrainConfig& config, Tensor label_embeddings,
                      bool train_embeddings = false);

// Comparison baseline: scores = W2 * ReLU(W1 * mean(features over items and
// attributes)), trained with the same loop and optimizer.
class LinearBaseline : public Model {
public:
    LinearBaseline(const Dataset& dataset, std::size_t hidden_dim, std::uint64_t seed);

    std::vector<Tensor*> parameters() override { return {&w1_, &w2_}; }
    std::vector<const Tensor*> parameters() const override { return {&w1_, &w2_}; }
    std::vector<std::string> parameter_names() const override {
        return {"linear.W1", "linear.W2"};
    }
    double batch_gradient(const std::vector<const Outfit*>& batch,
                          const std::vector<Tensor*>& grads) const override;
    Tensor predict(const Outfit& outfit) const override;

    Tensor mean_features(const Outfit& outfit) const;

private:
    const Dataset* dataset_;
    Tensor w1_;  // [hidden x d]
    Tensor w2_;  // [N x hidden]
};

struct LinearTrainRun {
    LinearBaseline model;
    TrainResult result;
};

LinearTrainRun train_linear_baseline(const Dataset& dataset, const TrainConfig& config,
                                     std::size_t hidden_dim);

// Scores the labeled outfits of a split.
EvalResult evaluate_split(const Model& model, const Dataset& dataset, Split split);

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::filesystem::path& file);

}  // namespace fcn
