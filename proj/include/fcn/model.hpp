#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fcn/data.hpp"
#include "fcn/tensor.hpp"

namespace fcn {

struct EncoderConfig {
    std::vector<std::size_t> window_sizes{1, 2, 4, 6, 8};  // h_j, kept ascending
    std::size_t kernels_per_window = 24;                   // K
    std::size_t max_items = 10;                            // n_max
    std::size_t num_attributes = 14;                       // N_a
    std::size_t feature_dim = 512;                         // d

    // F = K * |window_sizes|
    std::size_t embedding_size() const { return kernels_per_window * window_sizes.size(); }
    void validate() const;
};

enum class FinalActivation { kSoftmax, kNone };

const char* final_activation_name(FinalActivation a);

struct GcnConfig {
    std::size_t input_dim = 100;   // C
    std::size_t hidden_dim = 200;  // H
    std::size_t output_dim = 120;  // F, must equal the encoder embedding size
    std::size_t num_layers = 2;
    FinalActivation final_activation = FinalActivation::kSoftmax;

    // {C, H, ..., H, F}: intermediate layers share the hidden width.
    std::vector<std::size_t> layer_dims() const;
    void validate() const;
};

struct ModelParams {
    EncoderConfig encoder;
    GcnConfig gcn;
    std::vector<std::vector<Tensor>> filters;  // [window][kernel], each [n_max x h x d]
    std::vector<Tensor> gcn_weights;           // num_layers tensors
    Tensor label_embeddings;                   // [N x C], frozen input unless unfrozen
    bool train_embeddings = false;

    std::size_t num_labels() const { return label_embeddings.dim(0); }
    std::vector<Tensor*> trainable();
    std::vector<const Tensor*> trainable() const;
    std::vector<std::string> trainable_names() const;
    ModelParams zeros_like() const;  // same structure, zero data (grads, velocity)
};

// Glorot-style uniform init, deterministic under seed. Throws if the GCN
// output dimension disagrees with the encoder embedding size or the embedding
// matrix disagrees with input_dim.
ModelParams init_params(const EncoderConfig& encoder, const GcnConfig& gcn,
                        Tensor label_embeddings, std::uint64_t seed);

// model.bin: magic FCNM, version, JSON config block, raw tensors. Bit-exact.
void save_model(const ModelParams& params, const std::filesystem::path& file);
ModelParams load_model(const std::filesystem::path& file);

// Items stacked along the channel axis in outfit order, the remaining
// max_items - n channels all-zero.
Tensor assemble_outfit_tensor(const Outfit& outfit, const Dataset& dataset,
                              std::size_t max_items);

struct EncoderTrace {
    Tensor input;                              // [n_max x N_a x d]
    std::vector<std::vector<MaxPool>> pooled;  // [window][kernel]
    Tensor embedding;                          // g, [F]
};

// Per window size and kernel: conv_window then maxpool_positions; results
// concatenated window-major then kernel-major.
EncoderTrace encode_outfit(Tensor input, const ModelParams& params);

// Accumulates filter gradients into `filter_grads` (aligned with
// params.filters). Input features are frozen, so no input gradient.
void encode_outfit_backward(const EncoderTrace& trace, const ModelParams& params,
                            const Tensor& grad_embedding,
                            std::vector<std::vector<Tensor*>>& filter_grads);

struct GcnTrace {
    std::vector<Tensor> inputs;      // X_l entering each layer
    std::vector<Tensor> propagated;  // A_hat * X_l
    std::vector<Tensor> pre_act;     // A_hat * X_l * W_l
    Tensor output;                   // Z, [N x F]
    FinalActivation final_activation = FinalActivation::kSoftmax;
};

// Repeated propagation Z_l+1 = act(A_hat * Z_l * W_l) with ReLU between layers
// and final_activation (row-wise softmax or nothing) on the last.
GcnTrace gcn_run(const Tensor& embeddings, const Tensor& a_hat,
                 const std::vector<Tensor>& weights, FinalActivation final_activation);

Tensor gcn_forward(const Tensor& embeddings, const Tensor& a_hat,
                   const std::vector<Tensor>& weights, FinalActivation final_activation);

// Accumulates weight gradients; writes the embedding gradient when grad_input
// is non-null.
void gcn_backward(const GcnTrace& trace, const Tensor& a_hat,
                  const std::vector<Tensor>& weights, const Tensor& grad_output,
                  const std::vector<Tensor*>& weight_grads, Tensor* grad_input);

// Scores y_hat = Z * g.
Tensor score_labels(const Tensor& classifiers, const Tensor& embedding);
void score_backward(const Tensor& classifiers, const Tensor& embedding,
                    const Tensor& grad_scores, Tensor& grad_classifiers,
                    Tensor& grad_embedding);

// Minimal surface the optimizer loop and the evaluator need from a model.
class Model {
public:
    virtual ~Model() = default;
    virtual std::vector<Tensor*> parameters() = 0;
    virtual std::vector<const Tensor*> parameters() const = 0;
    virtual std::vector<std::string> parameter_names() const = 0;
    // Accumulates d(mean batch loss)/d(theta) into grads (aligned with
    // parameters()); returns the mean data loss over the batch.
    virtual double batch_gradient(const std::vector<const Outfit*>& batch,
                                  const std::vector<Tensor*>& grads) const = 0;
    virtual Tensor predict(const Outfit& outfit) const = 0;  // scores, [N]
    virtual Tensor predict_matrix(const std::vector<const Outfit*>& outfits) const;
};

class FcnModel : public Model {
public:
    FcnModel(const Dataset& dataset, Tensor a_hat, ModelParams params);

    ModelParams& params() { return params_; }
    const ModelParams& params() const { return params_; }
    const Tensor& a_hat() const { return a_hat_; }

    std::vector<Tensor*> parameters() override { return params_.trainable(); }
    std::vector<const Tensor*> parameters() const override { return params_.trainable(); }
    std::vector<std::string> parameter_names() const override {
        return params_.trainable_names();
    }
    double batch_gradient(const std::vector<const Outfit*>& batch,
                          const std::vector<Tensor*>& grads) const override;
    Tensor predict(const Outfit& outfit) const override;
    Tensor predict_matrix(const std::vector<const Outfit*>& outfits) const override;

    void assign_parameters(const std::vector<Tensor>& values);

private:
    const Dataset* dataset_;
    Tensor a_hat_;
    ModelParams params_;
};

}  // namespace fcn
