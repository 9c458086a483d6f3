// Two-layer MLP classifier over flattened attention-ratio features, trained
// full-batch with cross-entropy and Adam. Grid search over hidden size and
// learning rate selects by test-split accuracy (ties go to the smaller
// hidden size, then to the earlier learning rate in the list).
#pragma once

#include <cstdint>
#include <vector>

#include "halluscope/detector.hpp"

namespace halluscope {

struct MlpHyperParams {
    std::vector<int> hidden_sizes = {64, 128, 256, 512};
    std::vector<double> learning_rates = {1e-2, 1e-3, 1e-4};
    int epochs = 200;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct MlpClassifier {
    int input_dim = 0;
    int hidden_dim = 0;
    LayerRange feature_range;  // layer range the features were flattened from
    double learning_rate = 0.0;
    uint64_t seed = 0;

    Matrix w1;                // hidden x input
    std::vector<double> b1;   // hidden
    Matrix w2;                // 2 x hidden (class 0 = hallucinated, 1 = real)
    std::vector<double> b2;   // 2

    // Adam state.
    Matrix m_w1, v_w1, m_w2, v_w2;
    std::vector<double> m_b1, v_b1, m_b2, v_b2;
    long step_count = 0;

    /// ReLU hidden layer, softmax output; returns {p_halluc, p_real}.
    std::vector<double> predict_proba(std::span<const double> features) const;
};

struct MlpGradients {
    Matrix w1, w2;
    std::vector<double> b1, b2;
};

MlpClassifier make_mlp(int input_dim, int hidden_dim, double learning_rate, uint64_t seed);

/// Mean cross-entropy over the batch; fills gradients when given.
double mlp_loss(const MlpClassifier& model, const std::vector<std::vector<double>>& features,
                const std::vector<int>& labels, MlpGradients* gradients);

void adam_update(MlpClassifier& model, const MlpGradients& gradients,
                 const MlpHyperParams& hyper);

struct MlpMetrics {
    double accuracy = 0.0;
    double auroc = 0.0;
    double recall = 0.0;  // real class at the argmax decision
};

/// Trains over the dataset's train split on features flattened from range;
/// grid search selects by test accuracy. Deterministic given seed.
MlpClassifier train_mlp(const DetectionDataset& dataset, const LayerRange& range,
                        const MlpHyperParams& hyper, uint64_t seed);

MlpMetrics evaluate_mlp(const MlpClassifier& model, const DetectionDataset& dataset,
                        bool on_train_split = false);

}  // namespace halluscope
