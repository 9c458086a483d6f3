// Hallucination detection over labeled object tokens: layer-range attention
// scoring, the image-hidden-state confidence baseline, ROC / precision-recall
// metrics, and the pooled one-tailed t-test. The positive class is always the
// real object token.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "halluscope/layer_range.hpp"
#include "halluscope/lens.hpp"

namespace halluscope {

enum class TokenLabel { real, hallucinated };

struct LabeledToken {
    std::string example_id;
    int token_pos = 0;
    TokenLabel label = TokenLabel::real;
    VarProfile profile;
    // Only populated when the source generation captured image hidden states.
    std::vector<Matrix> image_hidden;  // L matrices, n x d
    int object_token_id = -1;
    // Confidence baseline score carried through serialization when hidden
    // states are not stored alongside the profile.
    std::optional<double> internal_confidence_score;
};

struct DetectionDataset {
    std::vector<LabeledToken> tokens;
    std::vector<uint8_t> is_train;  // parallel to tokens

    int size() const { return static_cast<int>(tokens.size()); }
    std::vector<int> split_indices(bool train) const;
    /// Shuffled 8:2 assignment (train fraction rounded to the nearest token).
    void assign_split(uint64_t seed, double train_fraction = 0.8);
};

/// Per-token SVAR over the range; higher means more likely real.
std::vector<double> svar_score(const DetectionDataset& dataset, const LayerRange& range);

/// Max over (layer, image index) of the lens probability of the object token.
double internal_confidence(const LabeledToken& token, const Matrix& unembedding,
                           int object_token_id);

struct CurveReport {
    std::vector<double> thresholds;
    std::vector<double> fpr, tpr;             // ROC points per threshold
    std::vector<double> precision, recall;    // PR points per threshold
    double auroc = 0.0;
    double average_precision = 0.0;
    double accuracy_at_half = 0.0;  // score >= 0.5 predicts real
    double recall_at_half = 0.0;
};

/// Threshold-sweep curves with tied scores grouped, trapezoid AUROC, and
/// step-interpolated average precision. labels: true = real (positive).
CurveReport roc_pr(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 0.0;  // one-tailed, mean(real) > mean(hallucinated)
};

/// Pooled-variance two-sample t-test, df = n1 + n2 - 2.
TTestResult t_test(const std::vector<double>& real_scores,
                   const std::vector<double>& halluc_scores);

/// Regularized incomplete beta function I_x(a, b) (continued fraction).
double incomplete_beta(double a, double b, double x);

}  // namespace halluscope
