// Pure analysis functions over attention records and hidden states: visual
// attention ratio (VAR), its layer-range aggregate (SVAR), vocabulary
// decoding of intermediate hidden states, MHSA sublayer contribution, and
// per-head heatmaps over the image grid.
#pragma once

#include <span>
#include <vector>

#include "halluscope/layer_range.hpp"
#include "halluscope/model.hpp"

namespace halluscope {

/// L x H matrix of visual attention ratios for one generated token.
/// Flattened row-major it is the detector feature vector.
struct VarProfile {
    int token_pos = 0;
    Matrix values;  // L x H, each in [0, 1]

    int num_layers() const { return values.rows; }
    int num_heads() const { return values.cols; }
    std::vector<double> flatten(const LayerRange& range) const;
};

/// var[l][h] = sum of the last-row attention mass on the image positions.
VarProfile var(const AttentionRecord& record, int num_image_tokens);

/// (1/H) * sum over layers in range, heads of var[l][h].
double svar(const VarProfile& profile, const LayerRange& range);

/// A hidden state read as a vocabulary distribution.
struct LensDistribution {
    int layer = 0;
    int source_index = 0;  // image token index, or -1 for the MHSA output
    std::vector<double> probs;
    int argmax_id = 0;
};

/// softmax(W_V * hidden). When final_norm is given, the final LayerNorm is
/// applied to the hidden state first (off by default; the projector is
/// otherwise applied to the raw intermediate state).
LensDistribution lens_decode(std::span<const double> hidden, const Matrix& unembedding,
                             const LayerNormParams* final_norm = nullptr);

/// Grid of argmax token ids, one per (layer, image index). Requires image
/// hidden states captured on the record.
std::vector<std::vector<int>> lens_decode_image_tokens(const AttentionRecord& record,
                                                       const Matrix& unembedding,
                                                       const LayerNormParams* final_norm = nullptr);

/// Per-layer softmax(W_V * a^l)[target]; requires MHSA outputs captured.
std::vector<double> mhsa_contribution(const AttentionRecord& record, const Matrix& unembedding,
                                      int target_token_id,
                                      const LayerNormParams* final_norm = nullptr);

/// Attention mass over image tokens reshaped to g x g (g = sqrt(n) when n is
/// a perfect square, else 1 x n). Grid sum equals the VAR entry.
struct HeadHeatmap {
    int layer = 0;
    int head = 0;
    Matrix grid;
};

std::vector<HeadHeatmap> head_heatmaps(const AttentionRecord& record, int num_image_tokens,
                                       std::span<const int> layers);

}  // namespace halluscope
