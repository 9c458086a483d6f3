// Heads-guided attention intervention: during inference, the pre-softmax
// scores that the current token assigns to image positions are raised by a
// balance factor times the head-mean of their absolute original values, in a
// configured layer range. Regions that many heads score strongly get the
// largest boost; softmax then renormalizes.
#pragma once

#include <string>
#include <vector>

#include "halluscope/layer_range.hpp"
#include "halluscope/model.hpp"

namespace halluscope {

struct InterventionConfig {
    LayerRange layers;
    double alpha = 0.5;
    bool apply_during_prefill = false;

    void validate() const {
        if (!(alpha >= 0.0) || !std::isfinite(alpha))
            throw std::invalid_argument("alpha must be finite and >= 0");
        if (layers.first < 0 || layers.last < layers.first)
            throw std::invalid_argument("intervention layer range invalid");
    }
};

/// Named presets with the published layer range and balance factor.
struct ConfigPreset {
    std::string name;
    LayerRange layers;
    double alpha;
};

const std::vector<ConfigPreset>& intervention_presets();
ConfigPreset preset_by_name(const std::string& name);

/// One row update: for every image position i (i < n) and every head h,
///   scores[h][i] += alpha * (1/H) * sum_h' |orig[h'][i]|
/// where orig is a snapshot taken before any head is modified (simultaneous
/// assignment; the result does not depend on head order). Positions >= n are
/// untouched. scores is H x row_len; when row_len < n only the covered
/// positions are boosted.
void apply_head_guided_boost(Matrix& scores, int num_image_tokens, double alpha);

/// Packages the boost as a model hook: fires only for layers inside
/// config.layers; rows other than the last are included only when
/// apply_during_prefill is set.
ScoreHook build_hook(const InterventionConfig& config, int model_num_layers);

}  // namespace halluscope
