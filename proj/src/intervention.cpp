#include "halluscope/intervention.hpp"

#include <cmath>
#include <stdexcept>

namespace halluscope {

const std::vector<ConfigPreset>& intervention_presets() {
    static const std::vector<ConfigPreset> presets = {
        {"llava-1.5", {5, 18}, 0.5},
        {"shikra", {3, 13}, 0.55},
        {"minigpt4", {3, 14}, 0.5},
    };
    return presets;
}

ConfigPreset preset_by_name(const std::string& name) {
    for (const auto& p : intervention_presets())
        if (p.name == name) return p;
    throw std::invalid_argument("unknown preset '" + name + "' (expected llava-1.5, shikra, or minigpt4)");
}

void apply_head_guided_boost(Matrix& scores, int num_image_tokens, double alpha) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be finite and >= 0");
    if (scores.rows <= 0 || scores.cols <= 0) throw std::invalid_argument("empty score matrix");
    if (num_image_tokens < 0) throw std::invalid_argument("num_image_tokens must be >= 0");
    if (alpha == 0.0) return;

    const int heads = scores.rows;
    const int covered = std::min(num_image_tokens, scores.cols);
    // Pass 1: head-mean absolute score per image position, from the
    // unmodified row. Pass 2: add. Simultaneous semantics.
    std::vector<double> boost(covered);
    for (int i = 0; i < covered; ++i) {
        double s = 0.0;
        for (int h = 0; h < heads; ++h) s += std::abs(scores.at(h, i));
        boost[i] = alpha * s / heads;
    }
    for (int h = 0; h < heads; ++h)
        for (int i = 0; i < covered; ++i) scores.at(h, i) += boost[i];
}

ScoreHook build_hook(const InterventionConfig& config, int model_num_layers) {
    config.validate();
    config.layers.validate(model_num_layers);
    ScoreHook hook;
    hook.apply_during_prefill = config.apply_during_prefill;
    const LayerRange range = config.layers;
    const double alpha = config.alpha;
    hook.fn = [range, alpha](const ScoreHookContext& ctx, Matrix& scores) {
        if (!range.contains(ctx.layer)) return;
        apply_head_guided_boost(scores, ctx.num_image_tokens, alpha);
    };
    return hook;
}

}  // namespace halluscope
