#include "halluscope/lens.hpp"

#include <cmath>
#include <stdexcept>

namespace halluscope {

std::vector<double> VarProfile::flatten(const LayerRange& range) const {
    range.validate(values.rows);
    std::vector<double> out;
    out.reserve(static_cast<size_t>(range.count()) * values.cols);
    for (int l = range.first; l <= range.last; ++l)
        for (int h = 0; h < values.cols; ++h) out.push_back(values.at(l, h));
    return out;
}

VarProfile var(const AttentionRecord& record, int num_image_tokens) {
    const int num_layers = static_cast<int>(record.post.size());
    if (num_layers == 0) throw std::invalid_argument("record has no post-softmax rows");
    if (num_image_tokens > record.seq_len)
        throw std::invalid_argument("num_image_tokens exceeds attention row length");

    VarProfile profile;
    profile.token_pos = record.step;
    profile.values = Matrix(num_layers, record.post[0].rows);
    for (int l = 0; l < num_layers; ++l) {
        const Matrix& rows = record.post[l];
        if (rows.cols < num_image_tokens)
            throw std::invalid_argument("num_image_tokens exceeds attention row length");
        for (int h = 0; h < rows.rows; ++h) {
            double s = 0.0;
            for (int i = 0; i < num_image_tokens; ++i) s += rows.at(h, i);
            profile.values.at(l, h) = s;
        }
    }
    return profile;
}

double svar(const VarProfile& profile, const LayerRange& range) {
    range.validate(profile.num_layers());
    double total = 0.0;
    for (int l = range.first; l <= range.last; ++l)
        for (int h = 0; h < profile.num_heads(); ++h) total += profile.values.at(l, h);
    return total / profile.num_heads();
}

LensDistribution lens_decode(std::span<const double> hidden, const Matrix& unembedding,
                             const LayerNormParams* final_norm) {
    if (static_cast<int>(hidden.size()) != unembedding.cols)
        throw std::invalid_argument("lens_decode: hidden dim != projector dim");
    for (double v : hidden)
        if (!std::isfinite(v)) throw std::invalid_argument("lens_decode: non-finite hidden state");

    LensDistribution dist;
    if (final_norm) {
        const std::vector<double> normed = layernorm(hidden, *final_norm);
        dist.probs = matvec(unembedding, normed);
    } else {
        dist.probs = matvec(unembedding, hidden);
    }
    softmax_inplace(dist.probs);
    dist.argmax_id = argmax(dist.probs);
    return dist;
}

std::vector<std::vector<int>> lens_decode_image_tokens(const AttentionRecord& record,
                                                       const Matrix& unembedding,
                                                       const LayerNormParams* final_norm) {
    if (record.image_hidden.empty())
        throw std::invalid_argument("image hidden states were not captured (enable image_hidden capture)");
    const int num_layers = static_cast<int>(record.image_hidden.size());
    std::vector<std::vector<int>> grid(num_layers);
    for (int l = 0; l < num_layers; ++l) {
        const Matrix& states = record.image_hidden[l];
        grid[l].resize(states.rows);
        for (int i = 0; i < states.rows; ++i)
            grid[l][i] = lens_decode(states.row_span(i), unembedding, final_norm).argmax_id;
    }
    return grid;
}

std::vector<double> mhsa_contribution(const AttentionRecord& record, const Matrix& unembedding,
                                      int target_token_id, const LayerNormParams* final_norm) {
    if (record.mhsa_out.empty())
        throw std::invalid_argument("MHSA sublayer outputs were not captured (enable mhsa_output capture)");
    if (target_token_id < 0 || target_token_id >= unembedding.rows)
        throw std::invalid_argument("target token id out of vocabulary range");
    std::vector<double> contribution(record.mhsa_out.rows);
    for (int l = 0; l < record.mhsa_out.rows; ++l)
        contribution[l] =
            lens_decode(record.mhsa_out.row_span(l), unembedding, final_norm).probs[target_token_id];
    return contribution;
}

std::vector<HeadHeatmap> head_heatmaps(const AttentionRecord& record, int num_image_tokens,
                                       std::span<const int> layers) {
    const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(num_image_tokens))));
    const bool square = g * g == num_image_tokens;
    const int grid_rows = square ? g : 1;
    const int grid_cols = square ? g : num_image_tokens;

    std::vector<HeadHeatmap> maps;
    for (int l : layers) {
        if (l < 0 || l >= static_cast<int>(record.post.size()))
            throw std::invalid_argument("heatmap layer out of range");
        const Matrix& rows = record.post[l];
        if (rows.cols < num_image_tokens)
            throw std::invalid_argument("num_image_tokens exceeds attention row length");
        for (int h = 0; h < rows.rows; ++h) {
            HeadHeatmap hm;
            hm.layer = l;
            hm.head = h;
            hm.grid = Matrix(grid_rows, grid_cols);
            for (int i = 0; i < num_image_tokens; ++i)
                hm.grid.data[i] = rows.at(h, i);  // row-major fill mirrors the image scan order
            maps.push_back(std::move(hm));
        }
    }
    return maps;
}

}  // namespace halluscope
