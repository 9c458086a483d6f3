// Shared helpers for the unit and acceptance suites.
#pragma once

#include <vector>

#include "halluscope/model.hpp"
#include "halluscope/rng.hpp"

namespace halluscope::testing {

inline ModelConfig tiny_config(uint64_t seed = 42, int layers = 3, int heads = 4, int dim = 32,
                               int vocab = 40, int image_tokens = 4, int max_seq = 48) {
    ModelConfig c;
    c.num_layers = layers;
    c.num_heads = heads;
    c.model_dim = dim;
    c.vocab_size = vocab;
    c.num_image_tokens = image_tokens;
    c.max_seq_len = max_seq;
    c.rng_seed = seed;
    return c;
}

inline Matrix random_embeddings(Rng& rng, int n, int d, double scale = 1.0) {
    Matrix m(n, d);
    for (double& v : m.data) v = rng.uniform(-scale, scale);
    return m;
}

inline std::vector<int> random_token_ids(Rng& rng, int length, int vocab_size) {
    std::vector<int> ids(length);
    for (int& id : ids) id = static_cast<int>(rng.below(vocab_size));
    return ids;
}

/// A synthetic attention record with valid softmax rows (for lens tests that
/// do not need a real forward pass).
inline AttentionRecord random_record(Rng& rng, int layers, int heads, int seq_len, int n) {
    AttentionRecord rec;
    rec.step = 0;
    rec.seq_len = seq_len;
    rec.num_image_tokens = n;
    rec.post.resize(layers);
    for (int l = 0; l < layers; ++l) {
        Matrix rows(heads, seq_len);
        for (int h = 0; h < heads; ++h) {
            for (int j = 0; j < seq_len; ++j) rows.at(h, j) = rng.uniform(-4.0, 4.0);
            softmax_inplace(rows.row_span(h));
        }
        rec.post[l] = std::move(rows);
    }
    return rec;
}

}  // namespace halluscope::testing
