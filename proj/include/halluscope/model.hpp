// A minimal decoder-only multimodal transformer with deterministic weights,
// full attention recording, greedy decoding, and a pre-softmax score hook.
//
// Architecture: pre-norm blocks (LayerNorm -> MHSA -> residual -> LayerNorm
// -> GELU MLP with hidden 4d -> residual), learned absolute position
// embeddings added at every position (image positions included), and a final
// LayerNorm before the unembedding projection. There is no KV cache; every
// step recomputes the full sequence, which keeps the instrumentation simple.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "halluscope/matrix.hpp"

namespace halluscope {

struct ModelConfig {
    int num_layers = 0;        // L
    int num_heads = 0;         // H
    int model_dim = 0;         // d, must be divisible by H
    int vocab_size = 0;        // |V|
    int num_image_tokens = 0;  // n
    int max_seq_len = 0;
    uint64_t rng_seed = 0;
    int eos_token_id = -1;              // -1: generation never stops early
    std::vector<std::string> vocab;     // optional token strings, size |V| when present

    int head_dim() const { return model_dim / num_heads; }

    void validate() const;

    /// Token string for an id ("tok<i>" when no vocab table is set).
    std::string token_str(int id) const;

    /// Id of an exact token string, or -1.
    int token_id(const std::string& s) const;
};

struct LayerNormParams {
    std::vector<double> gamma;
    std::vector<double> beta;
};

struct LayerWeights {
    Matrix wq, wk, wv, wo;     // d x d each
    Matrix w1;                 // 4d x d
    std::vector<double> b1;    // 4d
    Matrix w2;                 // d x 4d
    std::vector<double> b2;    // d
    LayerNormParams ln1, ln2;
};

struct ModelWeights {
    ModelConfig config;
    Matrix embedding;      // |V| x d
    Matrix pos_embedding;  // max_seq_len x d
    Matrix unembedding;    // |V| x d, the projector applied before softmax
    LayerNormParams ln_f;
    std::vector<LayerWeights> layers;
};

/// Ordered model input: n image embeddings, m prompt token ids, generated ids.
struct TokenSequence {
    Matrix image_embeddings;              // n x d
    std::vector<int> prompt_token_ids;    // m ids
    std::vector<int> generated_token_ids;

    int num_image_tokens() const { return image_embeddings.rows; }
    /// Sequence length a_k = n + m + (#generated).
    int length() const {
        return image_embeddings.rows + static_cast<int>(prompt_token_ids.size()) +
               static_cast<int>(generated_token_ids.size());
    }
    /// Token id at a text position (position >= n); image positions have none.
    int token_id_at(int pos) const;
};

struct CaptureFlags {
    bool post_softmax = true;   // attention rows A(a_k, .) per (layer, head)
    bool pre_softmax = false;   // score rows S(a_k, .) as fed to softmax (after any hook)
    bool mhsa_output = false;   // per-layer MHSA sublayer output at the last position
    bool image_hidden = false;  // per-layer residual-stream states of image positions
};

/// Everything recorded for one forward step.
struct AttentionRecord {
    int step = 0;     // 0-based generation step index
    int seq_len = 0;  // a_k
    int num_image_tokens = 0;
    std::vector<Matrix> post;          // L matrices, H x a_k
    std::vector<Matrix> pre;           // L matrices, H x a_k; empty unless captured
    Matrix mhsa_out;                   // L x d; empty unless captured
    std::vector<Matrix> image_hidden;  // L matrices, n x d; empty unless captured
};

struct GenerationResult {
    std::vector<int> generated_token_ids;
    std::vector<AttentionRecord> records;        // one per generated token
    std::vector<std::vector<double>> step_logits;  // one row of |V| per generated token
};

/// Pre-softmax score-modification hook. The model calls fn once per
/// (layer, query row) with the H x (row+1) score matrix about to be fed to
/// softmax; fn may mutate it in place. By default only the last row of each
/// forward step is offered; apply_during_prefill extends the calls to every
/// earlier row (the rows a KV-cache prefill would process).
struct ScoreHookContext {
    int layer = 0;
    int step = 0;         // generation step of the enclosing forward
    int row = 0;          // query position, 0-based
    int seq_len = 0;      // a_k of the enclosing forward
    int num_image_tokens = 0;
    bool is_last_row = false;
};

struct ScoreHook {
    std::function<void(const ScoreHookContext&, Matrix& scores)> fn;
    bool apply_during_prefill = false;
};

struct StepOutput {
    std::vector<double> logits;  // next-token logits at the last position
    AttentionRecord record;
};

/// Deterministic random init: every matrix entry drawn uniform(-1/sqrt(d),
/// 1/sqrt(d)) from config.rng_seed and rounded to f32 so the in-memory values
/// round-trip the weight file bit-exactly. LayerNorm gains start at 1,
/// biases at 0.
ModelWeights init_model(const ModelConfig& config);

StepOutput forward_step(const ModelWeights& weights, const TokenSequence& seq,
                        const ScoreHook* hook, const CaptureFlags& capture);

/// Greedy decoding: argmax next token (lowest id on ties), stops at
/// eos_token_id (which is included in the output) or max_new_tokens.
GenerationResult greedy_decode(const ModelWeights& weights, const Matrix& image_embeddings,
                               const std::vector<int>& prompt_token_ids, int max_new_tokens,
                               const ScoreHook* hook, const CaptureFlags& capture);

/// LayerNorm with eps 1e-5.
void layernorm(std::span<const double> x, const LayerNormParams& p, std::span<double> out);
std::vector<double> layernorm(std::span<const double> x, const LayerNormParams& p);

double gelu(double x);

}  // namespace halluscope
