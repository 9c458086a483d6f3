#include "halluscope/model.hpp"

#include <cmath>
#include <stdexcept>

#include "halluscope/rng.hpp"

namespace halluscope {

void ModelConfig::validate() const {
    if (num_layers <= 0 || num_heads <= 0 || model_dim <= 0 || vocab_size <= 0 ||
        num_image_tokens <= 0 || max_seq_len <= 0)
        throw std::invalid_argument("model config: all dimensions must be positive");
    if (model_dim % num_heads != 0)
        throw std::invalid_argument("model config: model_dim must be divisible by num_heads");
    if (num_image_tokens >= max_seq_len)
        throw std::invalid_argument("model config: num_image_tokens must leave room for text");
    if (!vocab.empty() && static_cast<int>(vocab.size()) != vocab_size)
        throw std::invalid_argument("model config: vocab table size != vocab_size");
    if (eos_token_id >= vocab_size)
        throw std::invalid_argument("model config: eos_token_id out of range");
}

std::string ModelConfig::token_str(int id) const {
    if (id < 0 || id >= vocab_size) throw std::out_of_range("token id out of range");
    if (!vocab.empty()) return vocab[id];
    return "tok" + std::to_string(id);
}

int ModelConfig::token_id(const std::string& s) const {
    for (int i = 0; i < static_cast<int>(vocab.size()); ++i)
        if (vocab[i] == s) return i;
    return -1;
}

int TokenSequence::token_id_at(int pos) const {
    const int n = image_embeddings.rows;
    const int m = static_cast<int>(prompt_token_ids.size());
    if (pos < n) throw std::invalid_argument("image positions carry no token id");
    if (pos < n + m) return prompt_token_ids[pos - n];
    return generated_token_ids[pos - n - m];
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

void layernorm(std::span<const double> x, const LayerNormParams& p, std::span<double> out) {
    const int d = static_cast<int>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (int i = 0; i < d; ++i) out[i] = (x[i] - mean) * inv * p.gamma[i] + p.beta[i];
}

std::vector<double> layernorm(std::span<const double> x, const LayerNormParams& p) {
    std::vector<double> out(x.size());
    layernorm(x, p, out);
    return out;
}

namespace {

// f32-rounded uniform draw; bit-exact through the f32 weight file.
void fill_uniform_f32(Matrix& m, Rng& rng, double lo, double hi) {
    for (double& v : m.data) v = static_cast<double>(static_cast<float>(rng.uniform(lo, hi)));
}

LayerNormParams make_ln(int d) {
    LayerNormParams p;
    p.gamma.assign(d, 1.0);
    p.beta.assign(d, 0.0);
    return p;
}

}  // namespace

ModelWeights init_model(const ModelConfig& config) {
    config.validate();
    const int d = config.model_dim;
    const double b = 1.0 / std::sqrt(static_cast<double>(d));
    Rng rng(config.rng_seed);

    ModelWeights w;
    w.config = config;
    w.embedding = Matrix(config.vocab_size, d);
    w.pos_embedding = Matrix(config.max_seq_len, d);
    w.unembedding = Matrix(config.vocab_size, d);
    fill_uniform_f32(w.embedding, rng, -b, b);
    fill_uniform_f32(w.pos_embedding, rng, -b, b);
    fill_uniform_f32(w.unembedding, rng, -b, b);
    w.ln_f = make_ln(d);

    w.layers.resize(config.num_layers);
    for (auto& layer : w.layers) {
        layer.wq = Matrix(d, d);
        layer.wk = Matrix(d, d);
        layer.wv = Matrix(d, d);
        layer.wo = Matrix(d, d);
        layer.w1 = Matrix(4 * d, d);
        layer.w2 = Matrix(d, 4 * d);
        fill_uniform_f32(layer.wq, rng, -b, b);
        fill_uniform_f32(layer.wk, rng, -b, b);
        fill_uniform_f32(layer.wv, rng, -b, b);
        fill_uniform_f32(layer.wo, rng, -b, b);
        fill_uniform_f32(layer.w1, rng, -b, b);
        fill_uniform_f32(layer.w2, rng, -b, b);
        layer.b1.assign(4 * d, 0.0);
        layer.b2.assign(d, 0.0);
        layer.ln1 = make_ln(d);
        layer.ln2 = make_ln(d);
    }
    return w;
}

namespace {

// X (a x d) -> X * W^T (a x rows(W)).
Matrix project(const Matrix& x, const Matrix& w) {
    Matrix out(x.rows, w.rows);
    for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < w.rows; ++c)
            out.at(r, c) = dot(x.row_span(r), w.row_span(c));
    return out;
}

}  // namespace

StepOutput forward_step(const ModelWeights& weights, const TokenSequence& seq,
                        const ScoreHook* hook, const CaptureFlags& capture) {
    const ModelConfig& cfg = weights.config;
    const int a = seq.length();
    const int n = seq.num_image_tokens();
    const int d = cfg.model_dim;
    const int heads = cfg.num_heads;
    const int dk = cfg.head_dim();

    if (a > cfg.max_seq_len)
        throw std::runtime_error("sequence length " + std::to_string(a) + " exceeds max_seq_len " +
                                 std::to_string(cfg.max_seq_len));
    if (seq.image_embeddings.cols != d)
        throw std::invalid_argument("image embedding dim != model_dim");

    // Assemble input: image embeddings occupy the first n positions, text
    // positions take table rows; learned position embeddings everywhere.
    Matrix x(a, d);
    for (int pos = 0; pos < a; ++pos) {
        double* xr = x.row(pos);
        if (pos < n) {
            const double* e = seq.image_embeddings.row(pos);
            for (int i = 0; i < d; ++i) xr[i] = e[i];
        } else {
            const int id = seq.token_id_at(pos);
            if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("token id out of range");
            const double* e = weights.embedding.row(id);
            for (int i = 0; i < d; ++i) xr[i] = e[i];
        }
        const double* p = weights.pos_embedding.row(pos);
        for (int i = 0; i < d; ++i) xr[i] += p[i];
    }

    AttentionRecord rec;
    rec.step = static_cast<int>(seq.generated_token_ids.size());
    rec.seq_len = a;
    rec.num_image_tokens = n;
    if (capture.post_softmax) rec.post.assign(cfg.num_layers, Matrix());
    if (capture.pre_softmax) rec.pre.assign(cfg.num_layers, Matrix());
    if (capture.mhsa_output) rec.mhsa_out = Matrix(cfg.num_layers, d);
    if (capture.image_hidden) rec.image_hidden.assign(cfg.num_layers, Matrix());

    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    Matrix h1(a, d), attn(a, d);

    for (int l = 0; l < cfg.num_layers; ++l) {
        const LayerWeights& lw = weights.layers[l];
        for (int r = 0; r < a; ++r) layernorm(x.row_span(r), lw.ln1, h1.row_span(r));
        const Matrix q = project(h1, lw.wq);
        const Matrix k = project(h1, lw.wk);
        const Matrix v = project(h1, lw.wv);

        for (int r = 0; r < a; ++r) {
            const bool last = (r == a - 1);
            // Causal: row r attends to positions 0..r only.
            Matrix scores(heads, r + 1);
            for (int h = 0; h < heads; ++h) {
                const double* qr = q.row(r) + h * dk;
                for (int j = 0; j <= r; ++j) {
                    const double* kj = k.row(j) + h * dk;
                    double s = 0.0;
                    for (int t = 0; t < dk; ++t) s += qr[t] * kj[t];
                    scores.at(h, j) = s * inv_sqrt_dk;
                }
            }
            if (hook && hook->fn && (last || hook->apply_during_prefill)) {
                ScoreHookContext ctx;
                ctx.layer = l;
                ctx.step = rec.step;
                ctx.row = r;
                ctx.seq_len = a;
                ctx.num_image_tokens = n;
                ctx.is_last_row = last;
                hook->fn(ctx, scores);
            }
            if (last && capture.pre_softmax) rec.pre[l] = scores;
            for (int h = 0; h < heads; ++h) softmax_inplace(scores.row_span(h));
            if (last && capture.post_softmax) rec.post[l] = scores;
            double* out = attn.row(r);
            for (int h = 0; h < heads; ++h) {
                for (int t = 0; t < dk; ++t) {
                    double acc = 0.0;
                    for (int j = 0; j <= r; ++j) acc += scores.at(h, j) * v.at(j, h * dk + t);
                    out[h * dk + t] = acc;
                }
            }
        }

        // MHSA sublayer output, then residual.
        const Matrix mh = project(attn, lw.wo);
        if (capture.mhsa_output)
            for (int i = 0; i < d; ++i) rec.mhsa_out.at(l, i) = mh.at(a - 1, i);
        for (int r = 0; r < a; ++r) {
            double* xr = x.row(r);
            const double* mr = mh.row(r);
            for (int i = 0; i < d; ++i) xr[i] += mr[i];
        }

        // MLP sublayer.
        for (int r = 0; r < a; ++r) {
            const std::vector<double> h2 = layernorm(x.row_span(r), lw.ln2);
            std::vector<double> hidden = matvec(lw.w1, h2);
            for (int i = 0; i < 4 * d; ++i) hidden[i] = gelu(hidden[i] + lw.b1[i]);
            const std::vector<double> mo = matvec(lw.w2, hidden);
            double* xr = x.row(r);
            for (int i = 0; i < d; ++i) xr[i] += mo[i] + lw.b2[i];
        }

        if (capture.image_hidden) {
            Matrix ih(n, d);
            for (int i = 0; i < n; ++i)
                for (int c = 0; c < d; ++c) ih.at(i, c) = x.at(i, c);
            rec.image_hidden[l] = std::move(ih);
        }
    }

    const std::vector<double> final_h = layernorm(x.row_span(a - 1), weights.ln_f);
    std::vector<double> logits = matvec(weights.unembedding, final_h);
    for (double v2 : logits)
        if (!std::isfinite(v2)) throw std::runtime_error("non-finite activations in forward pass");

    return {std::move(logits), std::move(rec)};
}

GenerationResult greedy_decode(const ModelWeights& weights, const Matrix& image_embeddings,
                               const std::vector<int>& prompt_token_ids, int max_new_tokens,
                               const ScoreHook* hook, const CaptureFlags& capture) {
    if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
    TokenSequence seq;
    seq.image_embeddings = image_embeddings;
    seq.prompt_token_ids = prompt_token_ids;

    GenerationResult result;
    for (int k = 0; k < max_new_tokens; ++k) {
        StepOutput out = forward_step(weights, seq, hook, capture);
        const int next = argmax(out.logits);
        seq.generated_token_ids.push_back(next);
        result.generated_token_ids.push_back(next);
        result.records.push_back(std::move(out.record));
        result.step_logits.push_back(std::move(out.logits));
        if (next == weights.config.eos_token_id) break;
    }
    return result;
}

}  // namespace halluscope
