#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "halluscope/intervention.hpp"
#include "halluscope/lens.hpp"
#include "test_support.hpp"

using namespace halluscope;
using namespace halluscope::testing;

namespace {

// Independent two-pass oracle: pass 1 collects the head-mean absolute values
// from an untouched copy, pass 2 adds them.
Matrix boost_oracle(const Matrix& scores, int n, double alpha) {
    Matrix out = scores;
    const int covered = std::min(n, scores.cols);
    for (int i = 0; i < covered; ++i) {
        double mean_abs = 0.0;
        for (int h = 0; h < scores.rows; ++h) mean_abs += std::abs(scores.at(h, i));
        mean_abs /= scores.rows;
        for (int h = 0; h < scores.rows; ++h) out.at(h, i) += alpha * mean_abs;
    }
    return out;
}

Matrix random_scores(Rng& rng, int heads, int cols, double scale = 3.0) {
    Matrix m(heads, cols);
    for (double& v : m.data) v = rng.uniform(-scale, scale);
    return m;
}

double image_mass(std::span<const double> row, int n) {
    const std::vector<double> probs = softmax(row);
    double s = 0.0;
    for (int i = 0; i < n && i < static_cast<int>(probs.size()); ++i) s += probs[i];
    return s;
}

}  // namespace

TEST_CASE("presets carry the published ranges and factors") {
    const ConfigPreset llava = preset_by_name("llava-1.5");
    CHECK(llava.layers == LayerRange{5, 18});
    CHECK(llava.alpha == 0.5);
    const ConfigPreset shikra = preset_by_name("shikra");
    CHECK(shikra.layers == LayerRange{3, 13});
    CHECK(shikra.alpha == 0.55);
    const ConfigPreset minigpt = preset_by_name("minigpt4");
    CHECK(minigpt.layers == LayerRange{3, 14});
    CHECK(minigpt.alpha == 0.5);
    CHECK_THROWS_AS(preset_by_name("nope"), std::invalid_argument);
}

TEST_CASE("apply: alpha 0 is bit-exact identity") {
    Rng rng(2);
    Matrix scores = random_scores(rng, 4, 10);
    const Matrix before = scores;
    apply_head_guided_boost(scores, 5, 0.0);
    CHECK(scores.data == before.data);
}

TEST_CASE("apply: single-head arithmetic") {
    Matrix scores(1, 3);
    scores.at(0, 0) = -2.0;
    scores.at(0, 1) = 1.0;
    scores.at(0, 2) = 0.5;
    apply_head_guided_boost(scores, 1, 0.5);
    CHECK(scores.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));  // -2 + 0.5*|-2|
    CHECK(scores.at(0, 1) == 1.0);
    CHECK(scores.at(0, 2) == 0.5);
}

TEST_CASE("apply matches the snapshot-semantics oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const int heads = 1 + static_cast<int>(rng.below(6));
        const int cols = 2 + static_cast<int>(rng.below(14));
        const int n = 1 + static_cast<int>(rng.below(cols));
        const double alpha = rng.uniform(0.0, 1.5);
        Matrix scores = random_scores(rng, heads, cols);
        const Matrix expected = boost_oracle(scores, n, alpha);
        apply_head_guided_boost(scores, n, alpha);
        for (size_t i = 0; i < scores.data.size(); ++i)
            CHECK(scores.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("apply: locality and error cases") {
    Rng rng(5);
    Matrix scores = random_scores(rng, 3, 8);
    const Matrix before = scores;
    apply_head_guided_boost(scores, 4, 0.7);
    for (int h = 0; h < 3; ++h)
        for (int j = 4; j < 8; ++j) CHECK(scores.at(h, j) == before.at(h, j));

    CHECK_THROWS_AS(apply_head_guided_boost(scores, 4, -0.1), std::invalid_argument);
    Matrix empty;
    CHECK_THROWS_AS(apply_head_guided_boost(empty, 2, 0.5), std::invalid_argument);
}

TEST_CASE("apply: image mass never decreases, strictly rises when scores nonzero") {
    Rng rng(41);
    for (int trial = 0; trial < 300; ++trial) {
        const int heads = 1 + static_cast<int>(rng.below(4));
        const int cols = 3 + static_cast<int>(rng.below(12));
        const int n = 1 + static_cast<int>(rng.below(cols - 1));
        Matrix scores = random_scores(rng, heads, cols);
        bool any_nonzero = false;
        if (trial % 7 == 0) {  // exercise the all-zero image block case
            for (int h = 0; h < heads; ++h)
                for (int i = 0; i < n; ++i) scores.at(h, i) = 0.0;
        }
        for (int h = 0; h < heads; ++h)
            for (int i = 0; i < n; ++i) any_nonzero |= scores.at(h, i) != 0.0;

        Matrix boosted = scores;
        apply_head_guided_boost(boosted, n, 0.5);
        for (int h = 0; h < heads; ++h) {
            const double before = image_mass(scores.row_span(h), n);
            const double after = image_mass(boosted.row_span(h), n);
            if (any_nonzero) CHECK(after > before);
            else CHECK(after == doctest::Approx(before).epsilon(1e-12));
        }
    }
}

TEST_CASE("apply: consistently larger columns receive larger boosts") {
    // |orig(h, i)| >= |orig(h, j)| for every head, strict somewhere
    Matrix scores(3, 6);
    scores.at(0, 0) = 2.0;  scores.at(0, 1) = 1.0;
    scores.at(1, 0) = -1.5; scores.at(1, 1) = 1.5;
    scores.at(2, 0) = 0.5;  scores.at(2, 1) = -0.5;
    Matrix boosted = scores;
    apply_head_guided_boost(boosted, 2, 0.5);
    const double boost_i = boosted.at(0, 0) - scores.at(0, 0);
    const double boost_j = boosted.at(0, 1) - scores.at(0, 1);
    CHECK(boost_i > boost_j);
}

TEST_CASE("build_hook: out-of-range layers are untouched bit-exactly") {
    const ModelConfig cfg = tiny_config(61, 6, 2, 32);
    const ModelWeights w = init_model(cfg);
    Rng rng(8);
    TokenSequence seq;
    seq.image_embeddings = random_embeddings(rng, cfg.num_image_tokens, cfg.model_dim, 0.5);
    seq.prompt_token_ids = random_token_ids(rng, 5, cfg.vocab_size);

    InterventionConfig ic;
    ic.layers = {2, 3};
    ic.alpha = 0.5;
    const ScoreHook hook = build_hook(ic, cfg.num_layers);

    CaptureFlags capture;
    capture.pre_softmax = true;
    const StepOutput plain = forward_step(w, seq, nullptr, capture);
    const StepOutput hooked = forward_step(w, seq, &hook, capture);

    // Layer 0 and 1 precede the range: identical in every recorded bit.
    for (int l : {0, 1}) {
        CHECK(plain.record.pre[l].data == hooked.record.pre[l].data);
        CHECK(plain.record.post[l].data == hooked.record.post[l].data);
    }
    // In-range layers differ and gain image mass.
    const VarProfile v0 = var(plain.record, cfg.num_image_tokens);
    const VarProfile v1 = var(hooked.record, cfg.num_image_tokens);
    for (int l = ic.layers.first; l <= ic.layers.last; ++l)
        for (int h = 0; h < cfg.num_heads; ++h) CHECK(v1.values.at(l, h) > v0.values.at(l, h));

    CHECK_THROWS_AS(build_hook(InterventionConfig{{5, 18}, 0.5, false}, cfg.num_layers),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_hook(InterventionConfig{{0, 2}, -1.0, false}, cfg.num_layers),
                    std::invalid_argument);
}

TEST_CASE("build_hook: prefill rows only when flagged") {
    const ModelConfig cfg = tiny_config(71, 4, 2, 32);
    const ModelWeights w = init_model(cfg);
    Rng rng(10);
    TokenSequence seq;
    seq.image_embeddings = random_embeddings(rng, cfg.num_image_tokens, cfg.model_dim, 0.5);
    seq.prompt_token_ids = random_token_ids(rng, 5, cfg.vocab_size);
    seq.generated_token_ids = random_token_ids(rng, 2, cfg.vocab_size);

    InterventionConfig ic;
    ic.layers = {0, 3};
    ic.alpha = 0.6;
    const ScoreHook decode_only = build_hook(ic, cfg.num_layers);
    ic.apply_during_prefill = true;
    const ScoreHook with_prefill = build_hook(ic, cfg.num_layers);

    const StepOutput a = forward_step(w, seq, &decode_only, {});
    const StepOutput b = forward_step(w, seq, &with_prefill, {});
    // Prefill hooks alter earlier rows, which changes downstream hiddens.
    CHECK(a.logits != b.logits);

    // alpha = 0 keeps both paths equal to the unhooked run.
    ic.alpha = 0.0;
    ic.apply_during_prefill = false;
    const ScoreHook zero = build_hook(ic, cfg.num_layers);
    const StepOutput c = forward_step(w, seq, &zero, {});
    const StepOutput plain = forward_step(w, seq, nullptr, {});
    CHECK(c.logits == plain.logits);
}
