#include "halluscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "halluscope/io.hpp"
#include "halluscope/lens.hpp"
#include "halluscope/rng.hpp"

namespace halluscope {

using nlohmann::json;

void PlantSpec::validate() const {
    if (num_real <= 0 || num_halluc <= 0) throw std::invalid_argument("plant spec: counts must be positive");
    if (num_layers <= 0 || num_heads <= 0) throw std::invalid_argument("plant spec: dims must be positive");
    in_range.validate(num_layers);
    auto in01 = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in01(mu_real) || !in01(mu_halluc) || !in01(mu_background))
        throw std::invalid_argument("plant spec: means must lie in (0,1)");
    if (!(sigma >= 0.0)) throw std::invalid_argument("plant spec: sigma must be >= 0");
}

DetectionDataset plant_dataset(const PlantSpec& spec) {
    spec.validate();
    Rng root(spec.seed);
    Rng draw = root.child("values");

    DetectionDataset dataset;
    auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
    const int total = spec.num_real + spec.num_halluc;
    dataset.tokens.reserve(total);
    for (int t = 0; t < total; ++t) {
        const bool real = t < spec.num_real;
        LabeledToken token;
        token.label = real ? TokenLabel::real : TokenLabel::hallucinated;
        token.example_id =
            (real ? "plant-real-" : "plant-halluc-") + std::to_string(real ? t : t - spec.num_real);
        token.token_pos = t;
        token.profile.token_pos = t;
        token.profile.values = Matrix(spec.num_layers, spec.num_heads);
        const double mu_in = real ? spec.mu_real : spec.mu_halluc;
        for (int l = 0; l < spec.num_layers; ++l) {
            const double mu = spec.in_range.contains(l) ? mu_in : spec.mu_background;
            for (int h = 0; h < spec.num_heads; ++h)
                token.profile.values.at(l, h) = clamp01(draw.normal(mu, spec.sigma));
        }
        dataset.tokens.push_back(std::move(token));
    }
    dataset.assign_split(root.child("split").seed());
    return dataset;
}

PlantSpec load_plant_spec(const std::string& path) {
    const json j = json::parse(io::read_text(path));
    PlantSpec spec;
    spec.num_real = j.value("num_real", spec.num_real);
    spec.num_halluc = j.value("num_halluc", spec.num_halluc);
    spec.num_layers = j.value("num_layers", spec.num_layers);
    spec.num_heads = j.value("num_heads", spec.num_heads);
    if (j.contains("range")) {
        spec.in_range.first = j.at("range")[0].get<int>();
        spec.in_range.last = j.at("range")[1].get<int>();
    }
    spec.mu_real = j.value("mu_real", spec.mu_real);
    spec.mu_halluc = j.value("mu_halluc", spec.mu_halluc);
    spec.sigma = j.value("sigma", spec.sigma);
    spec.mu_background = j.value("mu_background", spec.mu_background);
    spec.seed = j.value("seed", spec.seed);
    spec.validate();
    return spec;
}

void save_plant_spec(const PlantSpec& spec, const std::string& path) {
    const json j{{"num_real", spec.num_real},
                 {"num_halluc", spec.num_halluc},
                 {"num_layers", spec.num_layers},
                 {"num_heads", spec.num_heads},
                 {"range", {spec.in_range.first, spec.in_range.last}},
                 {"mu_real", spec.mu_real},
                 {"mu_halluc", spec.mu_halluc},
                 {"sigma", spec.sigma},
                 {"mu_background", spec.mu_background},
                 {"seed", spec.seed}};
    io::write_text_atomic(path, j.dump(2) + "\n");
}

// --- scripted scenes ----------------------------------------------------

namespace {

const std::vector<std::string> kPromptWords = {"please", "help", "me", "describe",
                                               "the",    "image", "in", "detail"};

const std::vector<std::string> kObjectWords = {
    "person", "car",      "bus",  "truck",   "boat", "bird",  "cat",   "dog",
    "horse",  "sheep",    "cow",  "elephant", "bear", "zebra", "giraffe", "bench",
    "chair",  "couch",    "bed",  "tv",      "laptop", "clock", "vase",  "book"};

}  // namespace

const std::vector<std::string>& scene_vocab() {
    static const std::vector<std::string> vocab = [] {
        std::vector<std::string> v;
        v.push_back("<eos>");
        v.insert(v.end(), kPromptWords.begin(), kPromptWords.end());
        v.insert(v.end(), kObjectWords.begin(), kObjectWords.end());
        return v;
    }();
    return vocab;
}

int scene_object_id_begin() { return 1 + static_cast<int>(kPromptWords.size()); }

void ScriptedScene::validate() const {
    if (gt_object_ids.empty()) throw std::invalid_argument("scene must have ground-truth objects");
    if (gt_object_ids.size() != gt_priors.size() ||
        distractor_ids.size() != distractor_priors.size())
        throw std::invalid_argument("scene prior lists must match object lists");
    std::set<int> gt(gt_object_ids.begin(), gt_object_ids.end());
    for (int d : distractor_ids)
        if (gt.count(d)) throw std::invalid_argument("scene GT and distractor sets must be disjoint");
    const int vocab = static_cast<int>(scene_vocab().size());
    if (static_cast<int>(gt.size() + distractor_ids.size()) > vocab)
        throw std::invalid_argument("scene objects exceed vocabulary");
    for (int id : gt_object_ids)
        if (id < scene_object_id_begin() || id >= vocab)
            throw std::invalid_argument("GT id outside object vocabulary");
    for (int id : distractor_ids)
        if (id < scene_object_id_begin() || id >= vocab)
            throw std::invalid_argument("distractor id outside object vocabulary");
}

namespace {

// Coordinate layout of the scripted model's hidden space. The used block
// (vocab logits + markers + position tags) must fit inside one head slice so
// attention values can carry it; see wv/wo construction below.
struct SceneLayout {
    int vocab = 0;
    int img_marker = 0;
    int txt_marker = 0;
    int pos_tag0 = 0;  // one tag coordinate per image position
    int used = 0;      // total used coordinates
    int head_dim = 0;
    int model_dim = 0;

    explicit SceneLayout(int n) {
        vocab = static_cast<int>(scene_vocab().size());
        img_marker = vocab;
        txt_marker = vocab + 1;
        pos_tag0 = vocab + 2;
        used = pos_tag0 + n;
        head_dim = ((used + 7) / 8) * 8;  // pad to a multiple of 8
        model_dim = 2 * head_dim;
    }
};

}  // namespace

ScriptedModel scripted_model(const ScriptedScene& scene, const SceneParams& params) {
    scene.validate();
    const int n = params.num_image_tokens;
    const SceneLayout lay(n);
    const int d = lay.model_dim;
    const int dk = lay.head_dim;

    ModelConfig config;
    config.num_layers = params.num_layers;
    config.num_heads = 2;
    config.model_dim = d;
    config.vocab_size = lay.vocab;
    config.num_image_tokens = n;
    config.max_seq_len = n + static_cast<int>(kPromptWords.size()) + params.max_new_tokens + 2;
    config.rng_seed = scene.seed;
    config.eos_token_id = 0;
    config.vocab = scene_vocab();
    params.enrich_range.validate(config.num_layers);

    ModelWeights w;
    w.config = config;
    w.embedding = Matrix(lay.vocab, d);
    w.pos_embedding = Matrix(config.max_seq_len, d);
    w.unembedding = Matrix(lay.vocab, d);
    w.ln_f.gamma.assign(d, 1.0);
    w.ln_f.beta.assign(d, 0.0);

    // Unembedding reads the vocab block directly.
    for (int t = 0; t < lay.vocab; ++t) w.unembedding.at(t, t) = 1.0;

    // Prompt-side prior: ground-truth and distractor weights spread over the
    // prompt word embeddings, plus the generic text marker.
    std::vector<double> prior(lay.vocab, 0.0);
    for (size_t i = 0; i < scene.gt_object_ids.size(); ++i)
        prior[scene.gt_object_ids[i]] += scene.gt_priors[i];
    for (size_t i = 0; i < scene.distractor_ids.size(); ++i)
        prior[scene.distractor_ids[i]] += scene.distractor_priors[i];

    w.embedding.at(0, lay.txt_marker) = params.txt_marker;  // <eos>
    const double prompt_share = 1.0 / static_cast<double>(kPromptWords.size());
    for (size_t p = 0; p < kPromptWords.size(); ++p) {
        const int id = 1 + static_cast<int>(p);
        w.embedding.at(id, lay.txt_marker) = params.txt_marker;
        for (int t = 0; t < lay.vocab; ++t) w.embedding.at(id, t) = prior[t] * prompt_share;
    }
    for (int id = scene_object_id_begin(); id < lay.vocab; ++id) {
        w.embedding.at(id, id) = -params.inhibit;  // emitted words push themselves down
        w.embedding.at(id, 0) = params.eos_said;   // and nudge the caption toward ending
        w.embedding.at(id, lay.txt_marker) = params.txt_marker;
    }

    // Per-position tags let image rows attend to themselves, keeping their
    // hidden states pure across layers.
    for (int i = 0; i < n; ++i) w.pos_embedding.at(i, lay.pos_tag0 + i) = params.pos_tag;

    w.layers.resize(config.num_layers);
    for (int l = 0; l < config.num_layers; ++l) {
        LayerWeights& lw = w.layers[l];
        lw.wq = Matrix(d, d);
        lw.wk = Matrix(d, d);
        lw.wv = Matrix(d, d);
        lw.wo = Matrix(d, d);
        lw.w1 = Matrix(4 * d, d);
        lw.w2 = Matrix(d, 4 * d);  // zero MLP: the block reduces to attention + residual
        lw.b1.assign(4 * d, 0.0);
        lw.b2.assign(d, 0.0);
        lw.ln1.gamma.assign(d, 1.0);
        lw.ln1.beta.assign(d, 0.0);
        lw.ln2.gamma.assign(d, 1.0);
        lw.ln2.beta.assign(d, 0.0);

        const bool in_range = params.enrich_range.contains(l);
        const double img_q = in_range ? params.img_q_in : params.img_q_out;

        // Head 0 seeks image-marker keys from text-row queries.
        lw.wq.at(0, lay.txt_marker) = img_q;
        lw.wk.at(0, lay.img_marker) = params.img_k;
        // Head 1 seeks text-marker keys; image keys carry a dispreferred
        // component whose magnitude still feeds the head-mean boost.
        lw.wq.at(dk + 0, lay.txt_marker) = params.ctx_q;
        lw.wk.at(dk + 0, lay.txt_marker) = params.ctx_k;
        lw.wk.at(dk + 0, lay.img_marker) = params.ctx_img_k;
        // Self keys at image rows, both heads.
        for (int i = 0; i < n; ++i) {
            lw.wq.at(1 + i, lay.pos_tag0 + i) = params.self_tag;
            lw.wk.at(1 + i, lay.pos_tag0 + i) = params.self_tag;
            lw.wq.at(dk + 1 + i, lay.pos_tag0 + i) = params.self_tag;
            lw.wk.at(dk + 1 + i, lay.pos_tag0 + i) = params.self_tag;
        }
        // Values carry the used block through both heads; the output
        // projection folds them back with per-head gains.
        for (int t = 0; t < lay.used; ++t) {
            lw.wv.at(t, t) = 1.0;
            lw.wv.at(dk + t, t) = 1.0;
            lw.wo.at(t, t) = params.out_img;
            lw.wo.at(t, dk + t) = params.out_ctx;
        }
    }

    // Image embeddings: every token carries the shared ground-truth bundle
    // and the eos drive; each token adds its designated object's direction.
    TokenSequence prefix;
    prefix.image_embeddings = Matrix(n, d);
    const int num_gt = static_cast<int>(scene.gt_object_ids.size());
    for (int i = 0; i < n; ++i) {
        double* row = prefix.image_embeddings.row(i);
        for (int g = 0; g < num_gt; ++g)
            row[scene.gt_object_ids[g]] += params.common_bundle / num_gt;
        row[scene.gt_object_ids[i % num_gt]] += params.obj_direction;
        row[0] += params.eos_drive;
        row[lay.img_marker] = params.img_marker;
    }
    for (size_t p = 0; p < kPromptWords.size(); ++p)
        prefix.prompt_token_ids.push_back(1 + static_cast<int>(p));

    return {std::move(w), std::move(prefix)};
}

std::vector<ScriptedScene> make_scene_corpus(int count, uint64_t seed) {
    if (count <= 0) throw std::invalid_argument("scene count must be positive");
    std::vector<ScriptedScene> scenes;
    scenes.reserve(count);
    Rng root(seed);
    const int obj_begin = scene_object_id_begin();
    const int num_objects = static_cast<int>(scene_vocab().size()) - obj_begin;

    for (int s = 0; s < count; ++s) {
        Rng rng = root.child("scene-" + std::to_string(s));
        ScriptedScene scene;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "scene-%04d", s);
        scene.id = buf;
        scene.seed = rng.child("model").seed();

        const std::vector<int> perm = rng.permutation(num_objects);
        scene.gt_object_ids = {obj_begin + perm[0], obj_begin + perm[1]};
        scene.distractor_ids = {obj_begin + perm[2]};
        scene.gt_priors = {rng.uniform(0.05, 0.15), rng.uniform(0.05, 0.15)};
        // The distractor prior straddles the suppression threshold so only a
        // fraction of scenes hallucinate under the no-hook decode.
        scene.distractor_priors = {rng.uniform(0.45, 1.05)};
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

std::vector<ScriptedScene> load_scenes_json(const std::string& path) {
    const json j = json::parse(io::read_text(path));
    std::vector<ScriptedScene> scenes;
    const auto& vocab = scene_vocab();
    auto id_of = [&](const std::string& word) {
        for (int i = 0; i < static_cast<int>(vocab.size()); ++i)
            if (vocab[i] == word) return i;
        throw std::runtime_error("unknown scene object word '" + word + "'");
    };
    for (const auto& sj : j) {
        ScriptedScene scene;
        scene.id = sj.at("id").get<std::string>();
        scene.seed = sj.at("seed").get<uint64_t>();
        for (const auto& wj : sj.at("gt")) scene.gt_object_ids.push_back(id_of(wj.get<std::string>()));
        for (const auto& wj : sj.at("distractors"))
            scene.distractor_ids.push_back(id_of(wj.get<std::string>()));
        scene.gt_priors = sj.at("gt_priors").get<std::vector<double>>();
        scene.distractor_priors = sj.at("distractor_priors").get<std::vector<double>>();
        scene.validate();
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

void save_scenes_json(const std::vector<ScriptedScene>& scenes, const std::string& path) {
    const auto& vocab = scene_vocab();
    json j = json::array();
    for (const auto& scene : scenes) {
        json sj{{"id", scene.id}, {"seed", scene.seed}};
        json gt = json::array(), ds = json::array();
        for (int id : scene.gt_object_ids) gt.push_back(vocab[id]);
        for (int id : scene.distractor_ids) ds.push_back(vocab[id]);
        sj["gt"] = std::move(gt);
        sj["distractors"] = std::move(ds);
        sj["gt_priors"] = scene.gt_priors;
        sj["distractor_priors"] = scene.distractor_priors;
        j.push_back(std::move(sj));
    }
    io::write_text_atomic(path, j.dump(2) + "\n");
}

AnnotationSet scene_annotations(const std::vector<ScriptedScene>& scenes) {
    const auto& vocab = scene_vocab();
    AnnotationSet annotations;
    for (const auto& scene : scenes) {
        std::set<std::string>& cats = annotations[scene.id];
        for (int id : scene.gt_object_ids) cats.insert(vocab[id]);
    }
    return annotations;
}

GenerationResult run_scene(const ScriptedScene& scene, const SceneParams& params,
                           const ScoreHook* hook, const CaptureFlags& capture) {
    const ScriptedModel model = scripted_model(scene, params);
    return greedy_decode(model.weights, model.prefix.image_embeddings,
                         model.prefix.prompt_token_ids, params.max_new_tokens, hook, capture);
}

std::string caption_text(const std::vector<int>& token_ids, const ModelConfig& config) {
    std::string caption;
    for (int id : token_ids) {
        if (id == config.eos_token_id) break;
        if (!caption.empty()) caption += ' ';
        caption += config.token_str(id);
    }
    return caption;
}

std::vector<LabeledToken> label_scene_tokens(const ScriptedScene& scene,
                                             const GenerationResult& result,
                                             const SceneParams& params) {
    std::vector<LabeledToken> tokens;
    const std::set<int> gt(scene.gt_object_ids.begin(), scene.gt_object_ids.end());
    std::set<int> seen;
    for (size_t k = 0; k < result.generated_token_ids.size(); ++k) {
        const int id = result.generated_token_ids[k];
        if (id < scene_object_id_begin()) continue;       // not an object word
        if (!seen.insert(id).second) continue;            // first occurrence only
        LabeledToken token;
        token.example_id = scene.id;
        token.token_pos = static_cast<int>(k);
        token.label = gt.count(id) ? TokenLabel::real : TokenLabel::hallucinated;
        token.object_token_id = id;
        token.profile = var(result.records[k], params.num_image_tokens);
        token.image_hidden = result.records[k].image_hidden;
        tokens.push_back(std::move(token));
    }
    return tokens;
}

}  // namespace halluscope
