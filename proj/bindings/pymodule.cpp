// Python bindings for the main operations: VAR/SVAR, lens decoding, the
// heads-guided score boost, detection metrics, the t-test, CHAIR scoring,
// planted datasets, scripted scenes, and the instrumented toy decoder.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "halluscope/chair.hpp"
#include "halluscope/detector.hpp"
#include "halluscope/intervention.hpp"
#include "halluscope/lens.hpp"
#include "halluscope/mlp.hpp"
#include "halluscope/model.hpp"
#include "halluscope/synth.hpp"

namespace py = pybind11;
using namespace halluscope;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix matrix_from(const DoubleArray& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
    Matrix m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + arr.size(), m.data.begin());
    return m;
}

py::array_t<double> numpy_from(const Matrix& m) {
    py::array_t<double> arr({m.rows, m.cols});
    std::copy(m.data.begin(), m.data.end(), arr.mutable_data());
    return arr;
}

std::vector<double> vector_from(const DoubleArray& arr) {
    if (arr.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
    return {arr.data(), arr.data() + arr.size()};
}

AttentionRecord record_from_post(const DoubleArray& post, int n) {
    if (post.ndim() != 3) throw std::invalid_argument("post must be (layers, heads, positions)");
    AttentionRecord rec;
    rec.seq_len = static_cast<int>(post.shape(2));
    rec.num_image_tokens = n;
    const int layers = static_cast<int>(post.shape(0));
    const int heads = static_cast<int>(post.shape(1));
    rec.post.assign(layers, Matrix(heads, rec.seq_len));
    for (int l = 0; l < layers; ++l)
        for (int h = 0; h < heads; ++h)
            for (int j = 0; j < rec.seq_len; ++j) rec.post[l].at(h, j) = post.at(l, h, j);
    return rec;
}

LayerRange range_from(const std::pair<int, int>& range) { return {range.first, range.second}; }

ScriptedScene scene_from(const py::dict& d) {
    ScriptedScene scene;
    scene.id = d["id"].cast<std::string>();
    scene.seed = d["seed"].cast<uint64_t>();
    scene.gt_object_ids = d["gt_object_ids"].cast<std::vector<int>>();
    scene.distractor_ids = d["distractor_ids"].cast<std::vector<int>>();
    scene.gt_priors = d["gt_priors"].cast<std::vector<double>>();
    scene.distractor_priors = d["distractor_priors"].cast<std::vector<double>>();
    scene.validate();
    return scene;
}

py::dict scene_to_dict(const ScriptedScene& scene) {
    py::dict d;
    d["id"] = scene.id;
    d["seed"] = scene.seed;
    d["gt_object_ids"] = scene.gt_object_ids;
    d["distractor_ids"] = scene.distractor_ids;
    d["gt_priors"] = scene.gt_priors;
    d["distractor_priors"] = scene.distractor_priors;
    return d;
}

const ScoreHook* build_optional_hook(ScoreHook& storage, std::optional<double> alpha,
                                     std::optional<std::pair<int, int>> layers, bool hook_prefill,
                                     int num_layers) {
    if (!alpha && !layers) return nullptr;
    if (!alpha || !layers)
        throw std::invalid_argument("intervention needs both alpha and layers");
    InterventionConfig config;
    config.alpha = *alpha;
    config.layers = range_from(*layers);
    config.apply_during_prefill = hook_prefill;
    storage = build_hook(config, num_layers);
    return &storage;
}

py::dict result_to_dict(const GenerationResult& result) {
    py::dict out;
    out["tokens"] = result.generated_token_ids;
    py::list post_per_step;
    for (const auto& rec : result.records) {
        const int layers = static_cast<int>(rec.post.size());
        const int heads = layers ? rec.post[0].rows : 0;
        py::array_t<double> arr({layers, heads, rec.seq_len});
        auto view = arr.mutable_unchecked<3>();
        for (int l = 0; l < layers; ++l)
            for (int h = 0; h < heads; ++h)
                for (int j = 0; j < rec.seq_len; ++j) view(l, h, j) = rec.post[l].at(h, j);
        post_per_step.append(std::move(arr));
    }
    out["post"] = std::move(post_per_step);
    py::list logits;
    for (const auto& row : result.step_logits) {
        py::array_t<double> arr(static_cast<py::ssize_t>(row.size()));
        std::copy(row.begin(), row.end(), arr.mutable_data());
        logits.append(std::move(arr));
    }
    out["logits"] = std::move(logits);
    return out;
}

Lexicon lexicon_from(const std::optional<std::map<std::string, std::vector<std::string>>>& entries) {
    return entries ? Lexicon(*entries) : Lexicon::coco_default();
}

}  // namespace

PYBIND11_MODULE(_halluscope, m) {
    m.doc() = "attention-lens hallucination analysis on a toy multimodal decoder";

    // --- attention-lens ------------------------------------------------
    m.def(
        "var_profile",
        [](const DoubleArray& post, int num_image_tokens) {
            const AttentionRecord rec = record_from_post(post, num_image_tokens);
            return numpy_from(var(rec, num_image_tokens).values);
        },
        py::arg("post"), py::arg("num_image_tokens"),
        "(layers, heads, positions) attention rows -> (layers, heads) image-mass matrix");

    m.def(
        "svar",
        [](const DoubleArray& profile, std::pair<int, int> layers) {
            VarProfile p;
            p.values = matrix_from(profile);
            return svar(p, range_from(layers));
        },
        py::arg("var"), py::arg("layers"),
        "head-mean of the VAR matrix summed over an inclusive layer range");

    m.def(
        "lens_decode",
        [](const DoubleArray& hidden, const DoubleArray& unembedding) {
            const Matrix w = matrix_from(unembedding);
            const LensDistribution dist = lens_decode(vector_from(hidden), w);
            py::array_t<double> probs(static_cast<py::ssize_t>(dist.probs.size()));
            std::copy(dist.probs.begin(), dist.probs.end(), probs.mutable_data());
            return py::make_tuple(std::move(probs), dist.argmax_id);
        },
        py::arg("hidden"), py::arg("unembedding"),
        "softmax(W @ hidden) -> (probabilities, argmax token id)");

    m.def(
        "head_heatmap",
        [](const DoubleArray& attention_row, int num_image_tokens) {
            AttentionRecord rec;
            rec.seq_len = static_cast<int>(attention_row.size());
            rec.num_image_tokens = num_image_tokens;
            Matrix rows(1, rec.seq_len);
            std::copy(attention_row.data(), attention_row.data() + attention_row.size(),
                      rows.data.begin());
            rec.post.push_back(std::move(rows));
            const int layer0[] = {0};
            return numpy_from(head_heatmaps(rec, num_image_tokens, layer0)[0].grid);
        },
        py::arg("attention_row"), py::arg("num_image_tokens"),
        "one attention row -> image-token mass grid (g x g, or 1 x n)");

    // --- intervention ----------------------------------------------------
    m.def(
        "apply_intervention",
        [](const DoubleArray& scores, int num_image_tokens, double alpha) {
            Matrix s = matrix_from(scores);
            apply_head_guided_boost(s, num_image_tokens, alpha);
            return numpy_from(s);
        },
        py::arg("scores"), py::arg("num_image_tokens"), py::arg("alpha"),
        "heads-guided boost of image-position scores (snapshot semantics)");

    m.def("presets", [] {
        py::dict out;
        for (const auto& p : intervention_presets())
            out[p.name.c_str()] =
                py::make_tuple(py::make_tuple(p.layers.first, p.layers.last), p.alpha);
        return out;
    });

    // --- detector ---------------------------------------------------------
    m.def(
        "roc_pr",
        [](const DoubleArray& scores, const std::vector<int>& labels) {
            std::vector<uint8_t> lab(labels.begin(), labels.end());
            const CurveReport rep = roc_pr(vector_from(scores), lab);
            py::dict out;
            out["auroc"] = rep.auroc;
            out["average_precision"] = rep.average_precision;
            out["thresholds"] = rep.thresholds;
            out["fpr"] = rep.fpr;
            out["tpr"] = rep.tpr;
            out["precision"] = rep.precision;
            out["recall"] = rep.recall;
            return out;
        },
        py::arg("scores"), py::arg("labels"),
        "threshold-sweep ROC/PR curves; labels: 1 = real (positive class)");

    m.def(
        "t_test",
        [](const DoubleArray& real_scores, const DoubleArray& halluc_scores) {
            const TTestResult r = t_test(vector_from(real_scores), vector_from(halluc_scores));
            return py::make_tuple(r.t, r.df, r.p);
        },
        py::arg("real_scores"), py::arg("halluc_scores"),
        "pooled one-tailed two-sample t-test -> (t, df, p)");

    // --- CHAIR -----------------------------------------------------------
    m.def(
        "chair",
        [](const std::map<std::string, std::string>& captions,
           const std::map<std::string, std::vector<std::string>>& annotations,
           std::optional<std::map<std::string, std::vector<std::string>>> lexicon) {
            AnnotationSet ann;
            for (const auto& [k, v] : annotations)
                ann[k] = std::set<std::string>(v.begin(), v.end());
            const ChairReport rep = chair(captions, ann, lexicon_from(lexicon));
            py::dict out;
            out["c_s"] = rep.chair_s;
            out["c_i"] = rep.chair_i;
            out["precision"] = rep.precision;
            out["recall"] = rep.recall;
            out["f1"] = rep.f1;
            return out;
        },
        py::arg("captions"), py::arg("annotations"), py::arg("lexicon") = std::nullopt,
        "corpus CHAIR_S/CHAIR_I and coverage F1 (default: built-in COCO lexicon)");

    m.def(
        "extract_mentions",
        [](const std::string& caption,
           std::optional<std::map<std::string, std::vector<std::string>>> lexicon) {
            py::list out;
            for (const Mention& mention : extract_mentions(caption, lexicon_from(lexicon)))
                out.append(py::make_tuple(mention.category, mention.offset, mention.length));
            return out;
        },
        py::arg("caption"), py::arg("lexicon") = std::nullopt);

    // --- synth ------------------------------------------------------------
    m.def(
        "plant_dataset",
        [](int num_real, int num_halluc, uint64_t seed, std::pair<int, int> layers, int num_layers,
           int num_heads, double mu_real, double mu_halluc, double sigma, double mu_background) {
            PlantSpec spec;
            spec.num_real = num_real;
            spec.num_halluc = num_halluc;
            spec.seed = seed;
            spec.in_range = range_from(layers);
            spec.num_layers = num_layers;
            spec.num_heads = num_heads;
            spec.mu_real = mu_real;
            spec.mu_halluc = mu_halluc;
            spec.sigma = sigma;
            spec.mu_background = mu_background;
            const DetectionDataset ds = plant_dataset(spec);
            const int n = ds.size();
            py::array_t<double> profiles({n, spec.num_layers, spec.num_heads});
            auto view = profiles.mutable_unchecked<3>();
            std::vector<int> labels(n);
            for (int i = 0; i < n; ++i) {
                labels[i] = ds.tokens[i].label == TokenLabel::real ? 1 : 0;
                for (int l = 0; l < spec.num_layers; ++l)
                    for (int h = 0; h < spec.num_heads; ++h)
                        view(i, l, h) = ds.tokens[i].profile.values.at(l, h);
            }
            py::dict out;
            out["var"] = std::move(profiles);
            out["labels"] = labels;
            return out;
        },
        py::arg("num_real") = 1000, py::arg("num_halluc") = 1000, py::arg("seed") = 1,
        py::arg("layers") = std::pair<int, int>{5, 18}, py::arg("num_layers") = 32,
        py::arg("num_heads") = 32, py::arg("mu_real") = 0.121, py::arg("mu_halluc") = 0.089,
        py::arg("sigma") = 0.02, py::arg("mu_background") = 0.05,
        "labeled VAR profiles with a controlled real/hallucinated separation");

    m.def("scene_vocab", [] { return scene_vocab(); });

    m.def(
        "make_scenes",
        [](int count, uint64_t seed) {
            py::list out;
            for (const auto& scene : make_scene_corpus(count, seed))
                out.append(scene_to_dict(scene));
            return out;
        },
        py::arg("count"), py::arg("seed") = 7);

    m.def(
        "run_scene",
        [](const py::dict& scene_dict, std::optional<double> alpha,
           std::optional<std::pair<int, int>> layers, bool hook_prefill) {
            const ScriptedScene scene = scene_from(scene_dict);
            const SceneParams params;
            ScoreHook storage;
            const ScoreHook* hook =
                build_optional_hook(storage, alpha, layers, hook_prefill, params.num_layers);
            const GenerationResult result = run_scene(scene, params, hook, {});
            py::dict out = result_to_dict(result);
            out["caption"] = caption_text(result.generated_token_ids,
                                          scripted_model(scene, params).weights.config);
            return out;
        },
        py::arg("scene"), py::arg("alpha") = std::nullopt, py::arg("layers") = std::nullopt,
        py::arg("hook_prefill") = false,
        "greedy decode of one scripted scene, optionally with the intervention");

    m.def("scene_enrich_range", [] {
        const SceneParams params;
        return std::pair<int, int>{params.enrich_range.first, params.enrich_range.last};
    });

    // --- model ------------------------------------------------------------
    py::class_<ModelWeights>(m, "Model")
        .def(py::init([](int num_layers, int num_heads, int model_dim, int vocab_size,
                         int num_image_tokens, int max_seq_len, uint64_t seed, int eos_token_id) {
                 ModelConfig config;
                 config.num_layers = num_layers;
                 config.num_heads = num_heads;
                 config.model_dim = model_dim;
                 config.vocab_size = vocab_size;
                 config.num_image_tokens = num_image_tokens;
                 config.max_seq_len = max_seq_len;
                 config.rng_seed = seed;
                 config.eos_token_id = eos_token_id;
                 return init_model(config);
             }),
             py::arg("num_layers"), py::arg("num_heads"), py::arg("model_dim"),
             py::arg("vocab_size"), py::arg("num_image_tokens"), py::arg("max_seq_len"),
             py::arg("seed") = 0, py::arg("eos_token_id") = -1,
             "deterministic random-init decoder (uniform +-1/sqrt(d))")
        .def_property_readonly("unembedding",
                               [](const ModelWeights& w) { return numpy_from(w.unembedding); })
        .def(
            "decode",
            [](const ModelWeights& w, const DoubleArray& image_embeddings,
               const std::vector<int>& prompt_ids, int max_new_tokens, std::optional<double> alpha,
               std::optional<std::pair<int, int>> layers, bool hook_prefill) {
                ScoreHook storage;
                const ScoreHook* hook = build_optional_hook(storage, alpha, layers, hook_prefill,
                                                            w.config.num_layers);
                return result_to_dict(greedy_decode(w, matrix_from(image_embeddings), prompt_ids,
                                                    max_new_tokens, hook, {}));
            },
            py::arg("image_embeddings"), py::arg("prompt_ids"), py::arg("max_new_tokens"),
            py::arg("alpha") = std::nullopt, py::arg("layers") = std::nullopt,
            py::arg("hook_prefill") = false,
            "greedy decode; returns dict with tokens, per-step attention rows, logits");
}
