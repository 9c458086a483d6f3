// Desk-scale ground truth. Two generators:
//  - plant_dataset draws labeled VAR profiles with a controlled separation
//    between real and hallucinated tokens inside a middle-layer range;
//  - scripted scenes build tiny models whose weights are constructed so that
//    the probability of emitting a ground-truth object token rises
//    monotonically with the attention mass placed on the image tokens inside
//    the enrichment layer range, while a prompt-side prior keeps distractor
//    tokens competitive when image attention is low.
#pragma once

#include <string>
#include <vector>

#include "halluscope/chair.hpp"
#include "halluscope/detector.hpp"
#include "halluscope/model.hpp"

namespace halluscope {

struct PlantSpec {
    int num_real = 1000;
    int num_halluc = 1000;
    int num_layers = 32;
    int num_heads = 32;
    LayerRange in_range{5, 18};
    double mu_real = 0.121;    // per-layer-head VAR mean inside the range
    double mu_halluc = 0.089;
    double sigma = 0.02;
    double mu_background = 0.05;  // outside the range, both classes
    uint64_t seed = 1;

    void validate() const;
};

/// Draws clamped-normal VAR profiles and an 8:2 split, all from spec.seed.
DetectionDataset plant_dataset(const PlantSpec& spec);

PlantSpec load_plant_spec(const std::string& path);
void save_plant_spec(const PlantSpec& spec, const std::string& path);

// --- scripted scenes ----------------------------------------------------

/// Fixed vocabulary shared by all scripted scenes: <eos>, the default prompt
/// words, and 24 single-word object categories from the starter lexicon.
const std::vector<std::string>& scene_vocab();
int scene_object_id_begin();

struct ScriptedScene {
    std::string id;
    std::vector<int> gt_object_ids;
    std::vector<int> distractor_ids;
    std::vector<double> gt_priors;          // per GT object, prompt-side weight
    std::vector<double> distractor_priors;  // per distractor, prompt-side weight
    uint64_t seed = 0;

    void validate() const;
};

/// Construction constants for the scripted model. Defaults are calibrated so
/// the no-hook decode hallucinates on a sizable fraction of scenes and the
/// heads-guided intervention suppresses most of it.
struct SceneParams {
    int num_image_tokens = 4;
    int num_layers = 6;
    LayerRange enrich_range{2, 4};  // the scene's visual-enrichment layers
    int max_new_tokens = 8;

    double obj_direction = 0.25;   // per-token designated object component
    double common_bundle = 1.0;    // shared GT mix carried by every image token
    double eos_drive = 0.30;       // eos component carried by image tokens
    double eos_said = 0.30;        // eos component carried by emitted object words
    double inhibit = 2.0;          // embedding pushback of an emitted word
    double img_marker = 1.0;
    double txt_marker = 1.0;
    double pos_tag = 1.0;

    double img_q_in = 0.5;    // head 0 query gain inside the enrichment range
    double img_q_out = -1.5;  // outside: image scores strongly negative
    double img_k = 0.5;
    double ctx_q = 0.45;
    double ctx_k = 0.45;
    double ctx_img_k = -2.2;  // head 1 key gain on image marker (dispreferred)
    double self_tag = 2.0;    // per-position self keys at image rows
    double out_img = 0.8;     // output gains per head
    double out_ctx = 0.8;
};

/// Builds the per-scene model and the input prefix (image embeddings plus the
/// default prompt ids). Deterministic in (scene, params).
struct ScriptedModel {
    ModelWeights weights;
    TokenSequence prefix;
};
ScriptedModel scripted_model(const ScriptedScene& scene, const SceneParams& params);

/// Seeded scene corpus; image ids "scene-0000", "scene-0001", ...
std::vector<ScriptedScene> make_scene_corpus(int count, uint64_t seed);

std::vector<ScriptedScene> load_scenes_json(const std::string& path);
void save_scenes_json(const std::vector<ScriptedScene>& scenes, const std::string& path);

/// Ground-truth category names per scene image id.
AnnotationSet scene_annotations(const std::vector<ScriptedScene>& scenes);

/// Greedy decode of one scene; hook may be null.
GenerationResult run_scene(const ScriptedScene& scene, const SceneParams& params,
                           const ScoreHook* hook, const CaptureFlags& capture);

/// Token ids to caption text (eos stripped).
std::string caption_text(const std::vector<int>& token_ids, const ModelConfig& config);

/// Labels the generated object tokens of a scene run against the scene ground
/// truth (first occurrence of each object word only) and extracts VAR
/// profiles; image hidden states are attached when captured.
std::vector<LabeledToken> label_scene_tokens(const ScriptedScene& scene,
                                             const GenerationResult& result,
                                             const SceneParams& params);

}  // namespace halluscope
