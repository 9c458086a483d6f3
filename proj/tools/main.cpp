// halluscope CLI: generation with a toy instrumented multimodal decoder,
// attention analysis, hallucination detection, intervention sweeps, CHAIR
// scoring, and synthetic-benchmark orchestration. Every command writes its
// outputs plus a manifest.json into a run directory and is reproducible from
// its --seed.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "halluscope/chair.hpp"
#include "halluscope/detector.hpp"
#include "halluscope/intervention.hpp"
#include "halluscope/io.hpp"
#include "halluscope/lens.hpp"
#include "halluscope/mlp.hpp"
#include "halluscope/model.hpp"
#include "halluscope/parallel.hpp"
#include "halluscope/rng.hpp"
#include "halluscope/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace halluscope;

#ifndef HALLUSCOPE_VERSION
#define HALLUSCOPE_VERSION "0.0.0"
#endif

namespace {

std::string hex64(uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    return buf;
}

// Collects outputs and provenance; manifest.json is written last, atomically.
class RunContext {
public:
    RunContext(const std::string& command, std::string out_dir, bool force, uint64_t seed)
        : start_(std::chrono::steady_clock::now()) {
        if (out_dir.empty()) out_dir = "runs/" + timestamp_utc() + "-" + command;
        dir_ = out_dir;
        if (fs::exists(dir_) && !fs::is_empty(dir_) && !force)
            throw std::runtime_error("output directory '" + dir_ +
                                     "' exists; pass --force to overwrite");
        fs::create_directories(dir_);
        manifest_.command = command;
        manifest_.tool_version = HALLUSCOPE_VERSION;
        manifest_.seed = seed;
    }

    const std::string& dir() const { return dir_; }
    std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

    void note_input(const std::string& file_path) {
        manifest_.input_hashes[file_path] = hex64(io::fnv1a64_file(file_path));
    }
    void note_output(const std::string& name) { manifest_.outputs.push_back(name); }
    void set_config(const json& config) { manifest_.config_json = config.dump(); }

    void finish() {
        const auto elapsed = std::chrono::steady_clock::now() - start_;
        manifest_.wall_clock_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
        io::write_manifest(manifest_, path("manifest.json"));
        std::printf("wrote %s (%zu outputs)\n", dir_.c_str(), manifest_.outputs.size());
    }

private:
    std::string dir_;
    io::RunManifest manifest_;
    std::chrono::steady_clock::time_point start_;
};

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string to_lower_copy(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<int> tokenize_prompt(const std::string& prompt, const ModelConfig& config) {
    if (config.vocab.empty())
        throw std::runtime_error("model has no vocab table; pass --prompt-ids instead of --prompt");
    std::vector<int> ids;
    std::stringstream ss(prompt);
    std::string word;
    while (ss >> word) {
        std::string clean;
        for (char c : word)
            if (std::isalnum(static_cast<unsigned char>(c))) clean += c;
        if (clean.empty()) continue;
        const int id = config.token_id(to_lower_copy(clean));
        if (id < 0) throw std::runtime_error("prompt word '" + clean + "' is not in the model vocab");
        ids.push_back(id);
    }
    if (ids.empty()) throw std::runtime_error("prompt produced no tokens");
    return ids;
}

// Shared intervention flags.
struct InterventionFlags {
    std::string preset;
    double alpha = -1.0;  // <0: unset
    std::string layers;
    bool hook_prefill = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--preset", preset, "intervention preset (llava-1.5, shikra, minigpt4)");
        cmd->add_option("--alpha", alpha, "intervention balance factor");
        cmd->add_option("--layers", layers, "intervention layer range ls:le");
        cmd->add_flag("--hook-prefill", hook_prefill, "apply the hook to prefill rows too");
    }

    bool active() const { return !preset.empty() || alpha >= 0.0 || !layers.empty(); }

    InterventionConfig resolve(int model_layers) const {
        InterventionConfig config;
        if (!preset.empty()) {
            const ConfigPreset p = preset_by_name(preset);
            config.layers = p.layers;
            config.alpha = p.alpha;
        }
        if (alpha >= 0.0) config.alpha = alpha;
        if (!layers.empty()) config.layers = LayerRange::parse(layers);
        if (preset.empty() && layers.empty())
            throw std::runtime_error("intervention needs --layers or --preset");
        config.apply_during_prefill = hook_prefill;
        config.layers.validate(model_layers);
        config.validate();
        return config;
    }

    json config_json() const {
        return json{{"preset", preset},
                    {"alpha", alpha},
                    {"layers", layers},
                    {"hook_prefill", hook_prefill}};
    }
};

std::vector<uint8_t> dataset_labels(const DetectionDataset& ds) {
    std::vector<uint8_t> labels;
    labels.reserve(ds.tokens.size());
    for (const auto& t : ds.tokens) labels.push_back(t.label == TokenLabel::real ? 1 : 0);
    return labels;
}

void require_both_classes(const std::vector<uint8_t>& labels) {
    bool pos = false, neg = false;
    for (uint8_t l : labels) (l ? pos : neg) = true;
    if (!pos || !neg)
        throw std::runtime_error("dataset must contain both real and hallucinated tokens");
}

std::string chair_table(const ChairReport& rep) {
    std::ostringstream out;
    out << "metric      value\n";
    out << "C_S         " << io::format_double(rep.chair_s) << "\n";
    out << "C_I         " << io::format_double(rep.chair_i) << "\n";
    out << "precision   " << io::format_double(rep.precision) << "\n";
    out << "recall      " << io::format_double(rep.recall) << "\n";
    out << "F1          " << io::format_double(rep.f1) << "\n";
    return out.str();
}

json chair_json(const ChairReport& rep) {
    json j{{"c_s", rep.chair_s},
           {"c_i", rep.chair_i},
           {"precision", rep.precision},
           {"recall", rep.recall},
           {"f1", rep.f1}};
    json captions = json::array();
    for (const auto& d : rep.captions)
        captions.push_back(json{{"image_id", d.image_id},
                                {"mentioned", d.mentioned},
                                {"hallucinated", d.hallucinated}});
    j["captions"] = std::move(captions);
    return j;
}

// ---------------------------------------------------------------- init-model

void cmd_init_model(const std::string& config_path, const std::string& out_dir, bool force) {
    const ModelConfig config = io::load_model_config(config_path);
    RunContext run("init-model", out_dir, force, config.rng_seed);
    run.note_input(config_path);

    const ModelWeights weights = init_model(config);
    io::save_model_config(config, run.path("model.json"));
    io::save_model_weights(weights, run.path("model.bin"));
    run.note_output("model.json");
    run.note_output("model.bin");

    // A matching random embedding file so the model is usable immediately.
    Rng rng = Rng(config.rng_seed).child("image-embeddings");
    Matrix embeddings(config.num_image_tokens, config.model_dim);
    for (double& v : embeddings.data)
        v = static_cast<double>(static_cast<float>(rng.uniform(-0.5, 0.5)));
    io::save_image_embeddings(embeddings, run.path("embeddings.bin"));
    run.note_output("embeddings.bin");

    run.set_config(json{{"config", config_path}});
    run.finish();
}

// ------------------------------------------------------------------ generate

struct GenerateArgs {
    std::string model_config, model_weights, embeddings;
    std::string prompt = "Please help me describe the image in detail.";
    std::string prompt_ids;
    int max_new_tokens = 8;
    uint64_t seed = 1;
    bool capture_pre = false, capture_mhsa = false, capture_image_hidden = false;
    InterventionFlags intervention;
    std::string out_dir;
    bool force = false;
};

void cmd_generate(const GenerateArgs& args) {
    const ModelConfig config = io::load_model_config(args.model_config);
    const ModelWeights weights = io::load_model_weights(config, args.model_weights);
    const Matrix embeddings = io::load_image_embeddings(args.embeddings);
    if (embeddings.rows != config.num_image_tokens || embeddings.cols != config.model_dim)
        throw std::runtime_error("embedding file shape does not match the model config");

    std::vector<int> prompt_ids;
    if (!args.prompt_ids.empty()) {
        for (const auto& tok : split_list(args.prompt_ids)) prompt_ids.push_back(std::stoi(tok));
    } else {
        prompt_ids = tokenize_prompt(args.prompt, config);
    }

    RunContext run("generate", args.out_dir, args.force, args.seed);
    run.note_input(args.model_config);
    run.note_input(args.model_weights);
    run.note_input(args.embeddings);

    ScoreHook hook;
    const ScoreHook* hook_ptr = nullptr;
    if (args.intervention.active()) {
        hook = build_hook(args.intervention.resolve(config.num_layers), config.num_layers);
        hook_ptr = &hook;
    }

    CaptureFlags capture;
    capture.pre_softmax = args.capture_pre;
    capture.mhsa_output = args.capture_mhsa;
    capture.image_hidden = args.capture_image_hidden;

    const GenerationResult result =
        greedy_decode(weights, embeddings, prompt_ids, args.max_new_tokens, hook_ptr, capture);

    io::save_generation_result(result, run.path("generation.json"));
    run.note_output("generation.json");

    json tokens = json::array();
    for (int id : result.generated_token_ids)
        tokens.push_back(json{{"id", id}, {"text", config.token_str(id)}});
    io::write_text_atomic(run.path("tokens.json"), tokens.dump(2) + "\n");
    run.note_output("tokens.json");

    io::write_text_atomic(run.path("caption.txt"),
                          caption_text(result.generated_token_ids, config) + "\n");
    run.note_output("caption.txt");

    // Self-contained run dir: analyze reads the model from here.
    io::save_model_config(config, run.path("model.json"));
    io::save_model_weights(weights, run.path("model.bin"));
    run.note_output("model.json");
    run.note_output("model.bin");

    run.set_config(json{{"prompt_ids", prompt_ids},
                        {"max_new_tokens", args.max_new_tokens},
                        {"capture_pre", args.capture_pre},
                        {"capture_mhsa", args.capture_mhsa},
                        {"capture_image_hidden", args.capture_image_hidden},
                        {"intervention", args.intervention.config_json()}});
    run.finish();
}

// ------------------------------------------------------------------- analyze

struct AnalyzeArgs {
    std::string run_dir;
    std::string ops = "var,svar";
    std::string range;
    std::string heatmap_layers;
    int token = -1;  // -1: all generated tokens
    bool lens_final_norm = false;
    std::string out_dir;
    bool force = false;
};

void cmd_analyze(const AnalyzeArgs& args) {
    const std::string gen_path = (fs::path(args.run_dir) / "generation.json").string();
    const std::string config_path = (fs::path(args.run_dir) / "model.json").string();
    const std::string weights_path = (fs::path(args.run_dir) / "model.bin").string();
    const ModelConfig config = io::load_model_config(config_path);
    const ModelWeights weights = io::load_model_weights(config, weights_path);
    const GenerationResult result = io::load_generation_result(gen_path);
    if (result.records.empty()) throw std::runtime_error("run has no attention records");

    std::set<std::string> ops;
    for (const auto& op : split_list(args.ops)) ops.insert(op);
    for (const auto& op : ops)
        if (op != "var" && op != "svar" && op != "lens" && op != "heatmap" && op != "contrib")
            throw std::runtime_error("unknown analyze op '" + op + "'");

    const LayerRange range =
        args.range.empty() ? LayerRange{0, config.num_layers - 1} : LayerRange::parse(args.range);
    range.validate(config.num_layers);

    std::string out_dir = args.out_dir;
    if (out_dir.empty()) out_dir = (fs::path(args.run_dir) / "analysis").string();
    RunContext run("analyze", out_dir, args.force, 0);
    run.note_input(gen_path);

    std::vector<int> layers_wanted;
    if (args.heatmap_layers.empty()) {
        for (int l = 0; l < config.num_layers; ++l) layers_wanted.push_back(l);
    } else {
        for (const auto& tok : split_list(args.heatmap_layers))
            layers_wanted.push_back(std::stoi(tok));
    }

    std::vector<int> token_steps;
    if (args.token >= 0) {
        if (args.token >= static_cast<int>(result.records.size()))
            throw std::runtime_error("token index beyond the generated sequence");
        token_steps.push_back(args.token);
    } else {
        for (size_t k = 0; k < result.records.size(); ++k)
            token_steps.push_back(static_cast<int>(k));
    }

    std::ostringstream svar_csv;
    svar_csv << "token,svar\n";

    for (int k : token_steps) {
        const AttentionRecord& record = result.records[k];
        const VarProfile profile = var(record, config.num_image_tokens);
        const std::string token_dir = "token_" + std::to_string(k);
        fs::create_directories(fs::path(run.dir()) / token_dir);

        if (ops.count("var")) {
            std::ostringstream csv;
            csv << "layer,head,var\n";
            for (int l = 0; l < profile.num_layers(); ++l)
                for (int h = 0; h < profile.num_heads(); ++h)
                    csv << l << ',' << h << ','
                        << io::format_double(profile.values.at(l, h)) << "\n";
            io::write_text_atomic(run.path(token_dir + "/var_profile.csv"), csv.str());
            run.note_output(token_dir + "/var_profile.csv");
        }
        if (ops.count("svar"))
            svar_csv << k << ',' << io::format_double(svar(profile, range)) << "\n";
        if (ops.count("heatmap")) {
            for (const HeadHeatmap& hm :
                 head_heatmaps(record, config.num_image_tokens, layers_wanted)) {
                std::ostringstream csv;
                for (int r = 0; r < hm.grid.rows; ++r) {
                    for (int c = 0; c < hm.grid.cols; ++c) {
                        if (c) csv << ',';
                        csv << io::format_double(hm.grid.at(r, c));
                    }
                    csv << "\n";
                }
                const std::string name = token_dir + "/heatmap_" + std::to_string(hm.layer) +
                                         "_" + std::to_string(hm.head) + ".csv";
                io::write_text_atomic(run.path(name), csv.str());
                run.note_output(name);
            }
        }
        if (ops.count("lens")) {
            if (record.image_hidden.empty())
                throw std::runtime_error(
                    "run lacks image hidden states; regenerate with --capture-image-hidden");
            const auto grid = lens_decode_image_tokens(
                record, weights.unembedding, args.lens_final_norm ? &weights.ln_f : nullptr);
            std::ostringstream tsv;
            for (const auto& row : grid) {
                for (size_t i = 0; i < row.size(); ++i) {
                    if (i) tsv << '\t';
                    tsv << config.token_str(row[i]);
                }
                tsv << "\n";
            }
            io::write_text_atomic(run.path(token_dir + "/lens_grid.tsv"), tsv.str());
            run.note_output(token_dir + "/lens_grid.tsv");
        }
        if (ops.count("contrib")) {
            if (record.mhsa_out.empty())
                throw std::runtime_error(
                    "run lacks MHSA sublayer captures; regenerate with --capture-mhsa");
            const int target = result.generated_token_ids[k];
            const auto contrib = mhsa_contribution(record, weights.unembedding, target,
                                                   args.lens_final_norm ? &weights.ln_f : nullptr);
            std::ostringstream csv;
            csv << "layer,contribution\n";
            for (size_t l = 0; l < contrib.size(); ++l)
                csv << l << ',' << io::format_double(contrib[l]) << "\n";
            io::write_text_atomic(run.path(token_dir + "/contrib.csv"), csv.str());
            run.note_output(token_dir + "/contrib.csv");
        }
    }

    if (ops.count("svar")) {
        io::write_text_atomic(run.path("svar.csv"), svar_csv.str());
        run.note_output("svar.csv");
    }

    run.set_config(json{{"ops", args.ops},
                        {"range", range.str()},
                        {"token", args.token},
                        {"lens_final_norm", args.lens_final_norm}});
    run.finish();
}

// -------------------------------------------------------------------- detect

struct DetectArgs {
    std::string dataset;
    std::string mode = "svar";
    std::string range;
    std::string detector_path;  // reuse a saved detector instead of training
    std::string hidden = "64,128,256,512";
    std::string lrs = "1e-2,1e-3,1e-4";
    int epochs = 200;
    uint64_t seed = 1;
    std::string out_dir;
    bool force = false;
};

void cmd_detect(const DetectArgs& args) {
    DetectionDataset dataset = io::load_dataset_jsonl(args.dataset);
    if (dataset.tokens.empty()) throw std::runtime_error("dataset is empty");
    const std::vector<uint8_t> labels = dataset_labels(dataset);
    require_both_classes(labels);

    const int num_layers = dataset.tokens[0].profile.num_layers();
    const int num_heads = dataset.tokens[0].profile.num_heads();
    const LayerRange range =
        args.range.empty() ? LayerRange{0, num_layers - 1} : LayerRange::parse(args.range);
    range.validate(num_layers);

    RunContext run("detect", args.out_dir, args.force, args.seed);
    run.note_input(args.dataset);

    json report;
    report["mode"] = args.mode;
    report["range"] = range.str();
    report["feature_dim"] = range.count() * num_heads;

    if (args.mode == "svar" || args.mode == "internal-confidence") {
        std::vector<double> scores;
        if (args.mode == "svar") {
            scores = svar_score(dataset, range);
        } else {
            scores.reserve(dataset.tokens.size());
            for (const auto& t : dataset.tokens) {
                if (!t.internal_confidence_score)
                    throw std::runtime_error(
                        "dataset lacks internal-confidence scores; rebuild it with synth "
                        "scene-dataset (captures image hidden states) or add an 'ic' field");
                scores.push_back(*t.internal_confidence_score);
            }
        }
        const CurveReport curves = roc_pr(scores, labels);
        io::save_curves_csv(curves, run.path("curves.csv"));
        run.note_output("curves.csv");
        report["auroc"] = curves.auroc;
        report["average_precision"] = curves.average_precision;
        report["accuracy_at_0.5"] = curves.accuracy_at_half;
        report["recall_at_0.5"] = curves.recall_at_half;
    } else if (args.mode == "mlp") {
        dataset.assign_split(Rng(args.seed).child("split").seed());
        MlpClassifier model;
        int epochs_used = args.epochs;
        if (!args.detector_path.empty()) {
            run.note_input(args.detector_path);
            model = io::load_detector_json(args.detector_path);
            if (!(model.feature_range == range))
                throw std::runtime_error("saved detector was trained on range " +
                                         model.feature_range.str());
        } else {
            MlpHyperParams hyper;
            hyper.hidden_sizes.clear();
            for (const auto& h : split_list(args.hidden))
                hyper.hidden_sizes.push_back(std::stoi(h));
            hyper.learning_rates.clear();
            for (const auto& lr : split_list(args.lrs))
                hyper.learning_rates.push_back(std::stod(lr));
            hyper.epochs = args.epochs;
            model = train_mlp(dataset, range, hyper, Rng(args.seed).child("mlp").seed());
        }
        const MlpMetrics metrics = evaluate_mlp(model, dataset);
        io::save_detector_json(model, run.path("detector.json"));
        run.note_output("detector.json");

        // Curves over the test split's real-class probabilities.
        std::vector<double> probs;
        std::vector<uint8_t> test_labels;
        for (int i : dataset.split_indices(false)) {
            probs.push_back(model.predict_proba(dataset.tokens[i].profile.flatten(range))[1]);
            test_labels.push_back(labels[i]);
        }
        require_both_classes(test_labels);
        io::save_curves_csv(roc_pr(probs, test_labels), run.path("curves.csv"));
        run.note_output("curves.csv");

        report["accuracy"] = metrics.accuracy;
        report["auroc"] = metrics.auroc;
        report["recall"] = metrics.recall;
        report["hidden_dim"] = model.hidden_dim;
        report["learning_rate"] = model.learning_rate;
        report["epochs"] = epochs_used;
    } else {
        throw std::runtime_error("unknown detect mode '" + args.mode +
                                 "' (expected svar, mlp, or internal-confidence)");
    }

    io::write_text_atomic(run.path("report.json"), report.dump(2) + "\n");
    run.note_output("report.json");
    run.set_config(json{{"mode", args.mode},
                        {"range", range.str()},
                        {"feature_dim", range.count() * num_heads},
                        {"hidden", args.hidden},
                        {"lr", args.lrs},
                        {"epochs", args.epochs}});
    run.finish();
}

// --------------------------------------------------------------------- sweep

struct SweepArgs {
    std::string param = "alpha";
    std::string values;
    std::string scenes_path;
    int count = 50;
    uint64_t scene_seed = 7;
    double alpha = 0.5;  // for layer sweeps
    std::string range;   // for alpha sweeps; default: scene enrichment range
    uint64_t seed = 1;
    std::string out_dir;
    bool force = false;
};

void cmd_sweep(const SweepArgs& args) {
    const std::vector<std::string> values = split_list(args.values);
    if (values.size() < 2) throw std::runtime_error("sweep needs at least 2 values");
    if (args.param != "alpha" && args.param != "layers")
        throw std::runtime_error("sweep param must be alpha or layers");

    RunContext run("sweep", args.out_dir, args.force, args.seed);
    std::vector<ScriptedScene> scenes;
    if (!args.scenes_path.empty()) {
        run.note_input(args.scenes_path);
        scenes = load_scenes_json(args.scenes_path);
    } else {
        scenes = make_scene_corpus(args.count, args.scene_seed);
    }

    const SceneParams params;
    const AnnotationSet annotations = scene_annotations(scenes);
    const Lexicon lexicon = Lexicon::coco_default();

    std::ostringstream csv;
    csv << "param,value,c_s,c_i,precision,recall,f1\n";
    for (const auto& value : values) {
        InterventionConfig config;
        config.alpha = args.alpha;
        config.layers = args.range.empty() ? params.enrich_range : LayerRange::parse(args.range);
        if (args.param == "alpha") config.alpha = std::stod(value);
        else config.layers = LayerRange::parse(value);
        config.layers.validate(params.num_layers);
        config.validate();
        const ScoreHook hook = build_hook(config, params.num_layers);

        std::vector<std::string> captions(scenes.size());
        parallel_for(static_cast<int>(scenes.size()), [&](int i) {
            const GenerationResult result = run_scene(scenes[i], params, &hook, {});
            captions[i] = caption_text(result.generated_token_ids,
                                       scripted_model(scenes[i], params).weights.config);
        });
        std::map<std::string, std::string> caption_map;
        for (size_t i = 0; i < scenes.size(); ++i) caption_map[scenes[i].id] = captions[i];

        const ChairReport rep = chair(caption_map, annotations, lexicon);
        csv << args.param << ',' << value << ',' << io::format_double(rep.chair_s) << ','
            << io::format_double(rep.chair_i) << ',' << io::format_double(rep.precision) << ','
            << io::format_double(rep.recall) << ',' << io::format_double(rep.f1) << "\n";
    }
    io::write_text_atomic(run.path("sweep.csv"), csv.str());
    run.note_output("sweep.csv");

    run.set_config(json{{"param", args.param},
                        {"values", args.values},
                        {"scene_count", static_cast<int>(scenes.size())},
                        {"scene_seed", args.scene_seed},
                        {"alpha", args.alpha},
                        {"range", args.range}});
    run.finish();
}

// --------------------------------------------------------------------- chair

void cmd_chair(const std::string& captions_path, const std::string& annotations_path,
               const std::string& lexicon_path, const std::string& out_dir, bool force) {
    const auto captions = io::load_captions_jsonl(captions_path);
    if (captions.empty()) throw std::runtime_error("captions file contains no captions");
    const AnnotationSet annotations = io::load_annotations_json(annotations_path);

    RunContext run("chair", out_dir, force, 0);
    run.note_input(captions_path);
    run.note_input(annotations_path);
    Lexicon lexicon;
    if (lexicon_path.empty()) {
        lexicon = Lexicon::coco_default();
    } else {
        run.note_input(lexicon_path);
        lexicon = io::load_lexicon_json(lexicon_path);
    }

    const ChairReport rep = chair(captions, annotations, lexicon);
    io::write_text_atomic(run.path("report.json"), chair_json(rep).dump(2) + "\n");
    run.note_output("report.json");
    io::write_text_atomic(run.path("report.txt"), chair_table(rep));
    run.note_output("report.txt");
    std::printf("C_S=%s C_I=%s F1=%s\n", io::format_double(rep.chair_s).c_str(),
                io::format_double(rep.chair_i).c_str(), io::format_double(rep.f1).c_str());

    run.set_config(json{{"captions", captions_path},
                        {"annotations", annotations_path},
                        {"lexicon", lexicon_path.empty() ? "<builtin>" : lexicon_path}});
    run.finish();
}

// --------------------------------------------------------------------- synth

void cmd_synth_plant(const std::string& spec_path, const std::string& out_dir, bool force) {
    PlantSpec spec;
    if (!spec_path.empty()) spec = load_plant_spec(spec_path);
    RunContext run("synth-plant", out_dir, force, spec.seed);
    if (!spec_path.empty()) run.note_input(spec_path);

    const DetectionDataset dataset = plant_dataset(spec);
    io::save_dataset_jsonl(dataset, run.path("dataset.jsonl"));
    run.note_output("dataset.jsonl");
    save_plant_spec(spec, run.path("plant_spec.json"));
    run.note_output("plant_spec.json");

    run.set_config(json{{"num_real", spec.num_real},
                        {"num_halluc", spec.num_halluc},
                        {"range", spec.in_range.str()},
                        {"mu_real", spec.mu_real},
                        {"mu_halluc", spec.mu_halluc}});
    run.finish();
}

void cmd_synth_scenes(int count, uint64_t seed, const std::string& out_dir, bool force) {
    RunContext run("synth-scenes", out_dir, force, seed);
    const auto scenes = make_scene_corpus(count, seed);
    save_scenes_json(scenes, run.path("scenes.json"));
    run.note_output("scenes.json");
    io::save_annotations_json(scene_annotations(scenes), run.path("annotations.json"));
    run.note_output("annotations.json");
    run.set_config(json{{"count", count}});
    run.finish();
}

void cmd_synth_scene_dataset(const std::string& scenes_path, uint64_t seed,
                             const std::string& out_dir, bool force) {
    RunContext run("synth-scene-dataset", out_dir, force, seed);
    run.note_input(scenes_path);
    const auto scenes = load_scenes_json(scenes_path);
    const SceneParams params;

    CaptureFlags capture;
    capture.image_hidden = true;

    std::vector<std::vector<LabeledToken>> per_scene(scenes.size());
    parallel_for(static_cast<int>(scenes.size()), [&](int i) {
        const GenerationResult result = run_scene(scenes[i], params, nullptr, capture);
        std::vector<LabeledToken> tokens = label_scene_tokens(scenes[i], result, params);
        const ScriptedModel model = scripted_model(scenes[i], params);
        for (auto& token : tokens) {
            token.internal_confidence_score =
                internal_confidence(token, model.weights.unembedding, token.object_token_id);
            token.image_hidden.clear();  // not serialized; the score carries the baseline
        }
        per_scene[i] = std::move(tokens);
    });

    DetectionDataset dataset;
    for (auto& tokens : per_scene)
        for (auto& token : tokens) dataset.tokens.push_back(std::move(token));
    if (dataset.tokens.empty())
        throw std::runtime_error("scenes produced no labeled object tokens");
    dataset.assign_split(Rng(seed).child("split").seed());
    io::save_dataset_jsonl(dataset, run.path("dataset.jsonl"));
    run.note_output("dataset.jsonl");

    run.set_config(json{{"scenes", scenes_path}, {"tokens", dataset.size()}});
    run.finish();
}

void cmd_synth_scene_model(const std::string& scenes_path, int index, const std::string& out_dir,
                           bool force) {
    const auto scenes = load_scenes_json(scenes_path);
    if (index < 0 || index >= static_cast<int>(scenes.size()))
        throw std::runtime_error("scene index out of range");
    const SceneParams params;
    const ScriptedModel model = scripted_model(scenes[index], params);

    RunContext run("synth-scene-model", out_dir, force, scenes[index].seed);
    run.note_input(scenes_path);
    io::save_model_config(model.weights.config, run.path("model.json"));
    io::save_model_weights(model.weights, run.path("model.bin"));
    io::save_image_embeddings(model.prefix.image_embeddings, run.path("embeddings.bin"));
    run.note_output("model.json");
    run.note_output("model.bin");
    run.note_output("embeddings.bin");
    run.set_config(json{{"scene", scenes[index].id}, {"index", index}});
    run.finish();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-lens analysis, hallucination detection and mitigation for a toy "
                 "multimodal decoder"};
    app.require_subcommand(1);
    app.set_version_flag("--version", HALLUSCOPE_VERSION);

    auto* init_cmd =
        app.add_subcommand("init-model", "create deterministic model files from a config");
    std::string init_config, init_out;
    bool init_force = false;
    init_cmd->add_option("--config", init_config, "model config JSON")->required();
    init_cmd->add_option("--out-dir", init_out, "output directory");
    init_cmd->add_flag("--force", init_force, "overwrite an existing output directory");

    auto* gen_cmd = app.add_subcommand("generate", "greedy decoding with attention recording");
    GenerateArgs gen;
    gen_cmd->add_option("--model-config", gen.model_config, "model config JSON")->required();
    gen_cmd->add_option("--model-weights", gen.model_weights, "model weight blob")->required();
    gen_cmd->add_option("--embeddings", gen.embeddings, "image embedding file")->required();
    gen_cmd->add_option("--prompt", gen.prompt, "prompt text (tokenized against the model vocab)");
    gen_cmd->add_option("--prompt-ids", gen.prompt_ids, "comma-separated prompt token ids");
    gen_cmd->add_option("--max-new-tokens", gen.max_new_tokens, "generation budget");
    gen_cmd->add_option("--seed", gen.seed, "run seed (recorded in the manifest)");
    gen_cmd->add_flag("--capture-pre", gen.capture_pre, "record pre-softmax scores");
    gen_cmd->add_flag("--capture-mhsa", gen.capture_mhsa, "record MHSA sublayer outputs");
    gen_cmd->add_flag("--capture-image-hidden", gen.capture_image_hidden,
                      "record image hidden states per layer");
    gen.intervention.attach(gen_cmd);
    gen_cmd->add_option("--out-dir", gen.out_dir, "output directory");
    gen_cmd->add_flag("--force", gen.force, "overwrite an existing output directory");

    auto* an_cmd = app.add_subcommand("analyze", "emit VAR/SVAR/lens/heatmap/contrib artifacts");
    AnalyzeArgs an;
    an_cmd->add_option("--run", an.run_dir, "generate run directory")->required();
    an_cmd->add_option("--ops", an.ops, "comma list of var,svar,lens,heatmap,contrib");
    an_cmd->add_option("--range", an.range, "layer range ls:le for svar");
    an_cmd->add_option("--heatmap-layers", an.heatmap_layers, "comma list of layers (default all)");
    an_cmd->add_option("--token", an.token, "generated-token index (default: all)");
    an_cmd->add_flag("--lens-final-norm", an.lens_final_norm,
                     "apply the final LayerNorm before the lens projection");
    an_cmd->add_option("--out-dir", an.out_dir, "output directory (default <run>/analysis)");
    an_cmd->add_flag("--force", an.force, "overwrite an existing output directory");

    auto* det_cmd = app.add_subcommand("detect", "score a labeled dataset for hallucinations");
    DetectArgs det;
    det_cmd->add_option("--dataset", det.dataset, "dataset.jsonl")->required();
    det_cmd->add_option("--mode", det.mode, "svar | mlp | internal-confidence");
    det_cmd->add_option("--range", det.range, "layer range ls:le");
    det_cmd->add_option("--detector", det.detector_path, "reuse a saved detector.json (mlp mode)");
    det_cmd->add_option("--hidden", det.hidden, "hidden sizes for the grid search");
    det_cmd->add_option("--lr", det.lrs, "learning rates for the grid search");
    det_cmd->add_option("--epochs", det.epochs, "training epochs");
    det_cmd->add_option("--seed", det.seed, "split/training seed");
    det_cmd->add_option("--out-dir", det.out_dir, "output directory");
    det_cmd->add_flag("--force", det.force, "overwrite an existing output directory");

    auto* sw_cmd = app.add_subcommand("sweep", "CHAIR/F1 table over alpha or layer-range values");
    SweepArgs sw;
    sw_cmd->add_option("--param", sw.param, "alpha | layers");
    sw_cmd->add_option("--values", sw.values, "comma list of sweep values")->required();
    sw_cmd->add_option("--scenes", sw.scenes_path, "scenes.json (default: generate a corpus)");
    sw_cmd->add_option("--count", sw.count, "scene count when generating");
    sw_cmd->add_option("--scene-seed", sw.scene_seed, "scene corpus seed");
    sw_cmd->add_option("--alpha", sw.alpha, "fixed alpha for layer sweeps");
    sw_cmd->add_option("--range", sw.range, "fixed range for alpha sweeps");
    sw_cmd->add_option("--seed", sw.seed, "run seed (recorded in the manifest)");
    sw_cmd->add_option("--out-dir", sw.out_dir, "output directory");
    sw_cmd->add_flag("--force", sw.force, "overwrite an existing output directory");

    auto* ch_cmd = app.add_subcommand("chair", "CHAIR / F1 caption scoring");
    std::string ch_captions, ch_annotations, ch_lexicon, ch_out;
    bool ch_force = false;
    ch_cmd->add_option("--captions", ch_captions, "captions.jsonl")->required();
    ch_cmd->add_option("--annotations", ch_annotations, "annotations.json")->required();
    ch_cmd->add_option("--lexicon", ch_lexicon, "lexicon.json (default: built-in COCO lexicon)");
    ch_cmd->add_option("--out-dir", ch_out, "output directory");
    ch_cmd->add_flag("--force", ch_force, "overwrite an existing output directory");

    auto* synth_cmd = app.add_subcommand("synth", "synthetic benchmark generators");
    synth_cmd->require_subcommand(1);

    auto* plant_cmd = synth_cmd->add_subcommand("plant", "planted VAR detection dataset");
    std::string plant_spec, plant_out;
    bool plant_force = false;
    plant_cmd->add_option("--spec", plant_spec, "plant_spec.json (default: calibrated defaults)");
    plant_cmd->add_option("--out-dir", plant_out, "output directory");
    plant_cmd->add_flag("--force", plant_force, "overwrite an existing output directory");

    auto* scenes_cmd = synth_cmd->add_subcommand("scenes", "scripted scene corpus");
    int scenes_count = 50;
    uint64_t scenes_seed = 7;
    std::string scenes_out;
    bool scenes_force = false;
    scenes_cmd->add_option("--count", scenes_count, "number of scenes");
    scenes_cmd->add_option("--seed", scenes_seed, "corpus seed");
    scenes_cmd->add_option("--out-dir", scenes_out, "output directory");
    scenes_cmd->add_flag("--force", scenes_force, "overwrite an existing output directory");

    auto* sds_cmd = synth_cmd->add_subcommand("scene-dataset",
                                              "labeled detection dataset from scene decodes");
    std::string sds_scenes, sds_out;
    uint64_t sds_seed = 1;
    bool sds_force = false;
    sds_cmd->add_option("--scenes", sds_scenes, "scenes.json")->required();
    sds_cmd->add_option("--seed", sds_seed, "split seed");
    sds_cmd->add_option("--out-dir", sds_out, "output directory");
    sds_cmd->add_flag("--force", sds_force, "overwrite an existing output directory");

    auto* smodel_cmd = synth_cmd->add_subcommand("scene-model", "export one scene's model files");
    std::string smodel_scenes, smodel_out;
    int smodel_index = 0;
    bool smodel_force = false;
    smodel_cmd->add_option("--scenes", smodel_scenes, "scenes.json")->required();
    smodel_cmd->add_option("--index", smodel_index, "scene index");
    smodel_cmd->add_option("--out-dir", smodel_out, "output directory");
    smodel_cmd->add_flag("--force", smodel_force, "overwrite an existing output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (init_cmd->parsed()) cmd_init_model(init_config, init_out, init_force);
        else if (gen_cmd->parsed()) cmd_generate(gen);
        else if (an_cmd->parsed()) cmd_analyze(an);
        else if (det_cmd->parsed()) cmd_detect(det);
        else if (sw_cmd->parsed()) cmd_sweep(sw);
        else if (ch_cmd->parsed())
            cmd_chair(ch_captions, ch_annotations, ch_lexicon, ch_out, ch_force);
        else if (synth_cmd->parsed()) {
            if (plant_cmd->parsed()) cmd_synth_plant(plant_spec, plant_out, plant_force);
            else if (scenes_cmd->parsed())
                cmd_synth_scenes(scenes_count, scenes_seed, scenes_out, scenes_force);
            else if (sds_cmd->parsed())
                cmd_synth_scene_dataset(sds_scenes, sds_seed, sds_out, sds_force);
            else if (smodel_cmd->parsed())
                cmd_synth_scene_model(smodel_scenes, smodel_index, smodel_out, smodel_force);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
