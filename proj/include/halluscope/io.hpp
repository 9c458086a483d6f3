// File formats: model config/weight blobs, image-embedding files, detection
// datasets, lexicons, annotations, captions, generation records, detector
// snapshots, CSV/TSV emitters, and run manifests. All writers are
// deterministic: identical inputs produce identical bytes.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "halluscope/chair.hpp"
#include "halluscope/detector.hpp"
#include "halluscope/mlp.hpp"
#include "halluscope/model.hpp"

namespace halluscope::io {

// --- model files ------------------------------------------------------
void save_model_config(const ModelConfig& config, const std::string& path);
ModelConfig load_model_config(const std::string& path);

/// Weight blob: magic "HSCP", u32 version, u32 header length, a JSON header
/// describing dims and the tensor list, then row-major little-endian f32 data.
void save_model_weights(const ModelWeights& weights, const std::string& path);
ModelWeights load_model_weights(const ModelConfig& config, const std::string& path);

// --- image embeddings: u32 n, u32 d, then n*d little-endian f32 --------
void save_image_embeddings(const Matrix& embeddings, const std::string& path);
Matrix load_image_embeddings(const std::string& path);

// --- detection dataset, one labeled token per JSONL line ---------------
void save_dataset_jsonl(const DetectionDataset& dataset, const std::string& path);
DetectionDataset load_dataset_jsonl(const std::string& path);

// --- CHAIR inputs -------------------------------------------------------
void save_lexicon_json(const Lexicon& lexicon, const std::string& path);
Lexicon load_lexicon_json(const std::string& path);
void save_annotations_json(const AnnotationSet& annotations, const std::string& path);
AnnotationSet load_annotations_json(const std::string& path);
void save_captions_jsonl(const std::map<std::string, std::string>& captions,
                         const std::string& path);
std::map<std::string, std::string> load_captions_jsonl(const std::string& path);

// --- generation output ---------------------------------------------------
void save_generation_result(const GenerationResult& result, const std::string& path);
GenerationResult load_generation_result(const std::string& path);

// --- detector snapshot ----------------------------------------------------
void save_detector_json(const MlpClassifier& model, const std::string& path);
MlpClassifier load_detector_json(const std::string& path);
void save_curves_csv(const CurveReport& report, const std::string& path);

// --- plain text helpers -----------------------------------------------
std::string read_text(const std::string& path);
/// Writes via a temporary file and rename.
void write_text_atomic(const std::string& path, const std::string& content);
uint64_t fnv1a64_file(const std::string& path);

/// Formats a double with enough digits for near-exact recomputation.
std::string format_double(double v);

// --- run manifest ----------------------------------------------------------
struct RunManifest {
    std::string command;
    std::string tool_version;
    std::string config_json;  // resolved configuration, serialized JSON object
    uint64_t seed = 0;
    std::map<std::string, std::string> input_hashes;  // path -> fnv1a64 hex
    std::vector<std::string> outputs;                 // file names within the run dir
    long wall_clock_ms = 0;
};

void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace halluscope::io
