#include "halluscope/io.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "halluscope/rng.hpp"

namespace halluscope::io {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "weight and embedding files are little-endian; big-endian hosts are unsupported");

namespace {

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return in;
}

json parse_file(const std::string& path) {
    std::ifstream in = open_in(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

void write_f32(std::ostream& out, const std::vector<double>& values) {
    for (double v : values) {
        const float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
}

void read_f32(std::istream& in, std::vector<double>& values, const std::string& path) {
    for (double& v : values) {
        float f = 0.0f;
        in.read(reinterpret_cast<char*>(&f), sizeof(float));
        if (!in) throw std::runtime_error("truncated weight data in " + path);
        if (!std::isfinite(f)) throw std::runtime_error("non-finite value in " + path);
        v = static_cast<double>(f);
    }
}

json var_matrix_json(const Matrix& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows; ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    Matrix m(static_cast<int>(j.size()), j.empty() ? 0 : static_cast<int>(j[0].size()));
    for (int r = 0; r < m.rows; ++r) {
        if (static_cast<int>(j[r].size()) != m.cols)
            throw std::runtime_error("ragged matrix in JSON");
        for (int c = 0; c < m.cols; ++c) m.at(r, c) = j[r][c].get<double>();
    }
    return m;
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string read_text(const std::string& path) {
    std::ifstream in = open_in(path, std::ios::in | std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::out | std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write file: " + tmp);
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

uint64_t fnv1a64_file(const std::string& path) {
    const std::string bytes = read_text(path);
    return fnv1a64(bytes.data(), bytes.size());
}

// --- model config -----------------------------------------------------

void save_model_config(const ModelConfig& config, const std::string& path) {
    json j{{"num_layers", config.num_layers},
           {"num_heads", config.num_heads},
           {"model_dim", config.model_dim},
           {"vocab_size", config.vocab_size},
           {"num_image_tokens", config.num_image_tokens},
           {"max_seq_len", config.max_seq_len},
           {"rng_seed", config.rng_seed},
           {"eos_token_id", config.eos_token_id}};
    if (!config.vocab.empty()) j["vocab"] = config.vocab;
    write_text_atomic(path, j.dump(2) + "\n");
}

ModelConfig load_model_config(const std::string& path) {
    const json j = parse_file(path);
    ModelConfig c;
    try {
        c.num_layers = j.at("num_layers").get<int>();
        c.num_heads = j.at("num_heads").get<int>();
        c.model_dim = j.at("model_dim").get<int>();
        c.vocab_size = j.at("vocab_size").get<int>();
        c.num_image_tokens = j.at("num_image_tokens").get<int>();
        c.max_seq_len = j.at("max_seq_len").get<int>();
        c.rng_seed = j.at("rng_seed").get<uint64_t>();
        c.eos_token_id = j.value("eos_token_id", -1);
        if (j.contains("vocab")) c.vocab = j.at("vocab").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid model config " + path + ": " + e.what());
    }
    c.validate();
    return c;
}

// --- weight blob ------------------------------------------------------

namespace {

struct TensorRef {
    std::string name;
    std::vector<double>* data;
    int rows;
    int cols;
};

std::vector<TensorRef> tensor_list(ModelWeights& w) {
    const int d = w.config.model_dim;
    std::vector<TensorRef> list = {
        {"embedding", &w.embedding.data, w.config.vocab_size, d},
        {"pos_embedding", &w.pos_embedding.data, w.config.max_seq_len, d},
        {"unembedding", &w.unembedding.data, w.config.vocab_size, d},
        {"ln_f.gamma", &w.ln_f.gamma, 1, d},
        {"ln_f.beta", &w.ln_f.beta, 1, d},
    };
    for (int l = 0; l < w.config.num_layers; ++l) {
        LayerWeights& lw = w.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        list.push_back({p + "wq", &lw.wq.data, d, d});
        list.push_back({p + "wk", &lw.wk.data, d, d});
        list.push_back({p + "wv", &lw.wv.data, d, d});
        list.push_back({p + "wo", &lw.wo.data, d, d});
        list.push_back({p + "w1", &lw.w1.data, 4 * d, d});
        list.push_back({p + "b1", &lw.b1, 1, 4 * d});
        list.push_back({p + "w2", &lw.w2.data, d, 4 * d});
        list.push_back({p + "b2", &lw.b2, 1, d});
        list.push_back({p + "ln1.gamma", &lw.ln1.gamma, 1, d});
        list.push_back({p + "ln1.beta", &lw.ln1.beta, 1, d});
        list.push_back({p + "ln2.gamma", &lw.ln2.gamma, 1, d});
        list.push_back({p + "ln2.beta", &lw.ln2.beta, 1, d});
    }
    return list;
}

constexpr char kMagic[4] = {'H', 'S', 'C', 'P'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_model_weights(const ModelWeights& weights, const std::string& path) {
    auto& mutable_w = const_cast<ModelWeights&>(weights);  // tensor_list only reads
    const auto tensors = tensor_list(mutable_w);

    json header;
    header["dims"] = {{"num_layers", weights.config.num_layers},
                      {"num_heads", weights.config.num_heads},
                      {"model_dim", weights.config.model_dim},
                      {"vocab_size", weights.config.vocab_size},
                      {"num_image_tokens", weights.config.num_image_tokens},
                      {"max_seq_len", weights.config.max_seq_len}};
    json tlist = json::array();
    for (const auto& t : tensors) tlist.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    header["tensors"] = std::move(tlist);
    const std::string header_str = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::out | std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write file: " + tmp);
        out.write(kMagic, 4);
        const uint32_t version = kVersion;
        const uint32_t header_len = static_cast<uint32_t>(header_str.size());
        out.write(reinterpret_cast<const char*>(&version), 4);
        out.write(reinterpret_cast<const char*>(&header_len), 4);
        out.write(header_str.data(), header_str.size());
        for (const auto& t : tensors) write_f32(out, *t.data);
    }
    std::filesystem::rename(tmp, path);
}

ModelWeights load_model_weights(const ModelConfig& config, const std::string& path) {
    config.validate();
    std::ifstream in = open_in(path, std::ios::in | std::ios::binary);

    char magic[4];
    uint32_t version = 0, header_len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&header_len), 4);
    if (!in || std::string(magic, 4) != std::string(kMagic, 4))
        throw std::runtime_error(path + " is not a HSCP weight file");
    if (version != kVersion)
        throw std::runtime_error(path + ": unsupported weight file version " + std::to_string(version));
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    if (!in) throw std::runtime_error("truncated header in " + path);
    const json header = json::parse(header_str);

    const json& dims = header.at("dims");
    auto check_dim = [&](const char* name, int expected) {
        const int got = dims.at(name).get<int>();
        if (got != expected)
            throw std::runtime_error(path + ": dimension mismatch for " + name + " (file " +
                                     std::to_string(got) + ", config " + std::to_string(expected) + ")");
    };
    check_dim("num_layers", config.num_layers);
    check_dim("num_heads", config.num_heads);
    check_dim("model_dim", config.model_dim);
    check_dim("vocab_size", config.vocab_size);
    check_dim("num_image_tokens", config.num_image_tokens);
    check_dim("max_seq_len", config.max_seq_len);

    ModelWeights w;
    w.config = config;
    const int d = config.model_dim;
    w.embedding = Matrix(config.vocab_size, d);
    w.pos_embedding = Matrix(config.max_seq_len, d);
    w.unembedding = Matrix(config.vocab_size, d);
    w.ln_f.gamma.resize(d);
    w.ln_f.beta.resize(d);
    w.layers.resize(config.num_layers);
    for (auto& lw : w.layers) {
        lw.wq = Matrix(d, d);
        lw.wk = Matrix(d, d);
        lw.wv = Matrix(d, d);
        lw.wo = Matrix(d, d);
        lw.w1 = Matrix(4 * d, d);
        lw.w2 = Matrix(d, 4 * d);
        lw.b1.resize(4 * d);
        lw.b2.resize(d);
        lw.ln1.gamma.resize(d);
        lw.ln1.beta.resize(d);
        lw.ln2.gamma.resize(d);
        lw.ln2.beta.resize(d);
    }

    const auto tensors = tensor_list(w);
    const json& tlist = header.at("tensors");
    if (tlist.size() != tensors.size())
        throw std::runtime_error(path + ": tensor count mismatch");
    for (size_t i = 0; i < tensors.size(); ++i) {
        const json& tj = tlist[i];
        if (tj.at("name").get<std::string>() != tensors[i].name ||
            tj.at("rows").get<int>() != tensors[i].rows ||
            tj.at("cols").get<int>() != tensors[i].cols)
            throw std::runtime_error(path + ": dimension mismatch for tensor " + tensors[i].name);
        read_f32(in, *tensors[i].data, path);
    }
    return w;
}

// --- image embeddings ---------------------------------------------------

void save_image_embeddings(const Matrix& embeddings, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::out | std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write file: " + tmp);
        const uint32_t n = static_cast<uint32_t>(embeddings.rows);
        const uint32_t d = static_cast<uint32_t>(embeddings.cols);
        out.write(reinterpret_cast<const char*>(&n), 4);
        out.write(reinterpret_cast<const char*>(&d), 4);
        write_f32(out, embeddings.data);
    }
    std::filesystem::rename(tmp, path);
}

Matrix load_image_embeddings(const std::string& path) {
    std::ifstream in = open_in(path, std::ios::in | std::ios::binary);
    uint32_t n = 0, d = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&d), 4);
    if (!in || n == 0 || d == 0) throw std::runtime_error("invalid embedding file header: " + path);
    Matrix m(static_cast<int>(n), static_cast<int>(d));
    read_f32(in, m.data, path);
    return m;
}

// --- detection dataset ----------------------------------------------------

void save_dataset_jsonl(const DetectionDataset& dataset, const std::string& path) {
    std::ostringstream out;
    for (const auto& token : dataset.tokens) {
        json j{{"id", token.example_id},
               {"k", token.token_pos},
               {"label", token.label == TokenLabel::real ? "real" : "hallucinated"},
               {"var", var_matrix_json(token.profile.values)}};
        if (token.internal_confidence_score) j["ic"] = *token.internal_confidence_score;
        if (token.object_token_id >= 0) j["object_token_id"] = token.object_token_id;
        out << j.dump() << "\n";
    }
    write_text_atomic(path, out.str());
}

DetectionDataset load_dataset_jsonl(const std::string& path) {
    std::ifstream in = open_in(path);
    DetectionDataset dataset;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        LabeledToken token;
        token.example_id = j.at("id").get<std::string>();
        token.token_pos = j.at("k").get<int>();
        const std::string label = j.at("label").get<std::string>();
        if (label == "real") token.label = TokenLabel::real;
        else if (label == "hallucinated") token.label = TokenLabel::hallucinated;
        else throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown label '" + label + "'");
        token.profile.token_pos = token.token_pos;
        token.profile.values = matrix_from_json(j.at("var"));
        for (double v : token.profile.values.data)
            if (!(v >= 0.0 && v <= 1.0))
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": var outside [0,1]");
        if (j.contains("ic")) token.internal_confidence_score = j.at("ic").get<double>();
        if (j.contains("object_token_id")) token.object_token_id = j.at("object_token_id").get<int>();
        dataset.tokens.push_back(std::move(token));
    }
    dataset.is_train.assign(dataset.tokens.size(), 0);
    return dataset;
}

// --- CHAIR inputs -----------------------------------------------------

void save_lexicon_json(const Lexicon& lexicon, const std::string& path) {
    json j = json::object();
    for (const auto& [canon, surfaces] : lexicon.entries()) {
        json list = json::array();
        for (const auto& s : surfaces)
            if (s != canon) list.push_back(s);
        j[canon] = std::move(list);
    }
    write_text_atomic(path, j.dump(2) + "\n");
}

Lexicon load_lexicon_json(const std::string& path) {
    const json j = parse_file(path);
    std::map<std::string, std::vector<std::string>> entries;
    for (const auto& [canon, list] : j.items())
        entries[canon] = list.get<std::vector<std::string>>();
    return Lexicon(entries);
}

void save_annotations_json(const AnnotationSet& annotations, const std::string& path) {
    json j = json::object();
    for (const auto& [image_id, categories] : annotations) {
        json list = json::array();
        for (const auto& c : categories) list.push_back(c);
        j[image_id] = std::move(list);
    }
    write_text_atomic(path, j.dump(2) + "\n");
}

AnnotationSet load_annotations_json(const std::string& path) {
    const json j = parse_file(path);
    AnnotationSet annotations;
    for (const auto& [image_id, list] : j.items()) {
        std::set<std::string>& cats = annotations[image_id];
        for (const auto& c : list) cats.insert(c.get<std::string>());
    }
    return annotations;
}

void save_captions_jsonl(const std::map<std::string, std::string>& captions,
                         const std::string& path) {
    std::ostringstream out;
    for (const auto& [image_id, caption] : captions)
        out << json{{"image_id", image_id}, {"caption", caption}}.dump() << "\n";
    write_text_atomic(path, out.str());
}

std::map<std::string, std::string> load_captions_jsonl(const std::string& path) {
    std::ifstream in = open_in(path);
    std::map<std::string, std::string> captions;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        captions[j.at("image_id").get<std::string>()] = j.at("caption").get<std::string>();
    }
    return captions;
}

// --- generation output ----------------------------------------------------

namespace {

json record_json(const AttentionRecord& rec) {
    json j{{"step", rec.step}, {"seq_len", rec.seq_len}, {"n", rec.num_image_tokens}};
    json post = json::array();
    for (const auto& m : rec.post) post.push_back(var_matrix_json(m));
    j["post"] = std::move(post);
    if (!rec.pre.empty()) {
        json pre = json::array();
        for (const auto& m : rec.pre) pre.push_back(var_matrix_json(m));
        j["pre"] = std::move(pre);
    }
    if (!rec.mhsa_out.empty()) j["mhsa"] = var_matrix_json(rec.mhsa_out);
    if (!rec.image_hidden.empty()) {
        json ih = json::array();
        for (const auto& m : rec.image_hidden) ih.push_back(var_matrix_json(m));
        j["image_hidden"] = std::move(ih);
    }
    return j;
}

AttentionRecord record_from_json(const json& j) {
    AttentionRecord rec;
    rec.step = j.at("step").get<int>();
    rec.seq_len = j.at("seq_len").get<int>();
    rec.num_image_tokens = j.at("n").get<int>();
    for (const auto& m : j.at("post")) rec.post.push_back(matrix_from_json(m));
    if (j.contains("pre"))
        for (const auto& m : j.at("pre")) rec.pre.push_back(matrix_from_json(m));
    if (j.contains("mhsa")) rec.mhsa_out = matrix_from_json(j.at("mhsa"));
    if (j.contains("image_hidden"))
        for (const auto& m : j.at("image_hidden")) rec.image_hidden.push_back(matrix_from_json(m));
    return rec;
}

}  // namespace

void save_generation_result(const GenerationResult& result, const std::string& path) {
    json j{{"tokens", result.generated_token_ids}};
    json records = json::array();
    for (const auto& rec : result.records) records.push_back(record_json(rec));
    j["records"] = std::move(records);
    json logits = json::array();
    for (const auto& row : result.step_logits) logits.push_back(row);
    j["logits"] = std::move(logits);
    write_text_atomic(path, j.dump() + "\n");
}

GenerationResult load_generation_result(const std::string& path) {
    const json j = parse_file(path);
    GenerationResult result;
    result.generated_token_ids = j.at("tokens").get<std::vector<int>>();
    for (const auto& rec : j.at("records")) result.records.push_back(record_from_json(rec));
    for (const auto& row : j.at("logits")) result.step_logits.push_back(row.get<std::vector<double>>());
    return result;
}

// --- detector snapshot ------------------------------------------------

void save_detector_json(const MlpClassifier& model, const std::string& path) {
    json j{{"input_dim", model.input_dim},
           {"hidden_dim", model.hidden_dim},
           {"range", {model.feature_range.first, model.feature_range.last}},
           {"learning_rate", model.learning_rate},
           {"seed", model.seed},
           {"step_count", model.step_count},
           {"w1", var_matrix_json(model.w1)},
           {"b1", model.b1},
           {"w2", var_matrix_json(model.w2)},
           {"b2", model.b2}};
    write_text_atomic(path, j.dump() + "\n");
}

MlpClassifier load_detector_json(const std::string& path) {
    const json j = parse_file(path);
    MlpClassifier m = make_mlp(j.at("input_dim").get<int>(), j.at("hidden_dim").get<int>(),
                               j.at("learning_rate").get<double>(), j.at("seed").get<uint64_t>());
    m.feature_range.first = j.at("range")[0].get<int>();
    m.feature_range.last = j.at("range")[1].get<int>();
    m.step_count = j.at("step_count").get<long>();
    m.w1 = matrix_from_json(j.at("w1"));
    m.b1 = j.at("b1").get<std::vector<double>>();
    m.w2 = matrix_from_json(j.at("w2"));
    m.b2 = j.at("b2").get<std::vector<double>>();
    if (m.w1.rows != m.hidden_dim || m.w1.cols != m.input_dim || m.w2.rows != 2 ||
        m.w2.cols != m.hidden_dim)
        throw std::runtime_error(path + ": detector weight dimensions inconsistent");
    return m;
}

void save_curves_csv(const CurveReport& report, const std::string& path) {
    std::ostringstream out;
    out << "threshold,fpr,tpr,precision,recall\n";
    for (size_t i = 0; i < report.thresholds.size(); ++i)
        out << format_double(report.thresholds[i]) << ',' << format_double(report.fpr[i]) << ','
            << format_double(report.tpr[i]) << ',' << format_double(report.precision[i]) << ','
            << format_double(report.recall[i]) << "\n";
    write_text_atomic(path, out.str());
}

// --- manifest ---------------------------------------------------------

void write_manifest(const RunManifest& manifest, const std::string& path) {
    json j{{"command", manifest.command},
           {"tool_version", manifest.tool_version},
           {"seed", manifest.seed},
           {"config", json::parse(manifest.config_json.empty() ? "{}" : manifest.config_json)},
           {"outputs", manifest.outputs},
           {"wall_clock_ms", manifest.wall_clock_ms}};
    json hashes = json::object();
    for (const auto& [p, h] : manifest.input_hashes) hashes[p] = h;
    j["input_hashes"] = std::move(hashes);
    write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace halluscope::io
