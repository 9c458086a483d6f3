// End-to-end checks against the built CLI binary (path in HALLUSCOPE_CLI).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "halluscope/io.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

fs::path work_root() {
    static const fs::path root = [] {
        fs::path p = fs::temp_directory_path() / ("halluscope-cli-" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

CliResult run_cli(const std::string& args) {
    static const char* cli = std::getenv("HALLUSCOPE_CLI");
    REQUIRE(cli != nullptr);
    const fs::path out_file = work_root() / "stdout.txt";
    const fs::path err_file = work_root() / "stderr.txt";
    const std::string cmd = std::string(cli) + " " + args + " >" + out_file.string() + " 2>" +
                            err_file.string();
    const int status = std::system(cmd.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = halluscope::io::read_text(out_file.string());
    result.err = halluscope::io::read_text(err_file.string());
    return result;
}

std::string slurp(const fs::path& p) { return halluscope::io::read_text(p.string()); }

json parse(const fs::path& p) { return json::parse(slurp(p)); }

// Byte-compare every output file except the manifest (it embeds wall clock).
void check_dirs_identical(const fs::path& a, const fs::path& b) {
    std::vector<std::string> names;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), a).string();
        if (rel == "manifest.json") continue;
        names.push_back(rel);
    }
    REQUIRE_FALSE(names.empty());
    for (const auto& rel : names) {
        INFO("file ", rel);
        CHECK(slurp(a / rel) == slurp(b / rel));
    }
}

const fs::path kRoot = work_root();

// Shared fixtures built once.
struct Fixtures {
    fs::path scenes_dir = kRoot / "scenes";
    fs::path model_dir = kRoot / "scene-model";
    fs::path plant_dir = kRoot / "plant";

    Fixtures() {
        REQUIRE(run_cli("synth scenes --count 12 --seed 7 --out-dir " + scenes_dir.string())
                    .exit_code == 0);
        REQUIRE(run_cli("synth scene-model --scenes " + (scenes_dir / "scenes.json").string() +
                        " --index 0 --out-dir " + model_dir.string())
                    .exit_code == 0);
        // A small planted dataset (fast) with the calibrated means.
        const fs::path spec = kRoot / "plant_spec.json";
        std::ofstream f(spec);
        f << R"({"num_real":150,"num_halluc":150,"num_layers":32,"num_heads":8,)"
          << R"("range":[5,18],"mu_real":0.121,"mu_halluc":0.089,"sigma":0.02,)"
          << R"("mu_background":0.05,"seed":11})";
        f.close();
        REQUIRE(run_cli("synth plant --spec " + spec.string() + " --out-dir " +
                        plant_dir.string())
                    .exit_code == 0);
    }
};

Fixtures& fixtures() {
    static Fixtures f;
    return f;
}

}  // namespace

TEST_CASE("generate: boundary, determinism, identity intervention") {
    auto& fx = fixtures();
    const std::string model_args = " --model-config " + (fx.model_dir / "model.json").string() +
                                   " --model-weights " + (fx.model_dir / "model.bin").string() +
                                   " --embeddings " + (fx.model_dir / "embeddings.bin").string();

    const fs::path one = kRoot / "gen-one";
    REQUIRE(run_cli("generate" + model_args + " --max-new-tokens 1 --out-dir " + one.string())
                .exit_code == 0);
    CHECK(parse(one / "tokens.json").size() == 1);
    CHECK(parse(one / "generation.json").at("records").size() == 1);

    const fs::path a = kRoot / "gen-a";
    const fs::path b = kRoot / "gen-b";
    const std::string common =
        "generate" + model_args + " --max-new-tokens 6 --seed 3 --capture-pre --out-dir ";
    REQUIRE(run_cli(common + a.string()).exit_code == 0);
    REQUIRE(run_cli(common + b.string()).exit_code == 0);
    check_dirs_identical(a, b);

    // alpha=0 with a range behaves exactly like no intervention flags.
    const fs::path plain = kRoot / "gen-plain";
    const fs::path zero = kRoot / "gen-zero";
    REQUIRE(run_cli("generate" + model_args + " --max-new-tokens 6 --out-dir " + plain.string())
                .exit_code == 0);
    REQUIRE(run_cli("generate" + model_args +
                    " --max-new-tokens 6 --alpha 0 --layers 2:4 --out-dir " + zero.string())
                .exit_code == 0);
    CHECK(slurp(plain / "tokens.json") == slurp(zero / "tokens.json"));
    CHECK(slurp(plain / "generation.json") == slurp(zero / "generation.json"));
}

TEST_CASE("generate: refuses to overwrite without --force") {
    auto& fx = fixtures();
    const std::string model_args = " --model-config " + (fx.model_dir / "model.json").string() +
                                   " --model-weights " + (fx.model_dir / "model.bin").string() +
                                   " --embeddings " + (fx.model_dir / "embeddings.bin").string();
    const fs::path dir = kRoot / "gen-overwrite";
    REQUIRE(run_cli("generate" + model_args + " --max-new-tokens 1 --out-dir " + dir.string())
                .exit_code == 0);
    const CliResult refused =
        run_cli("generate" + model_args + " --max-new-tokens 1 --out-dir " + dir.string());
    CHECK(refused.exit_code != 0);
    CHECK(refused.err.find("error:") == 0);
    CHECK(run_cli("generate" + model_args + " --max-new-tokens 1 --force --out-dir " +
                  dir.string())
              .exit_code == 0);
}

TEST_CASE("generate: missing files give a single-line error and nonzero exit") {
    const CliResult r = run_cli(
        "generate --model-config /nonexistent.json --model-weights /nonexistent.bin "
        "--embeddings /nonexistent.bin");
    CHECK(r.exit_code == 1);
    CHECK(r.err.rfind("error:", 0) == 0);
    CHECK(r.err.find('\n') == r.err.size() - 1);  // single line
}

TEST_CASE("analyze: shapes, cross-file svar, capture errors") {
    auto& fx = fixtures();
    const std::string model_args = " --model-config " + (fx.model_dir / "model.json").string() +
                                   " --model-weights " + (fx.model_dir / "model.bin").string() +
                                   " --embeddings " + (fx.model_dir / "embeddings.bin").string();
    const fs::path gen = kRoot / "gen-full";
    REQUIRE(run_cli("generate" + model_args +
                    " --max-new-tokens 4 --capture-mhsa --capture-image-hidden --out-dir " +
                    gen.string())
                .exit_code == 0);

    const fs::path analysis = kRoot / "analysis";
    REQUIRE(run_cli("analyze --run " + gen.string() +
                    " --ops var,svar,lens,heatmap,contrib --range 2:4 --heatmap-layers 2,3 "
                    "--out-dir " +
                    analysis.string())
                .exit_code == 0);

    const json config = parse(gen / "model.json");
    const int layers = config.at("num_layers").get<int>();
    const int heads = config.at("num_heads").get<int>();
    const int tokens = static_cast<int>(parse(gen / "tokens.json").size());

    // var files: one per token, L*H data rows each.
    for (int k = 0; k < tokens; ++k) {
        std::istringstream var_csv(slurp(analysis / ("token_" + std::to_string(k)) /
                                         "var_profile.csv"));
        std::string line;
        std::getline(var_csv, line);
        CHECK(line == "layer,head,var");
        int rows = 0;
        double svar_sum = 0.0;
        while (std::getline(var_csv, line)) {
            ++rows;
            const auto c1 = line.find(','), c2 = line.rfind(',');
            const int layer = std::stoi(line.substr(0, c1));
            if (layer >= 2 && layer <= 4) svar_sum += std::stod(line.substr(c2 + 1));
        }
        CHECK(rows == layers * heads);

        // svar.csv recomputation from the var file.
        std::istringstream svar_csv_file(slurp(analysis / "svar.csv"));
        std::getline(svar_csv_file, line);  // header
        double reported = -1.0;
        while (std::getline(svar_csv_file, line)) {
            const auto comma = line.find(',');
            if (std::stoi(line.substr(0, comma)) == k) reported = std::stod(line.substr(comma + 1));
        }
        CHECK(reported == doctest::Approx(svar_sum / heads).epsilon(1e-9));
    }

    // heatmaps only for requested layers.
    for (const auto& entry : fs::directory_iterator(analysis / "token_0")) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("heatmap_", 0) == 0) {
            const int layer = std::stoi(name.substr(8, name.find('_', 8) - 8));
            CHECK((layer == 2 || layer == 3));
        }
    }
    CHECK(fs::exists(analysis / "token_0" / "lens_grid.tsv"));
    CHECK(fs::exists(analysis / "token_0" / "contrib.csv"));

    // Without captures, lens/contrib name the missing flag.
    const fs::path bare = kRoot / "gen-bare";
    REQUIRE(run_cli("generate" + model_args + " --max-new-tokens 2 --out-dir " + bare.string())
                .exit_code == 0);
    const CliResult lens_err =
        run_cli("analyze --run " + bare.string() + " --ops lens --out-dir " +
                (kRoot / "analysis-lens-err").string());
    CHECK(lens_err.exit_code != 0);
    CHECK(lens_err.err.find("--capture-image-hidden") != std::string::npos);
    const CliResult contrib_err =
        run_cli("analyze --run " + bare.string() + " --ops contrib --out-dir " +
                (kRoot / "analysis-contrib-err").string());
    CHECK(contrib_err.exit_code != 0);
    CHECK(contrib_err.err.find("--capture-mhsa") != std::string::npos);
}

TEST_CASE("detect: svar mode on planted data, manifest feature dim, reruns") {
    auto& fx = fixtures();
    const std::string dataset = (fx.plant_dir / "dataset.jsonl").string();

    const fs::path a = kRoot / "detect-a";
    const fs::path b = kRoot / "detect-b";
    const std::string cmd = "detect --dataset " + dataset + " --mode svar --range 5:18 --out-dir ";
    REQUIRE(run_cli(cmd + a.string()).exit_code == 0);
    REQUIRE(run_cli(cmd + b.string()).exit_code == 0);
    check_dirs_identical(a, b);

    const json report = parse(a / "report.json");
    CHECK(report.at("auroc").get<double>() >= 0.95);
    CHECK(report.at("feature_dim").get<int>() == 14 * 8);
    const json manifest = parse(a / "manifest.json");
    CHECK(manifest.at("config").at("feature_dim").get<int>() == 14 * 8);
}

TEST_CASE("detect: mlp mode trains, persists, and reloads identically") {
    auto& fx = fixtures();
    const std::string dataset = (fx.plant_dir / "dataset.jsonl").string();

    const fs::path train = kRoot / "detect-mlp";
    REQUIRE(run_cli("detect --dataset " + dataset +
                    " --mode mlp --range 5:18 --hidden 32 --lr 1e-2 --epochs 60 --seed 5 "
                    "--out-dir " +
                    train.string())
                .exit_code == 0);
    const json report = parse(train / "report.json");
    CHECK(report.at("accuracy").get<double>() >= 0.9);

    const fs::path reuse = kRoot / "detect-mlp-reuse";
    REQUIRE(run_cli("detect --dataset " + dataset + " --mode mlp --range 5:18 --seed 5 "
                    "--detector " +
                    (train / "detector.json").string() + " --out-dir " + reuse.string())
                .exit_code == 0);
    const json report2 = parse(reuse / "report.json");
    CHECK(report2.at("accuracy") == report.at("accuracy"));
    CHECK(report2.at("auroc") == report.at("auroc"));
    CHECK(report2.at("recall") == report.at("recall"));
}

TEST_CASE("detect: internal-confidence mode runs on scene datasets") {
    auto& fx = fixtures();
    const fs::path ds_dir = kRoot / "scene-dataset";
    REQUIRE(run_cli("synth scene-dataset --scenes " + (fx.scenes_dir / "scenes.json").string() +
                    " --seed 3 --out-dir " + ds_dir.string())
                .exit_code == 0);
    const fs::path out = kRoot / "detect-ic";
    REQUIRE(run_cli("detect --dataset " + (ds_dir / "dataset.jsonl").string() +
                    " --mode internal-confidence --out-dir " + out.string())
                .exit_code == 0);
    const json report = parse(out / "report.json");
    CHECK(report.at("auroc").get<double>() >= 0.0);
    CHECK(report.at("auroc").get<double>() <= 1.0);

    // The planted dataset has no stored hidden states or scores.
    const CliResult missing = run_cli("detect --dataset " +
                                      (fx.plant_dir / "dataset.jsonl").string() +
                                      " --mode internal-confidence --out-dir " +
                                      (kRoot / "detect-ic-err").string());
    CHECK(missing.exit_code != 0);
    CHECK(missing.err.find("internal-confidence") != std::string::npos);
}

TEST_CASE("sweep: alpha row shape, causality, determinism") {
    auto& fx = fixtures();
    const fs::path a = kRoot / "sweep-a";
    const fs::path b = kRoot / "sweep-b";
    const std::string cmd = "sweep --param alpha --values 0,0.5 --scenes " +
                            (fx.scenes_dir / "scenes.json").string() + " --out-dir ";
    REQUIRE(run_cli(cmd + a.string()).exit_code == 0);
    REQUIRE(run_cli(cmd + b.string()).exit_code == 0);
    CHECK(slurp(a / "sweep.csv") == slurp(b / "sweep.csv"));

    std::istringstream csv(slurp(a / "sweep.csv"));
    std::string header, row0, row05;
    std::getline(csv, header);
    std::getline(csv, row0);
    std::getline(csv, row05);
    CHECK(header == "param,value,c_s,c_i,precision,recall,f1");
    auto field = [](const std::string& line, int idx) {
        std::istringstream ss(line);
        std::string item;
        for (int i = 0; i <= idx; ++i) std::getline(ss, item, ',');
        return item;
    };
    const double ci0 = std::stod(field(row0, 3));
    const double ci05 = std::stod(field(row05, 3));
    CHECK(ci05 < ci0);

    // layers sweep: one row per value.
    const fs::path layers = kRoot / "sweep-layers";
    REQUIRE(run_cli("sweep --param layers --values 0:1,2:4,5:5 --alpha 0.5 --scenes " +
                    (fx.scenes_dir / "scenes.json").string() + " --out-dir " + layers.string())
                .exit_code == 0);
    std::istringstream lcsv(slurp(layers / "sweep.csv"));
    int lines = 0;
    std::string line;
    while (std::getline(lcsv, line)) ++lines;
    CHECK(lines == 4);  // header + 3 rows

    CHECK(run_cli("sweep --param alpha --values 0.5 --scenes x --out-dir " +
                  (kRoot / "sweep-bad").string())
              .exit_code != 0);
}

TEST_CASE("chair: hand corpus, dual emitters, empty captions guard") {
    const fs::path dir = kRoot / "chair-inputs";
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "captions.jsonl");
        f << R"({"image_id":"img0","caption":"a dog and a cat near a car"})" << "\n";
    }
    {
        std::ofstream f(dir / "annotations.json");
        f << R"({"img0":["dog","cat"]})" << "\n";
    }

    const fs::path out = kRoot / "chair-out";
    const CliResult r = run_cli("chair --captions " + (dir / "captions.jsonl").string() +
                                " --annotations " + (dir / "annotations.json").string() +
                                " --out-dir " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("C_I=0.333333333333") != std::string::npos);

    const json report = parse(out / "report.json");
    CHECK(report.at("c_i").get<double>() == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(report.at("c_s").get<double>() == 1.0);
    CHECK(report.at("f1").get<double>() == doctest::Approx(0.8).epsilon(1e-12));

    // Table and JSON agree numerically.
    const std::string table = slurp(out / "report.txt");
    CHECK(table.find(halluscope::io::format_double(report.at("c_i").get<double>())) !=
          std::string::npos);
    CHECK(table.find(halluscope::io::format_double(report.at("f1").get<double>())) !=
          std::string::npos);

    {
        std::ofstream f(dir / "empty.jsonl");
    }
    const CliResult empty = run_cli("chair --captions " + (dir / "empty.jsonl").string() +
                                    " --annotations " + (dir / "annotations.json").string() +
                                    " --out-dir " + (kRoot / "chair-empty").string());
    CHECK(empty.exit_code != 0);
    CHECK(empty.err.rfind("error:", 0) == 0);
}

TEST_CASE("synth: plant dataset rerun is byte-identical") {
    auto& fx = fixtures();
    const fs::path again = kRoot / "plant-again";
    const fs::path spec = kRoot / "plant_spec.json";
    REQUIRE(run_cli("synth plant --spec " + spec.string() + " --out-dir " + again.string())
                .exit_code == 0);
    CHECK(slurp(fx.plant_dir / "dataset.jsonl") == slurp(again / "dataset.jsonl"));
}

TEST_CASE("init-model produces loadable deterministic files") {
    const fs::path cfg_path = kRoot / "rand-model.json";
    {
        std::ofstream f(cfg_path);
        f << R"({"num_layers":3,"num_heads":2,"model_dim":16,"vocab_size":24,)"
          << R"("num_image_tokens":4,"max_seq_len":24,"rng_seed":99})";
    }
    const fs::path a = kRoot / "init-a";
    const fs::path b = kRoot / "init-b";
    REQUIRE(run_cli("init-model --config " + cfg_path.string() + " --out-dir " + a.string())
                .exit_code == 0);
    REQUIRE(run_cli("init-model --config " + cfg_path.string() + " --out-dir " + b.string())
                .exit_code == 0);
    check_dirs_identical(a, b);

    // Generated files feed generate directly (ids prompt, no vocab table).
    const fs::path gen = kRoot / "init-gen";
    REQUIRE(run_cli("generate --model-config " + (a / "model.json").string() +
                    " --model-weights " + (a / "model.bin").string() + " --embeddings " +
                    (a / "embeddings.bin").string() + " --prompt-ids 1,2,3 --max-new-tokens 2 "
                    "--out-dir " +
                    gen.string())
                .exit_code == 0);
    CHECK(parse(gen / "tokens.json").size() == 2);
}

TEST_CASE("deep model: preset-style ranges apply, alpha 0 stays the identity") {
    const fs::path cfg_path = kRoot / "deep-model.json";
    {
        std::ofstream f(cfg_path);
        f << R"({"num_layers":20,"num_heads":2,"model_dim":16,"vocab_size":24,)"
          << R"("num_image_tokens":4,"max_seq_len":24,"rng_seed":17})";
    }
    const fs::path model = kRoot / "deep-init";
    REQUIRE(run_cli("init-model --config " + cfg_path.string() + " --out-dir " + model.string())
                .exit_code == 0);
    const std::string model_args = " --model-config " + (model / "model.json").string() +
                                   " --model-weights " + (model / "model.bin").string() +
                                   " --embeddings " + (model / "embeddings.bin").string() +
                                   " --prompt-ids 1,2,3 --max-new-tokens 3";

    const fs::path plain = kRoot / "deep-plain";
    const fs::path zero = kRoot / "deep-zero";
    const fs::path boosted = kRoot / "deep-boosted";
    REQUIRE(run_cli("generate" + model_args + " --out-dir " + plain.string()).exit_code == 0);
    REQUIRE(run_cli("generate" + model_args + " --alpha 0 --layers 5:18 --out-dir " +
                    zero.string())
                .exit_code == 0);
    CHECK(slurp(plain / "tokens.json") == slurp(zero / "tokens.json"));
    CHECK(slurp(plain / "generation.json") == slurp(zero / "generation.json"));
    // The published preset fits a 20-layer model.
    REQUIRE(run_cli("generate" + model_args + " --preset llava-1.5 --out-dir " +
                    boosted.string())
                .exit_code == 0);

    // It exceeds the 6-layer scripted scene model and is rejected there.
    auto& fx = fixtures();
    const CliResult bad = run_cli(
        "generate --model-config " + (fx.model_dir / "model.json").string() +
        " --model-weights " + (fx.model_dir / "model.bin").string() + " --embeddings " +
        (fx.model_dir / "embeddings.bin").string() + " --preset llava-1.5 --out-dir " +
        (kRoot / "deep-bad").string());
    CHECK(bad.exit_code != 0);
    CHECK(bad.err.rfind("error:", 0) == 0);
}
