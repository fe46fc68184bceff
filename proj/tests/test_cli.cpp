#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "biasaudit/cli.hpp"
#include "biasaudit/errors.hpp"

using namespace biasaudit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string strip_timestamp(std::string text) {
    const auto at = text.find("\"generated_at\"");
    if (at == std::string::npos) return text;
    const auto end = text.find('\n', at);
    text.erase(at, end - at + 1);
    return text;
}

const char* kSyntheticConfig = R"({
  "dataset": {"synthetic": {"count": 64, "seed": 7}},
  "train": {"epochs": 25, "batch_size": 32, "seed": 3},
  "guidelines": {"g1_slack": 1.0, "g3_bound": 1.0},
  "output": "OUTDIR"
})";

std::string config_with_output(std::string text, const fs::path& out) {
    const auto at = text.find("OUTDIR");
    text.replace(at, 6, out.string());
    return text;
}

} // namespace

TEST_CASE("config validation reports field paths") {
    CHECK_THROWS_AS(parse_run_config("{}", "."), ConfigError);
    CHECK_THROWS_AS(parse_run_config("not json", "."), ConfigError);

    try {
        parse_run_config(R"({"dataset": {}})", ".");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("dataset") != std::string::npos);
    }

    try {
        parse_run_config(R"({"dataset": {"csv": "x.csv"}})", ".");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("dataset.schema") != std::string::npos);
    }

    CHECK_THROWS_AS(parse_run_config(
                        R"({"dataset": {"synthetic": {}}, "train": {"batch_size": 1}})", "."),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(
                        R"({"dataset": {"synthetic": {}}, "loss": {"epsilon": 0}})", "."),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(
                        R"({"dataset": {"synthetic": {}}, "convention": "sideways"})", "."),
                    ConfigError);
}

TEST_CASE("predictions-file models cannot feed the network path") {
    const fs::path dir = fresh_dir("cli_predfile");
    std::ofstream(dir / "preds.txt") << "0.5\n0.5\n";
    const std::string cfg = R"({
      "dataset": {"synthetic": {}},
      "model": {"predictions_file": "preds.txt"}
    })";
    CHECK_THROWS_AS(parse_run_config(cfg, dir.string()), ConfigError);

    // allowed once the network part is disabled
    const std::string ok = R"({
      "dataset": {"synthetic": {}},
      "model": {"predictions_file": "preds.txt"},
      "network": false
    })";
    CHECK_NOTHROW(parse_run_config(ok, dir.string()));
}

TEST_CASE("audit writes reports and reruns byte-identically modulo timestamp") {
    const fs::path out = fresh_dir("cli_audit1");
    RunConfig cfg = parse_run_config(config_with_output(kSyntheticConfig, out), ".");
    CHECK(run_audit(cfg) == 0);

    std::map<std::string, std::string> first;
    for (const char* name : {"report.txt", "metrics.csv", "training_log.csv", "generator.json"}) {
        first[name] = slurp(out / name);
        CHECK(!first[name].empty());
    }
    const std::string first_report = strip_timestamp(slurp(out / "report.json"));

    CHECK(run_audit(cfg) == 0); // identical config hash -> identical content
    for (const auto& [name, content] : first) {
        CHECK(slurp(out / name) == content);
    }
    CHECK(strip_timestamp(slurp(out / "report.json")) == first_report);

    // outputs carry the config hash
    CHECK(slurp(out / "metrics.csv").rfind("# config_hash " + cfg.config_hash, 0) == 0);
    CHECK(first_report.find(cfg.config_hash) != std::string::npos);
}

TEST_CASE("cross-validating audit reports fold statistics") {
    const fs::path out = fresh_dir("cli_cv");
    const std::string text = R"({
      "dataset": {"synthetic": {"count": 60, "seed": 2}},
      "train": {"epochs": 10, "batch_size": 32},
      "guidelines": {"g1_slack": 1.0, "g3_bound": 1.0},
      "folds": {"k": 3, "seed": 4},
      "output": ")" + out.string() + R"("
    })";
    RunConfig cfg = parse_run_config(text, ".");
    CHECK(run_audit(cfg) == 0);
    const std::string report = slurp(out / "report.json");
    CHECK(report.find("\"folds\"") != std::string::npos);
    CHECK(report.find("network_per_fold") != std::string::npos);
    CHECK(report.find("\"fold_seed\": 4") != std::string::npos);
    CHECK(fs::exists(out / "metrics.csv"));
}

TEST_CASE("audit exit code reflects guideline failures when enabled") {
    const fs::path out = fresh_dir("cli_exit");
    // Absurd slack bound cannot fail; tight bound with verbatim convention fails G1.
    std::string text = config_with_output(kSyntheticConfig, out);
    RunConfig cfg = parse_run_config(text, ".");
    cfg.pipeline.guidelines.g1_slack = 2.0;
    cfg.pipeline.guidelines.g3_bound = 10.0;
    CHECK(run_audit(cfg) == 0);

    cfg.pipeline.guidelines.g1_slack = 0.0;
    cfg.pipeline.convention = Convention::Verbatim; // fair scores ~1 under verbatim
    const int rc = run_audit(cfg);
    CHECK(rc == 2);
    cfg.guideline_exit_code = false;
    CHECK(run_audit(cfg) == 0);
}

TEST_CASE("synth subcommand writes the documented CSV") {
    const fs::path out = fresh_dir("cli_synth") / "synthetic.csv";
    CHECK(run_synth(305, 7, out.string()) == 0);
    const std::string text = slurp(out);
    CHECK(text.rfind("biased,fair,random,label,weight\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 306); // header + 305 rows
}

TEST_CASE("metrics subcommand on label-free data emits the 7 label-free metrics") {
    const fs::path dir = fresh_dir("cli_metrics");
    // synthetic CSV re-read without its label column, scores supplied by the random column
    const fs::path csv = dir / "data.csv";
    CHECK(run_synth(64, 3, csv.string()) == 0);

    std::ofstream(dir / "preds.txt") << [] {
        std::string s;
        for (int i = 0; i < 64; ++i) s += "0.9\n";
        return s;
    }();

    const std::string cfg_text = R"({
      "dataset": {
        "csv": "data.csv",
        "schema": {"columns": ["biased", "fair"], "protected": ["biased", "fair"], "score": "random"}
      },
      "model": {"predictions_file": "preds.txt"},
      "network": false,
      "metrics": {"score_threshold": 0.5}
    })";
    RunConfig cfg = parse_run_config(cfg_text, dir.string());
    const fs::path out = dir / "metrics.json";
    CHECK(run_metrics(cfg, out.string()) == 0);

    const std::string payload = slurp(out);
    // 7 label-free metrics computed and 14 marked unavailable, per feature
    CHECK(std::count(payload.begin(), payload.end(), '{') == 2 * 21);
    const std::string unavailable = "\"unavailable\"";
    long marked = 0;
    for (auto at = payload.find(unavailable); at != std::string::npos;
         at = payload.find(unavailable, at + 1)) {
        ++marked;
    }
    CHECK(marked == 2 * 14);
    CHECK(payload.find("demographic_parity") != std::string::npos);
    CHECK(payload.find("calibration") != std::string::npos);

    // and the ensemble subcommand aggregates that file
    const fs::path ens = dir / "ensemble.json";
    CHECK(run_ensemble(out.string(), ens.string()) == 0);
    const std::string agg = slurp(ens);
    CHECK(agg.find("\"biased\"") != std::string::npos);
    CHECK(agg.find("argmax") != std::string::npos);
}

TEST_CASE("mitigate subcommand writes dataset, log, and chained delta") {
    const fs::path dir = fresh_dir("cli_mitigate");
    // build a mitigable CSV: strongly but not perfectly label-coupled group
    const fs::path csv = dir / "data.csv";
    {
        std::ofstream out(csv);
        out << "group,other,y\n";
        for (int g : {1, 0}) {
            for (int i = 0; i < 50; ++i) {
                const int majority = i < 45;
                const int label = g == 1 ? majority : 1 - majority;
                out << g << "," << i % 2 << "," << label << "\n";
            }
        }
    }
    const std::string cfg_text = R"({
      "dataset": {
        "csv": "data.csv",
        "schema": {"columns": ["group", "other"], "protected": ["group"], "label": "y"}
      },
      "train": {"epochs": 30, "batch_size": 32},
      "mitigation": {"feature": "group", "variance_threshold": 0.0045},
      "output": "out"
    })";
    RunConfig cfg = parse_run_config(cfg_text, dir.string());
    CHECK(run_mitigate(cfg) == 0);
    CHECK(fs::exists(dir / "out" / "mitigated.csv"));
    CHECK(fs::exists(dir / "out" / "mitigation_log.csv"));
    CHECK(fs::exists(dir / "out" / "report_before.json"));
    CHECK(fs::exists(dir / "out" / "report_after.json"));
    const std::string delta = slurp(dir / "out" / "delta.csv");
    CHECK(delta.find("feature,ensemble_delta,network_delta,agree") != std::string::npos);
    CHECK(delta.find("group,") != std::string::npos);

    // missing labels is a config-level error
    const std::string unlabeled = R"({
      "dataset": {
        "csv": "data.csv",
        "schema": {"columns": ["group", "other"], "protected": ["group"]}
      },
      "network": false
    })";
    RunConfig bad = parse_run_config(unlabeled, dir.string());
    CHECK_THROWS_AS(run_mitigate(bad), ConfigError);
}

TEST_CASE("config fingerprints ignore formatting but track content") {
    const RunConfig a = parse_run_config(R"({"dataset":{"synthetic":{"count":64}}})", ".");
    const RunConfig b = parse_run_config(R"({ "dataset" : { "synthetic" : { "count" : 64 } } })", ".");
    const RunConfig c = parse_run_config(R"({"dataset":{"synthetic":{"count":72}}})", ".");
    CHECK(a.config_hash == b.config_hash);
    CHECK(a.config_hash != c.config_hash);
}
