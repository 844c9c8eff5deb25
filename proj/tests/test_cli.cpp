#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "tmflow/app/pipeline.hpp"
#include "tmflow/error.hpp"
#include "tmflow/io.hpp"

using namespace tmflow;
using tmflow::app::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = TMFLOW_CLI_PATH;
const std::string kSchema = std::string(TMFLOW_SOURCE_DIR) + "/docs/report_schema.json";

const fs::path& scratch_root() {
    static const fs::path root = fs::temp_directory_path() / ("tmflow_test_cli_" + std::to_string(::getpid()));
    static const struct Cleanup {
        ~Cleanup() {
            std::error_code ec;
            fs::remove_all(root, ec);
        }
    } cleanup;
    return root;
}

fs::path scratch(const std::string& name) {
    const fs::path p = scratch_root() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + kCli + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    write_text(p.string(), j.dump(2));
    return p;
}

json load(const fs::path& p) { return json::parse(read_text(p.string())); }

// Subset of JSON Schema used by docs/report_schema.json.
class SchemaValidator {
public:
    explicit SchemaValidator(json root) : root_(std::move(root)) {}

    std::vector<std::string> validate(const json& doc) const {
        std::vector<std::string> errs;
        check(doc, root_, "$", errs);
        return errs;
    }

private:
    const json& resolve(const json& s) const {
        if (!s.contains("$ref")) return s;
        const std::string ref = s["$ref"];
        REQUIRE(ref.rfind("#/$defs/", 0) == 0);
        return root_["$defs"][ref.substr(8)];
    }

    static bool type_ok(const json& v, const std::string& t) {
        if (t == "object") return v.is_object();
        if (t == "array") return v.is_array();
        if (t == "string") return v.is_string();
        if (t == "boolean") return v.is_boolean();
        if (t == "null") return v.is_null();
        if (t == "integer") return v.is_number_integer();
        if (t == "number") return v.is_number();
        return false;
    }

    void check(const json& v, const json& schema_in, const std::string& path, std::vector<std::string>& errs) const {
        const json& s = resolve(schema_in);
        if (s.contains("oneOf")) {
            int matches = 0;
            for (const auto& alt : s["oneOf"]) {
                std::vector<std::string> sub;
                check(v, alt, path, sub);
                if (sub.empty()) ++matches;
            }
            if (matches != 1) errs.push_back(path + ": matched " + std::to_string(matches) + " oneOf branches");
            return;
        }
        if (s.contains("type")) {
            bool ok = false;
            if (s["type"].is_string()) ok = type_ok(v, s["type"]);
            else
                for (const auto& t : s["type"]) ok = ok || type_ok(v, t);
            if (!ok) {
                errs.push_back(path + ": wrong type");
                return;
            }
        }
        if (s.contains("const") && v != s["const"]) errs.push_back(path + ": const mismatch");
        if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end())
            errs.push_back(path + ": value not in enum");
        if (s.contains("minimum") && v.is_number() && v.get<double>() < s["minimum"].get<double>())
            errs.push_back(path + ": below minimum");
        if (v.is_object()) {
            if (s.contains("required"))
                for (const auto& k : s["required"])
                    if (!v.contains(k.get<std::string>())) errs.push_back(path + ": missing " + k.get<std::string>());
            if (s.contains("properties")) {
                for (const auto& [k, sub] : v.items()) {
                    if (s["properties"].contains(k)) check(sub, s["properties"][k], path + "." + k, errs);
                    else if (s.contains("additionalProperties") && s["additionalProperties"] == false)
                        errs.push_back(path + ": unexpected key " + k);
                }
            }
        }
        if (v.is_array() && s.contains("items"))
            for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], path + "[" + std::to_string(i) + "]", errs);
    }

    json root_;
};

void require_schema_valid(const json& doc) {
    static const SchemaValidator validator(json::parse(read_text(kSchema)));
    const auto errs = validator.validate(doc);
    for (const auto& e : errs) MESSAGE(e);
    CHECK(errs.empty());
}

json torus_config(const fs::path& out, const std::string& preset, double max_time) {
    return {{"scenario", "torus"},
            {"output_dir", out.string()},
            {"snapshot_every", 40},
            {"torus", {{"preset", preset}, {"N", 32}, {"eta", 1.0}, {"max_time", max_time}}}};
}

}  // namespace

TEST_CASE("snapshot and history round trips") {
    Snapshot s;
    s.cylinder = true;
    s.a = 3.5;
    s.b = 0.25;
    s.time = 0.125;
    s.u = SphereMapField(3, 4, 3);
    for (std::size_t k = 0; k < s.u.data.size(); ++k) s.u.data[k] = std::sin(1.0 + k);
    const auto bytes = encode_snapshot(s);
    CHECK(bytes.size() == 16 + 24 + 24 + 8 * 36);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "TMFLOWSN");
    const Snapshot r = decode_snapshot(bytes);
    CHECK(r.cylinder);
    CHECK(r.a == s.a);
    CHECK(r.b == s.b);
    CHECK(r.time == s.time);
    CHECK(r.u.data == s.u.data);
    auto bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_snapshot(bad), IoError);

    FlowHistory h;
    h.samples.push_back({0.0, 1.0 / 3.0, 2.0, 3.0, 0.1, 1.0, 0.5, 4.0, 0.0});
    h.samples.push_back({0.1, 0.2, std::nan(""), 3.0, 0.1, 1.0, 0.5, 4.0, 1e-300});
    const auto back = parse_history_csv(history_csv(h));
    REQUIRE(back.samples.size() == 2);
    CHECK(back.samples[0].E == h.samples[0].E);
    CHECK(std::isnan(back.samples[1].tension_l2));
    CHECK(back.samples[1].arc_length == 1e-300);
    CHECK_THROWS_AS(parse_history_csv("t,E\n0,1\n"), IoError);
}

TEST_CASE("config validation reports every violation") {
    const json bad = {{"scenario", "torus"},
                      {"extra", 1},
                      {"torus", {{"N", 4}, {"eta", -1.0}, {"cfl_factor", 0.5}}},
                      {"collar", {{"ell0", -1.0}}},
                      {"ricci", {{"punctures", 2}, {"cap", 10.0}}},
                      {"topology", {{"genus", 1}}}};
    try {
        app::parse_run_config(bad);
        FAIL("invalid config accepted");
    } catch (const ConfigError& e) {
        CHECK(e.violations().size() >= 8);
    }
    CHECK_NOTHROW(app::parse_run_config({{"scenario", "collar"}}));
    CHECK_THROWS_AS(app::parse_run_config({{"scenario", "mystery"}}), ConfigError);
}

TEST_CASE("run writes artifacts and is byte-reproducible") {
    const auto dir = scratch("determinism");
    const auto cfg = write_config(dir, torus_config(dir / "out", "wrap-perturbed", 0.03));
    REQUIRE(run_cli("run --config " + cfg.string()) == 0);
    const std::string h1 = read_text((dir / "out/history.csv").string());
    const std::string r1 = read_text((dir / "out/report.json").string());
    const auto snaps1 = list_snapshots((dir / "out/snapshots").string());
    std::vector<std::string> bytes1;
    for (const auto& p : snaps1) bytes1.push_back(read_text(p));
    REQUIRE(run_cli("run --config " + cfg.string(), "TMFLOW_THREADS=3") == 0);
    CHECK(read_text((dir / "out/history.csv").string()) == h1);
    CHECK(read_text((dir / "out/report.json").string()) == r1);
    const auto snaps2 = list_snapshots((dir / "out/snapshots").string());
    REQUIRE(snaps2.size() == snaps1.size());
    for (std::size_t k = 0; k < snaps2.size(); ++k) CHECK(read_text(snaps2[k]) == bytes1[k]);
    CHECK(snaps1.size() >= 2);
    CHECK(h1.rfind("t,E,tension_l2,projection_l2,a,b,inj,speed_l2", 0) == 0);
    require_schema_valid(json::parse(r1));

    REQUIRE(run_cli("analyze --history " + (dir / "out/history.csv").string() + " --snapshots " +
                    (dir / "out/snapshots").string() + " --out " + (dir / "an").string()) == 0);
    const json an = load(dir / "an/analysis.json");
    require_schema_valid(an);
    CHECK(an["concentration_points"].empty());
    CHECK(read_text((dir / "an/osc_profile.csv").string()).rfind("y,osc\n", 0) == 0);
    CHECK(run_cli("analyze --collar --history " + (dir / "out/history.csv").string() + " --snapshots " +
                  (dir / "out/snapshots").string() + " --out " + (dir / "an2").string()) == 2);
}

TEST_CASE("exit codes") {
    const auto dir = scratch("exit");
    CHECK(run_cli("run --config " + (dir / "missing.json").string()) == 2);
    write_text((dir / "broken.json").string(), "{ not json");
    CHECK(run_cli("run --config " + (dir / "broken.json").string()) == 2);
    CHECK(run_cli("run --config " + write_config(dir, {{"scenario", "torus"}, {"torus", {{"N", 2}}}}).string()) == 2);
    CHECK(run_cli("ricci --punctures 2 --out " + (dir / "r").string()) == 2);
    CHECK(run_cli("collar-table --ell 1,0.5 --delta 0.7") == 0);
    CHECK(run_cli("collar-table --ell -1 --delta 0.7") == 2);
    CHECK(run_cli("no-such-command") == 2);
    CHECK(run_cli("run-collar --config " +
                  write_config(dir, torus_config(dir / "o", "wrap", 0.01)).string()) == 2);

    // a custom grid with a non-finite node aborts the run
    Snapshot s;
    s.u = make_wrap_map(16, 2);
    s.u.data[5] = std::nan("");
    write_snapshot((dir / "nan.bin").string(), s);
    json cfg = torus_config(dir / "nanrun", "custom", 0.01);
    cfg["torus"]["N"] = 16;
    cfg["torus"]["grid_file"] = (dir / "nan.bin").string();
    CHECK(run_cli("run --config " + write_config(dir, cfg).string()) == 3);
    const json rep = load(dir / "nanrun/report.json");
    CHECK(rep["status"] == "aborted");
    require_schema_valid(rep);
}

TEST_CASE("pipeline: convergent torus run has a single timeout event") {
    const auto dir = scratch("torus_pipeline");
    auto cfg = torus_config(dir / "out", "wrap", 0.05);
    REQUIRE(run_cli("pipeline --config " + write_config(dir, cfg).string()) == 0);
    const json rep = load(dir / "out/pipeline_report.json");
    require_schema_valid(rep);
    REQUIRE(rep["events"].size() == 1);
    CHECK(rep["events"][0]["type"] == "timeout");
    CHECK(rep["events"][0]["bubbles"].empty());
    CHECK(rep["events"][0]["continuation"]["converged"] == true);
    CHECK(rep["reconstruction"]["bubbles"].empty());
    CHECK(rep["energy_conservation"]["holds"] == true);
}

TEST_CASE("pipeline: collar pinch with a glued bubble") {
    const auto dir = scratch("collar_pipeline");
    const json cfg = {{"scenario", "collar"}, {"output_dir", (dir / "out").string()}, {"snapshot_every", 100}};
    REQUIRE(run_cli("pipeline --config " + write_config(dir, cfg).string()) == 0);
    const json rep = load(dir / "out/pipeline_report.json");
    require_schema_valid(rep);
    require_schema_valid(load(dir / "out/analysis.json"));
    require_schema_valid(load(dir / "out/report.json"));
    REQUIRE(rep["events"].size() == 1);
    const json& ev = rep["events"][0];
    CHECK(ev["type"] == "collar-pinch");
    CHECK(ev["k"] == 1);
    CHECK(ev["punctures"] == 2);
    REQUIRE(ev["bubbles"].size() == 1);
    const double E_thin = ev["ledger"]["E_thin"];
    const double bubble = ev["bubbles"][0]["energy"];
    CHECK(std::abs(E_thin / bubble - 1.0) <= 0.05);
    CHECK(rep["reconstruction"]["glued_cylinders"] == 1);
    CHECK(rep["energy_conservation"]["holds"] == true);
}

TEST_CASE("pipeline: ricci continuation on pairs of pants is thread-count independent") {
    const auto dir = scratch("pants");
    const json pants = {{"genus", 0}, {"punctures", 3}};
    json cfg = {{"scenario", "collar"}, {"output_dir", (dir / "out").string()}};
    cfg["collar"] = {{"preset", "equator-wrap"}};
    cfg["ricci"] = {{"ntheta", 32}, {"nphi", 64}};
    cfg["topology"] = {{"genus", 2}, {"k", 3}, {"components", json::array({pants, pants})}};
    const auto path = write_config(dir, cfg).string();
    REQUIRE(run_cli("pipeline --config " + path, "TMFLOW_THREADS=1") == 0);
    const std::string first = read_text((dir / "out/pipeline_report.json").string());
    REQUIRE(run_cli("pipeline --config " + path, "TMFLOW_THREADS=4") == 0);
    CHECK(read_text((dir / "out/pipeline_report.json").string()) == first);
    const json rep = json::parse(first);
    require_schema_valid(rep);
    const json& ev = rep["events"][0];
    CHECK(ev["type"] == "collar-pinch");
    CHECK(ev["k"] == 3);
    CHECK(ev["punctures"] == 6);
    REQUIRE(ev["continuation"]["sphere_components"].size() == 2);
    for (const auto& c : ev["continuation"]["sphere_components"]) {
        require_schema_valid(c);
        CHECK(std::abs(c["report"]["T_pred"].get<double>() - 0.25) / 0.25 <= 0.05);
    }
    CHECK(rep["reconstruction"]["components"].size() == 2);
}

TEST_CASE("ricci subcommand and ricci-only pipeline") {
    const auto dir = scratch("ricci");
    const json cfg = {{"scenario", "ricci"},
                      {"output_dir", (dir / "pipe").string()},
                      {"ricci", {{"ntheta", 32}, {"nphi", 64}}}};
    const auto path = write_config(dir, cfg).string();
    REQUIRE(run_cli("ricci --punctures 3 --cap 64 --config " + path + " --out " + (dir / "r").string()) == 0);
    const json rr = load(dir / "r/ricci_report.json");
    require_schema_valid(rr);
    CHECK(read_text((dir / "r/ricci.csv").string()).rfind("t,area,minK,maxK,normalized_deviation\n", 0) == 0);

    REQUIRE(run_cli("pipeline --config " + path) == 0);
    const json rep = load(dir / "pipe/pipeline_report.json");
    require_schema_valid(rep);
    REQUIRE(rep["events"].size() == 1);
    CHECK(rep["events"][0]["type"] == "extinction");
    const double T = rep["events"][0]["time"];
    const double deficit = rr["report"]["deficit_rel"];
    CHECK(T == rr["report"]["T_pred"].get<double>());
    CHECK(std::abs(T - 0.25) / 0.25 <= deficit + 1e-12);
    CHECK(deficit <= 0.05);
}
