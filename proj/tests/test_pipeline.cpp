#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "decif/pipeline.hpp"

using namespace decif;
using namespace decif::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() /
               ("decif-pipe-" + tag + "-" + hex64(fnv1a64(std::to_string(rand()))));
    }
    ~TempDir() { fs::remove_all(path); }
};

config::PipelineConfig tiny_config(const fs::path& out, int t = 2, int d = 3, int r = 2,
                                   int s = 2) {
    config::PipelineConfig cfg;
    cfg.backend_kind = "mock";
    cfg.meta.iterations = t;
    cfg.meta.domains_per_iter = d;
    cfg.meta.requests_per_domain = r;
    cfg.meta.scenarios_per_request = s;
    cfg.backend.max_in_flight = 4;
    cfg.seed = 77;
    cfg.output_root = out.string();
    cfg.no_timestamps = true;
    return cfg;
}

std::shared_ptr<backend::MockBackend> auto_mock(int max_in_flight = 4) {
    backend::BackendConfig bc = backend::MockBackend::default_config();
    bc.max_in_flight = max_in_flight;
    auto mock = std::make_shared<backend::MockBackend>(backend::MockScript{}, bc);
    mock->set_synthesizer(mockmodel::synthesize);
    return mock;
}

Pipeline::Logger quiet() {
    return [](const std::string&) {};
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("stage list parsing") {
    CHECK(parse_stage_list("").size() == 6);
    const auto some = parse_stage_list("domains, verify");
    CHECK(some.count(Stage::Domains) == 1);
    CHECK(some.count(Stage::Verify) == 1);
    CHECK(some.size() == 2);
    CHECK_THROWS_AS(parse_stage_list("domains,bogus"), Error);
}

TEST_CASE("full mock run produces a dataset with clean verdicts") {
    TempDir tmp("full");
    auto cfg = tiny_config(tmp.path);
    Pipeline pipe(cfg, auto_mock(), quiet());
    const auto manifest = pipe.run(all_stages());

    REQUIRE(fs::exists(tmp.path / store::kDatasetFile));
    const auto records = store::read_jsonl(tmp.path / store::kDatasetFile);
    CHECK(records.size() >= 1);
    for (const auto& rec : records) {
        for (const auto& v : rec.at("verdicts")) CHECK(v.at("value") == "YES");
        CHECK(rec.at("seed") == 77);
        CHECK(rec.at("created_at") == kEpochTimestamp);
        CHECK_FALSE(rec.at("lineage").at("domain").get<std::string>().empty());
    }

    // lineage totality: every scenario reaches a domain through exactly one request
    std::set<std::pair<std::string, std::string>> request_keys;
    for (const auto& r : store::read_jsonl(tmp.path / store::kRequestsFile))
        request_keys.emplace(r.at("domain").get<std::string>(),
                             r.at("text").get<std::string>());
    std::set<std::string> domain_names;
    for (const auto& d : store::read_jsonl(tmp.path / store::kDomainsFile))
        domain_names.insert(d.at("name").get<std::string>());
    for (const auto& s : store::read_jsonl(tmp.path / store::kScenariosFile)) {
        CHECK(request_keys.count({s.at("domain").get<std::string>(),
                                  s.at("request").get<std::string>()}) == 1);
        CHECK(domain_names.count(s.at("domain").get<std::string>()) == 1);
    }

    // manifest counters reconcile with the ledgers
    const long scenarios =
        static_cast<long>(store::read_jsonl(tmp.path / store::kScenariosFile).size());
    const auto& instr = manifest.stages.at("instructions");
    CHECK(instr.attempted == scenarios);
    CHECK(instr.attempted == instr.accepted + instr.rejected + instr.discarded);
    const auto& verify_c = manifest.stages.at("verify");
    CHECK(verify_c.attempted == verify_c.accepted + verify_c.discarded);
    CHECK(verify_c.accepted == static_cast<long>(records.size()));
}

TEST_CASE("config validation failures carry the config error code") {
    TempDir tmp("badcfg");
    auto cfg = tiny_config(tmp.path);
    cfg.dist.p = {0.2, 0.3, 0.3, 0.1, 0.2};
    try {
        Pipeline pipe(cfg, auto_mock(), quiet());
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Config);
        CHECK(std::string(e.what()).find("sums to 1.1") != std::string::npos);
    }
}

TEST_CASE("running verify without checkpoints fails the stage but writes the manifest") {
    TempDir tmp("noverify");
    auto cfg = tiny_config(tmp.path);
    Pipeline pipe(cfg, auto_mock(), quiet());
    try {
        pipe.run({Stage::Verify});
        FAIL("expected StageFailed");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::StageFailed);
    }
    CHECK(fs::exists(tmp.path / store::kManifestFile));
}

TEST_CASE("resume skips completed meta stages without regenerating calls") {
    TempDir tmp("resume");
    auto cfg = tiny_config(tmp.path);
    {
        Pipeline pipe(cfg, auto_mock(), quiet());
        pipe.run({Stage::Domains, Stage::Requests, Stage::Scenarios});
    }
    auto fresh_mock = auto_mock();
    Pipeline pipe(cfg, fresh_mock, quiet());
    pipe.run(all_stages());
    CHECK(fresh_mock->call_count(prompting::TemplateKind::MetaDomains) == 0);
    CHECK(fresh_mock->call_count(prompting::TemplateKind::MetaRequests) == 0);
    CHECK(fresh_mock->call_count(prompting::TemplateKind::MetaScenarios) == 0);
    CHECK(fresh_mock->call_count(prompting::TemplateKind::InstructionGen) > 0);
    CHECK(fs::exists(tmp.path / store::kDatasetFile));
}

TEST_CASE("resuming a finished run is a no-op that changes no files") {
    TempDir tmp("noop");
    auto cfg = tiny_config(tmp.path);
    {
        Pipeline pipe(cfg, auto_mock(), quiet());
        pipe.run(all_stages());
    }
    std::map<std::string, std::string> before;
    for (const auto& entry : fs::directory_iterator(tmp.path))
        before[entry.path().filename().string()] = file_bytes(entry.path());

    auto fresh_mock = auto_mock();
    Pipeline pipe(cfg, fresh_mock, quiet());
    pipe.run(all_stages());
    CHECK(fresh_mock->call_count() == 0);
    for (const auto& entry : fs::directory_iterator(tmp.path)) {
        CHECK(before.count(entry.path().filename().string()) == 1);
        CHECK(file_bytes(entry.path()) == before[entry.path().filename().string()]);
    }
}

TEST_CASE("two identical runs are byte-identical under canonical timestamps") {
    TempDir tmp("repro");
    auto cfg = tiny_config(tmp.path);
    std::map<std::string, std::string> first;
    {
        Pipeline pipe(cfg, auto_mock(), quiet());
        pipe.run(all_stages());
        for (const auto& entry : fs::directory_iterator(tmp.path))
            first[entry.path().filename().string()] = file_bytes(entry.path());
    }
    fs::remove_all(tmp.path);
    {
        Pipeline pipe(cfg, auto_mock(), quiet());
        pipe.run(all_stages());
    }
    std::map<std::string, std::string> second;
    for (const auto& entry : fs::directory_iterator(tmp.path))
        second[entry.path().filename().string()] = file_bytes(entry.path());
    CHECK(first == second);
    CHECK(first.count("dataset.jsonl") == 1);
}

TEST_CASE("stage-by-stage invocations equal one full run") {
    TempDir one_dir("composed");
    auto cfg = tiny_config(one_dir.path);
    {
        Pipeline pipe(cfg, auto_mock(), quiet());
        pipe.run(all_stages());
    }

    TempDir sliced_dir("sliced");
    auto sliced_cfg = tiny_config(sliced_dir.path);
    for (Stage stage : kCanonicalOrder) {
        // a new pipeline and backend per invocation, as separate CLI calls would be
        Pipeline pipe(sliced_cfg, auto_mock(), quiet());
        pipe.run({stage});
    }

    for (const char* name :
         {store::kDomainsFile, store::kRequestsFile, store::kScenariosFile,
          store::kInstructionsFile, store::kResponsesFile, store::kDatasetFile}) {
        CHECK(file_bytes(one_dir.path / name) == file_bytes(sliced_dir.path / name));
    }
}

TEST_CASE("general-purpose mode carries no constraints anywhere") {
    TempDir tmp("gp");
    auto cfg = tiny_config(tmp.path);
    cfg.synthesis.general_purpose = true;
    Pipeline pipe(cfg, auto_mock(), quiet());
    pipe.run(all_stages());
    for (const auto& rec : store::read_jsonl(tmp.path / store::kInstructionsFile))
        CHECK(rec.at("constraints").empty());
    const auto records = store::read_jsonl(tmp.path / store::kDatasetFile);
    CHECK(records.size() >= 1);
    for (const auto& rec : records) CHECK(rec.at("constraints").empty());
}

TEST_CASE("config file loading applies defaults and rejects malformed input") {
    TempDir tmp("cfg");
    fs::create_directories(tmp.path);
    const fs::path empty = tmp.path / "empty.json";
    { std::ofstream out(empty); }
    const auto cfg = config::load_file(empty.string());
    CHECK(cfg.meta.iterations == 1000);
    CHECK(cfg.meta.domains_per_iter == 25);
    CHECK(cfg.meta.requests_per_domain == 30);
    CHECK(cfg.meta.scenarios_per_request == 20);
    CHECK(cfg.params.temperature == Catch::Approx(0.6));
    CHECK(cfg.params.top_p == Catch::Approx(0.95));
    CHECK(cfg.params.max_tokens == 4096);
    CHECK(config::validate(cfg).empty());

    const fs::path bad = tmp.path / "bad.json";
    {
        std::ofstream out(bad);
        out << "{ not json";
    }
    CHECK_THROWS_AS(config::load_file(bad.string()), Error);

    config::PipelineConfig zero;
    zero.meta.iterations = 0;
    CHECK_FALSE(config::validate(zero).empty());
}

TEST_CASE("template override files are honored end to end") {
    TempDir tmp("tplov");
    fs::create_directories(tmp.path);
    const fs::path tpl = tmp.path / "domains.txt";
    {
        std::ofstream out(tpl);
        out << "Name {number of domains} areas, one per hyphen line.";
    }
    auto cfg = tiny_config(tmp.path / "out");
    cfg.template_overrides["MetaDomains"] = tpl.string();
    const auto templates = config::resolve_templates(cfg);
    CHECK(prompting::render(prompting::TemplateKind::MetaDomains,
                            {{"number of domains", "7"}}, templates) ==
          "Name 7 areas, one per hyphen line.");
    CHECK_THROWS_AS([&] {
        auto broken = cfg;
        broken.template_overrides["MetaDomains"] = (tmp.path / "missing.txt").string();
        config::resolve_templates(broken);
    }(), Error);
}

TEST_CASE("mock script files drive the backend selection") {
    TempDir tmp("script");
    fs::create_directories(tmp.path);
    const fs::path script_path = tmp.path / "script.json";
    {
        std::ofstream out(script_path);
        out << R"({"fallback": "- Canned", "scripts": {"MetaDomains": ["- One\n- Two"]}})";
    }
    auto cfg = tiny_config(tmp.path / "out");
    cfg.mock_script_path = script_path.string();
    auto be = make_backend(cfg);
    const std::string reply = be->complete({backend::user_message("x")}, cfg.params);
    CHECK(reply == "- One\n- Two");
    CHECK(be->complete({backend::user_message("x")}, cfg.params) == "- Canned");
}
