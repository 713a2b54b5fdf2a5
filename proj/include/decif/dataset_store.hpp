#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "decif/constraints.hpp"
#include "decif/errors.hpp"
#include "decif/instruct_synth.hpp"
#include "decif/meta_gen.hpp"
#include "decif/respond_verify.hpp"
#include "decif/util.hpp"

namespace decif::store {

namespace fs = std::filesystem;

// Fixed file layout under the output root.
inline constexpr const char* kDomainsFile = "meta_domains.jsonl";
inline constexpr const char* kRequestsFile = "meta_requests.jsonl";
inline constexpr const char* kScenariosFile = "meta_scenarios.jsonl";
inline constexpr const char* kInstructionsFile = "instructions.jsonl";
inline constexpr const char* kResponsesFile = "responses.jsonl";
inline constexpr const char* kRejectsFile = "rejects.jsonl";
inline constexpr const char* kDiscardsFile = "discards.jsonl";
inline constexpr const char* kDatasetFile = "dataset.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";

// ---------------------------------------------------------------------------
// JSON-lines primitives
// ---------------------------------------------------------------------------

/// Single-writer JSON-lines sink. Each record is serialized into one buffer
/// and written with a single flushed call, so a crash can tear at most the
/// final line, which readers ignore.
class JsonlWriter {
public:
    JsonlWriter() = default;

    explicit JsonlWriter(const fs::path& path, bool truncate = false) { open(path, truncate); }

    void open(const fs::path& path, bool truncate = false) {
        path_ = path;
        out_.open(path, truncate ? (std::ios::binary | std::ios::trunc)
                                 : (std::ios::binary | std::ios::app));
        if (!out_) throw Error(ErrorCode::Io, "cannot open for writing: " + path.string());
    }

    bool is_open() const { return out_.is_open(); }
    const fs::path& path() const { return path_; }

    void append(const nlohmann::json& obj) {
        const std::string line = obj.dump() + "\n";
        out_.write(line.data(), static_cast<std::streamsize>(line.size()));
        out_.flush();
        if (!out_) throw Error(ErrorCode::Io, "write failed: " + path_.string());
    }

private:
    fs::path path_;
    std::ofstream out_;
};

/// Reads every newline-terminated line as a JSON object. A trailing fragment
/// with no terminator (torn final write) is ignored; a malformed complete
/// line is an error.
inline std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open for reading: " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<nlohmann::json> out;
    size_t start = 0;
    long line_no = 0;
    while (start < content.size()) {
        const size_t nl = content.find('\n', start);
        if (nl == std::string::npos) break; // unterminated fragment: torn write, ignored
        ++line_no;
        const std::string line = content.substr(start, nl - start);
        start = nl + 1;
        if (trim(line).empty()) continue;
        nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded())
            throw Error(ErrorCode::Io, "malformed JSON at " + path.string() + ":" +
                                           std::to_string(line_no));
        out.push_back(std::move(obj));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Record serialization
// ---------------------------------------------------------------------------

inline nlohmann::json constraint_summary(const constraints::ConstraintInstance& inst) {
    return {{"type", inst.name()}, {"rendered", inst.rendered}, {"params", inst.params}};
}

inline constraints::ConstraintInstance constraint_from_summary(const nlohmann::json& j) {
    constraints::ConstraintInstance inst;
    const auto id = constraints::constraint_id_from_name(j.at("type").get<std::string>());
    if (!id) throw Error(ErrorCode::Io, "unknown constraint type in record");
    inst.id = *id;
    inst.rendered = j.at("rendered").get<std::string>();
    inst.params = j.at("params");
    return inst;
}

inline nlohmann::json verdict_summary(const verify::Verdict& v) {
    return {{"index", v.criterion_index},
            {"value", v.passed() ? "YES" : "NO"},
            {"source", v.source == verify::VerdictSource::Judge ? "judge" : "rule"},
            {"detail", v.detail}};
}

struct DatasetRecord {
    std::string id;
    std::string instruction;
    std::string response;
    struct {
        std::string domain;
        std::string request;
        std::string scenario;
    } lineage;
    std::vector<constraints::ConstraintInstance> constraints;
    std::vector<std::string> criteria;
    std::vector<verify::Verdict> verdicts; // judge verdicts then rule verdicts
    struct {
        std::string synth;
        std::string respond;
        std::string judge;
    } models;
    std::string created_at;
    std::string pipeline_version = kPipelineVersion;
    long long seed = 0;

    nlohmann::json to_json() const {
        nlohmann::json cons = nlohmann::json::array();
        for (const auto& c : constraints) cons.push_back(constraint_summary(c));
        nlohmann::json verd = nlohmann::json::array();
        for (const auto& v : verdicts) verd.push_back(verdict_summary(v));
        return {{"id", id},
                {"instruction", instruction},
                {"response", response},
                {"lineage",
                 {{"domain", lineage.domain},
                  {"request", lineage.request},
                  {"scenario", lineage.scenario}}},
                {"constraints", std::move(cons)},
                {"criteria", criteria},
                {"verdicts", std::move(verd)},
                {"models",
                 {{"synth", models.synth}, {"respond", models.respond}, {"judge", models.judge}}},
                {"created_at", created_at},
                {"pipeline_version", pipeline_version},
                {"seed", seed}};
    }
};

/// Dataset sink with id uniqueness and instruction-level dedup by normalized
/// text hash.
class DatasetWriter {
public:
    explicit DatasetWriter(const fs::path& path) : path_(path) {
        if (fs::exists(path)) {
            for (const auto& obj : read_jsonl(path)) {
                ids_.insert(obj.at("id").get<std::string>());
                instr_hashes_.insert(fnv1a64(meta::normalize(obj.at("instruction").get<std::string>())));
            }
        }
        writer_.open(path);
    }

    size_t size() const { return ids_.size(); }

    bool contains_instruction(const std::string& instruction) const {
        return instr_hashes_.count(fnv1a64(meta::normalize(instruction))) > 0;
    }

    bool contains_id(const std::string& id) const { return ids_.count(id) > 0; }

    void append(const DatasetRecord& record) {
        if (ids_.count(record.id))
            throw Error(ErrorCode::DuplicateId, "duplicate record id: " + record.id);
        writer_.append(record.to_json());
        ids_.insert(record.id);
        instr_hashes_.insert(fnv1a64(meta::normalize(record.instruction)));
    }

private:
    fs::path path_;
    JsonlWriter writer_;
    std::set<std::string> ids_;
    std::set<std::uint64_t> instr_hashes_;
};

// ---------------------------------------------------------------------------
// Stage checkpoints
// ---------------------------------------------------------------------------

inline nlohmann::json domain_to_json(const meta::MetaDomain& d) {
    return {{"name", d.name}, {"norm_key", d.norm_key}};
}
inline meta::MetaDomain domain_from_json(const nlohmann::json& j) {
    return {j.at("name").get<std::string>(), j.at("norm_key").get<std::string>()};
}

inline nlohmann::json request_to_json(const meta::MetaRequest& r) {
    return {{"domain", r.domain}, {"text", r.text}, {"norm_key", r.norm_key}};
}
inline meta::MetaRequest request_from_json(const nlohmann::json& j) {
    return {j.at("domain").get<std::string>(), j.at("text").get<std::string>(),
            j.at("norm_key").get<std::string>()};
}

inline nlohmann::json scenario_to_json(const meta::MetaScenario& s) {
    return {{"id", s.id()},
            {"domain", s.domain},
            {"request", s.request},
            {"text", s.text},
            {"norm_key", s.norm_key}};
}
inline meta::MetaScenario scenario_from_json(const nlohmann::json& j) {
    return {j.at("domain").get<std::string>(), j.at("request").get<std::string>(),
            j.at("text").get<std::string>(), j.at("norm_key").get<std::string>()};
}

inline nlohmann::json instruction_to_json(const synth::InstructionRecord& r) {
    nlohmann::json cons = nlohmann::json::array();
    for (const auto& c : r.constraints) cons.push_back(constraint_summary(c));
    nlohmann::json log = nlohmann::json::array();
    for (const auto& [before, after] : r.conflict_log)
        log.push_back({{"before", before}, {"after", after}});
    return {{"id", r.id()},
            {"scenario_id", r.scenario.id()},
            {"instruction", r.text},
            {"lineage",
             {{"domain", r.scenario.domain},
              {"request", r.scenario.request},
              {"scenario", r.scenario.text}}},
            {"constraints", std::move(cons)},
            {"refinement_count", r.refinement_count},
            {"conflict_log", std::move(log)},
            {"marker_missing", r.marker_missing}};
}

inline synth::InstructionRecord instruction_from_json(const nlohmann::json& j) {
    synth::InstructionRecord r;
    r.text = j.at("instruction").get<std::string>();
    const auto& lineage = j.at("lineage");
    r.scenario.domain = lineage.at("domain").get<std::string>();
    r.scenario.request = lineage.at("request").get<std::string>();
    r.scenario.text = lineage.at("scenario").get<std::string>();
    r.scenario.norm_key = meta::normalize(r.scenario.text);
    for (const auto& c : j.at("constraints")) r.constraints.push_back(constraint_from_summary(c));
    r.refinement_count = j.at("refinement_count").get<int>();
    for (const auto& entry : j.at("conflict_log"))
        r.conflict_log.emplace_back(entry.at("before").get<std::string>(),
                                    entry.at("after").get<std::string>());
    r.marker_missing = j.value("marker_missing", false);
    return r;
}

inline nlohmann::json rejection_to_json(const synth::Rejection& r) {
    nlohmann::json log = nlohmann::json::array();
    for (const auto& [before, after] : r.conflict_log)
        log.push_back({{"before", before}, {"after", after}});
    return {{"scenario_id", r.scenario.id()},
            {"constraint_ids", r.constraint_ids},
            {"reason", r.reason},
            {"conflict_log", std::move(log)}};
}

struct DiscardEntry {
    std::string record_id;
    std::string reason;
    int failing_index = -1;
    std::string source; // "judge" | "rule" | ""
    std::string detail;

    nlohmann::json to_json() const {
        return {{"record_id", record_id},
                {"reason", reason},
                {"failing_index", failing_index},
                {"source", source},
                {"detail", detail}};
    }
};

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

inline nlohmann::json counters_to_json(const meta::StageCounters& c) {
    return {{"attempted", c.attempted},   {"parsed", c.parsed},
            {"deduped", c.deduped},       {"accepted", c.accepted},
            {"rejected", c.rejected},     {"discarded", c.discarded},
            {"calls_attempted", c.calls_attempted}, {"calls_ok", c.calls_ok}};
}

inline meta::StageCounters counters_from_json(const nlohmann::json& j) {
    meta::StageCounters c;
    c.attempted = j.value("attempted", 0L);
    c.parsed = j.value("parsed", 0L);
    c.deduped = j.value("deduped", 0L);
    c.accepted = j.value("accepted", 0L);
    c.rejected = j.value("rejected", 0L);
    c.discarded = j.value("discarded", 0L);
    c.calls_attempted = j.value("calls_attempted", 0L);
    c.calls_ok = j.value("calls_ok", 0L);
    return c;
}

struct RunManifest {
    nlohmann::json config_snapshot;
    long long seed = 0;
    std::string pipeline_version = kPipelineVersion;
    std::string started_at;
    std::string finished_at;
    std::map<std::string, meta::StageCounters> stages;
    std::map<std::string, std::string> checkpoints; // stage -> file name, relative to root
    std::vector<std::string> completed_stages;

    bool stage_completed(const std::string& name) const {
        for (const auto& s : completed_stages)
            if (s == name) return true;
        return false;
    }

    void mark_completed(const std::string& name) {
        if (!stage_completed(name)) completed_stages.push_back(name);
    }

    nlohmann::json to_json() const {
        nlohmann::json st = nlohmann::json::object();
        for (const auto& [name, counters] : stages) st[name] = counters_to_json(counters);
        return {{"pipeline_version", pipeline_version},
                {"seed", seed},
                {"started_at", started_at},
                {"finished_at", finished_at},
                {"config", config_snapshot},
                {"stages", std::move(st)},
                {"checkpoints", checkpoints},
                {"completed_stages", completed_stages}};
    }

    /// Atomic write: temp file then rename.
    void save(const fs::path& path) const {
        const fs::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw Error(ErrorCode::Io, "cannot write manifest: " + tmp.string());
            out << to_json().dump(2) << "\n";
        }
        fs::rename(tmp, path);
    }

    static RunManifest load(const fs::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorCode::Io, "cannot open manifest: " + path.string());
        nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded())
            throw Error(ErrorCode::CorruptManifest, "manifest is not valid JSON: " + path.string());
        RunManifest m;
        try {
            m.pipeline_version = doc.at("pipeline_version").get<std::string>();
            m.seed = doc.at("seed").get<long long>();
            m.started_at = doc.value("started_at", "");
            m.finished_at = doc.value("finished_at", "");
            m.config_snapshot = doc.value("config", nlohmann::json::object());
            if (doc.contains("stages"))
                for (const auto& [name, counters] : doc["stages"].items())
                    m.stages[name] = counters_from_json(counters);
            if (doc.contains("checkpoints"))
                m.checkpoints =
                    doc["checkpoints"].get<std::map<std::string, std::string>>();
            if (doc.contains("completed_stages"))
                m.completed_stages = doc["completed_stages"].get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::CorruptManifest,
                        std::string("manifest is missing required fields: ") + e.what());
        }
        return m;
    }
};

// ---------------------------------------------------------------------------
// Statistics & export
// ---------------------------------------------------------------------------

struct StatsReport {
    long records = 0;
    long judged = 0;
    double retention_rate = 0.0;
    std::map<int, long> constraint_histogram;
    std::array<double, 5> configured_p = {0, 0, 0, 0, 0};
    long domains_covered = 0;
    double mean_criteria = 0.0;
    std::map<std::string, long> discard_reasons;

    nlohmann::json to_json() const {
        nlohmann::json hist = nlohmann::json::object();
        for (const auto& [k, n] : constraint_histogram) hist[std::to_string(k)] = n;
        return {{"records", records},
                {"judged", judged},
                {"retention_rate", retention_rate},
                {"constraint_histogram", std::move(hist)},
                {"configured_p", configured_p},
                {"domains_covered", domains_covered},
                {"mean_criteria", mean_criteria},
                {"discard_reasons", discard_reasons}};
    }
};

/// Aggregates dataset.jsonl plus its sibling discard ledger and manifest.
/// Judged = kept + discards that carry complete verdicts (JudgeNo/RuleFail).
inline StatsReport compute_stats(const fs::path& dataset_path) {
    if (!fs::exists(dataset_path))
        throw Error(ErrorCode::Io, "dataset file not found: " + dataset_path.string());
    StatsReport report;
    std::set<std::string> domains;
    long criteria_total = 0;
    for (const auto& obj : read_jsonl(dataset_path)) {
        ++report.records;
        const int k = static_cast<int>(obj.at("constraints").size());
        ++report.constraint_histogram[k];
        domains.insert(obj.at("lineage").at("domain").get<std::string>());
        criteria_total += static_cast<long>(obj.at("criteria").size());
    }
    report.domains_covered = static_cast<long>(domains.size());
    report.mean_criteria =
        report.records ? static_cast<double>(criteria_total) / report.records : 0.0;

    const fs::path discards = dataset_path.parent_path() / kDiscardsFile;
    if (fs::exists(discards))
        for (const auto& obj : read_jsonl(discards))
            ++report.discard_reasons[obj.at("reason").get<std::string>()];

    report.judged = report.records;
    for (const char* reason : {"JudgeNo", "RuleFail"}) {
        auto it = report.discard_reasons.find(reason);
        if (it != report.discard_reasons.end()) report.judged += it->second;
    }
    report.retention_rate =
        report.judged ? static_cast<double>(report.records) / report.judged : 0.0;

    const fs::path manifest_path = dataset_path.parent_path() / kManifestFile;
    if (fs::exists(manifest_path)) {
        const RunManifest m = RunManifest::load(manifest_path);
        if (m.config_snapshot.contains("distribution")) {
            const auto p = m.config_snapshot["distribution"].get<std::vector<double>>();
            for (size_t i = 0; i < 5 && i < p.size(); ++i) report.configured_p[i] = p[i];
        }
    }
    return report;
}

enum class ExportFormat { Pair, Messages };

inline ExportFormat export_format_from_name(const std::string& name) {
    if (name == "pair") return ExportFormat::Pair;
    if (name == "messages") return ExportFormat::Messages;
    throw Error(ErrorCode::UnknownFormat, "unknown export format: " + name);
}

/// Lossless export of (instruction, response) pairs for SFT trainers.
inline long export_dataset(const fs::path& dataset_path, ExportFormat format,
                           const fs::path& output_path) {
    const auto records = read_jsonl(dataset_path);
    JsonlWriter out(output_path, /*truncate=*/true);
    for (const auto& obj : records) {
        const std::string instruction = obj.at("instruction").get<std::string>();
        const std::string response = obj.at("response").get<std::string>();
        if (format == ExportFormat::Pair) {
            out.append({{"instruction", instruction}, {"output", response}});
        } else {
            out.append({{"messages",
                         {{{"role", "user"}, {"content", instruction}},
                          {{"role", "assistant"}, {"content", response}}}}});
        }
    }
    return static_cast<long>(records.size());
}

} // namespace decif::store
