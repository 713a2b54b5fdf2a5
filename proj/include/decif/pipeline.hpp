#pragma once

#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "decif/config.hpp"
#include "decif/constraints.hpp"
#include "decif/dataset_store.hpp"
#include "decif/instruct_synth.hpp"
#include "decif/llm_backend.hpp"
#include "decif/meta_gen.hpp"
#include "decif/mock_model.hpp"
#include "decif/prompting.hpp"
#include "decif/respond_verify.hpp"

namespace decif::pipeline {

namespace fs = std::filesystem;

enum class Stage { Domains, Requests, Scenarios, Instructions, Responses, Verify };

inline constexpr std::array<Stage, 6> kCanonicalOrder = {
    Stage::Domains,  Stage::Requests,  Stage::Scenarios,
    Stage::Instructions, Stage::Responses, Stage::Verify,
};

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Domains: return "domains";
        case Stage::Requests: return "requests";
        case Stage::Scenarios: return "scenarios";
        case Stage::Instructions: return "instructions";
        case Stage::Responses: return "responses";
        case Stage::Verify: return "verify";
    }
    return "unknown";
}

inline std::set<Stage> all_stages() {
    return {kCanonicalOrder.begin(), kCanonicalOrder.end()};
}

/// Parses "domains,requests,..."; an empty string selects every stage.
inline std::set<Stage> parse_stage_list(const std::string& csv) {
    if (trim(csv).empty()) return all_stages();
    std::set<Stage> out;
    size_t start = 0;
    while (start <= csv.size()) {
        const size_t comma = csv.find(',', start);
        const std::string token =
            trim(comma == std::string::npos ? csv.substr(start)
                                            : csv.substr(start, comma - start));
        if (!token.empty()) {
            bool found = false;
            for (Stage s : kCanonicalOrder)
                if (token == stage_name(s)) {
                    out.insert(s);
                    found = true;
                }
            if (!found) throw Error(ErrorCode::Config, "unknown stage: " + token);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw Error(ErrorCode::Config, "no stages selected");
    return out;
}

/// Builds the backend named by the configuration. A mock backend without a
/// script answers from the deterministic synthesizer.
inline std::shared_ptr<backend::Backend> make_backend(const config::PipelineConfig& cfg) {
    if (cfg.backend_kind == "mock") {
        backend::MockScript script;
        if (!cfg.mock_script_path.empty())
            script = backend::MockScript::from_file(cfg.mock_script_path);
        auto mock = std::make_shared<backend::MockBackend>(std::move(script), cfg.backend);
        mock->set_synthesizer(mockmodel::synthesize);
        return mock;
    }
    if (cfg.backend_kind == "http") return std::make_shared<backend::HttpBackend>(cfg.backend);
    throw Error(ErrorCode::Config, "unknown backend kind: " + cfg.backend_kind);
}

/// Orchestrates Algorithm-style stage execution with durable checkpoints:
/// each stage reads its predecessor's JSONL file, so any prefix of stages can
/// be re-run or resumed without regenerating earlier work.
class Pipeline {
public:
    using Logger = std::function<void(const std::string&)>;

    Pipeline(config::PipelineConfig cfg, std::shared_ptr<backend::Backend> be,
             Logger log = {})
        : cfg_(std::move(cfg)),
          backend_(std::move(be)),
          log_(log ? std::move(log) : [](const std::string& m) { std::cerr << m << "\n"; }) {
        const auto errors = config::validate(cfg_);
        if (!errors.empty()) {
            std::string joined;
            for (const auto& e : errors) joined += (joined.empty() ? "" : "; ") + e;
            throw Error(ErrorCode::Config, joined);
        }
        templates_ = config::resolve_templates(cfg_);
        if (!cfg_.constraint_pool_path.empty())
            pool_ = constraints::ConstraintPool::load_from_file(cfg_.constraint_pool_path);
        root_ = fs::path(cfg_.output_root);
    }

    const fs::path& root() const { return root_; }

    store::RunManifest run(const std::set<Stage>& stages) {
        fs::create_directories(root_);
        bool fresh = true;
        if (fs::exists(root_ / store::kManifestFile)) {
            manifest_ = store::RunManifest::load(root_ / store::kManifestFile);
            fresh = false;
        } else {
            manifest_ = store::RunManifest{};
            manifest_.config_snapshot = config::to_json(cfg_);
            manifest_.seed = cfg_.seed;
            manifest_.started_at = now();
        }

        bool any_work = false;
        for (Stage stage : kCanonicalOrder) {
            if (!stages.count(stage)) continue;
            if (manifest_.stage_completed(stage_name(stage))) {
                log_(std::string("stage ") + stage_name(stage) + ": already complete, skipped");
                continue;
            }
            try {
                run_stage(stage);
            } catch (...) {
                // a failed stage still leaves a manifest behind for diagnosis
                manifest_.finished_at = now();
                manifest_.save(root_ / store::kManifestFile);
                throw;
            }
            any_work = true;
            manifest_.mark_completed(stage_name(stage));
            manifest_.finished_at = now();
            manifest_.save(root_ / store::kManifestFile);
        }
        if (fresh && !any_work) {
            manifest_.finished_at = now();
            manifest_.save(root_ / store::kManifestFile);
        }
        return manifest_;
    }

private:
    std::string now() const { return cfg_.no_timestamps ? kEpochTimestamp : rfc3339_now(); }

    fs::path file(const char* name) const { return root_ / name; }

    void require_input(Stage stage, const char* filename) const {
        if (!fs::exists(file(filename)))
            throw Error(ErrorCode::StageFailed,
                        std::string("stage ") + stage_name(stage) + " requires checkpoint " +
                            filename + "; run the earlier stages first");
    }

    void record_stage(const std::string& name, const meta::StageCounters& counters,
                      const char* checkpoint) {
        meta::StageCounters merged = counters;
        if (auto it = manifest_.stages.find(name); it != manifest_.stages.end()) {
            const meta::StageCounters& prev = it->second;
            merged.attempted += prev.attempted;
            merged.parsed += prev.parsed;
            merged.deduped += prev.deduped;
            merged.accepted += prev.accepted;
            merged.rejected += prev.rejected;
            merged.discarded += prev.discarded;
            merged.calls_attempted += prev.calls_attempted;
            merged.calls_ok += prev.calls_ok;
        }
        manifest_.stages[name] = merged;
        manifest_.checkpoints[name] = checkpoint;
    }

    void run_stage(Stage stage) {
        switch (stage) {
            case Stage::Domains: return run_domains();
            case Stage::Requests: return run_requests();
            case Stage::Scenarios: return run_scenarios();
            case Stage::Instructions: return run_instructions();
            case Stage::Responses: return run_responses();
            case Stage::Verify: return run_verify();
        }
    }

    // ---- meta stages ----

    void run_domains() {
        auto res = meta::generate_domains(*backend_, cfg_.meta, cfg_.params,
                                          cfg_.stage_success_threshold, templates_,
                                          cfg_.model_for("domains"));
        store::JsonlWriter out(file(store::kDomainsFile), /*truncate=*/true);
        for (const auto& d : res.domains) out.append(store::domain_to_json(d));
        for (const auto& n : res.notes) log_("domains: " + n);
        record_stage("domains", res.counters, store::kDomainsFile);
        log_("stage domains: " + std::to_string(res.domains.size()) + " distinct domains from " +
             std::to_string(res.counters.calls_ok) + "/" +
             std::to_string(res.counters.calls_attempted) + " iterations");
    }

    void run_requests() {
        require_input(Stage::Requests, store::kDomainsFile);
        std::vector<meta::MetaDomain> domains;
        for (const auto& obj : store::read_jsonl(file(store::kDomainsFile)))
            domains.push_back(store::domain_from_json(obj));
        auto res = meta::run_requests_stage(*backend_, domains, cfg_.meta, cfg_.params,
                                            cfg_.stage_success_threshold, templates_,
                                            cfg_.model_for("requests"));
        store::JsonlWriter out(file(store::kRequestsFile), /*truncate=*/true);
        for (const auto& r : res.requests) out.append(store::request_to_json(r));
        for (const auto& n : res.notes) log_("requests: " + n);
        record_stage("requests", res.counters, store::kRequestsFile);
        log_("stage requests: " + std::to_string(res.requests.size()) + " requests across " +
             std::to_string(domains.size()) + " domains");
    }

    void run_scenarios() {
        require_input(Stage::Scenarios, store::kRequestsFile);
        std::vector<meta::MetaRequest> requests;
        for (const auto& obj : store::read_jsonl(file(store::kRequestsFile)))
            requests.push_back(store::request_from_json(obj));
        auto res = meta::run_scenarios_stage(*backend_, requests, cfg_.meta, cfg_.params,
                                             cfg_.stage_success_threshold, templates_,
                                             cfg_.model_for("scenarios"));
        store::JsonlWriter out(file(store::kScenariosFile), /*truncate=*/true);
        for (const auto& s : res.scenarios) out.append(store::scenario_to_json(s));
        for (const auto& n : res.notes) log_("scenarios: " + n);
        record_stage("scenarios", res.counters, store::kScenariosFile);
        log_("stage scenarios: " + std::to_string(res.scenarios.size()) + " scenarios across " +
             std::to_string(requests.size()) + " requests");
    }

    // ---- instruction synthesis with the consistency loop ----

    struct ActiveDraft {
        synth::InstructionDraft draft;
        bool done = false;
    };

    void run_instructions() {
        require_input(Stage::Instructions, store::kScenariosFile);
        std::vector<meta::MetaScenario> scenarios;
        for (const auto& obj : store::read_jsonl(file(store::kScenariosFile)))
            scenarios.push_back(store::scenario_from_json(obj));

        // resume: skip scenarios that already reached a terminal state
        std::set<std::string> terminal;
        std::set<std::string> existing_instruction_ids;
        if (fs::exists(file(store::kInstructionsFile))) {
            for (const auto& obj : store::read_jsonl(file(store::kInstructionsFile))) {
                terminal.insert(obj.at("scenario_id").get<std::string>());
                existing_instruction_ids.insert(obj.at("id").get<std::string>());
            }
        }
        if (fs::exists(file(store::kRejectsFile)))
            for (const auto& obj : store::read_jsonl(file(store::kRejectsFile)))
                terminal.insert(obj.at("scenario_id").get<std::string>());
        if (fs::exists(file(store::kDiscardsFile)))
            for (const auto& obj : store::read_jsonl(file(store::kDiscardsFile)))
                if (starts_with(obj.at("reason").get<std::string>(), "Synthesis") ||
                    obj.at("reason").get<std::string>() == "DuplicateInstruction")
                    terminal.insert(obj.at("record_id").get<std::string>());

        std::vector<meta::MetaScenario> pending;
        for (auto& s : scenarios)
            if (!terminal.count(s.id())) pending.push_back(std::move(s));

        meta::StageCounters counters;
        counters.attempted = static_cast<long>(pending.size());
        store::JsonlWriter instructions_out(file(store::kInstructionsFile));
        store::JsonlWriter rejects_out(file(store::kRejectsFile));
        store::JsonlWriter discards_out(file(store::kDiscardsFile));
        if (pending.empty()) {
            record_stage("instructions", counters, store::kInstructionsFile);
            return;
        }

        synth::SynthesisConfig synth_cfg = cfg_.synthesis;
        synth_cfg.dist = cfg_.dist;
        const std::string model = cfg_.model_for("instructions");
        const constraints::Instantiator instantiator(pool_);

        // step 1: sample constraints and synthesize first drafts, batched
        std::vector<std::vector<constraints::ConstraintInstance>> instance_sets(pending.size());
        std::vector<std::vector<backend::ChatMessage>> prompts;
        prompts.reserve(pending.size());
        for (size_t i = 0; i < pending.size(); ++i) {
            if (!synth_cfg.general_purpose) {
                SeededRng rng(cfg_.seed, "constraints/" + pending[i].id());
                const int k = constraints::sample_constraint_count(cfg_.dist, rng);
                const auto ids = constraints::sample_constraints(pool_, k, rng);
                instance_sets[i] = instantiator.instantiate_set(ids, rng, pending[i].text);
            }
            prompts.push_back({backend::user_message(synth::build_instruction_prompt(
                pending[i], instance_sets[i], synth_cfg.general_purpose, templates_))});
        }
        const auto synth_results = backend_->complete_batch(prompts, cfg_.params, model);
        counters.calls_attempted += static_cast<long>(prompts.size());

        std::vector<ActiveDraft> drafts;
        for (size_t i = 0; i < pending.size(); ++i) {
            if (!synth_results[i].ok()) {
                discards_out.append(store::DiscardEntry{pending[i].id(), "SynthesisFailed", -1,
                                                        "", synth_results[i].message}
                                        .to_json());
                ++counters.discarded;
                continue;
            }
            try {
                const auto parsed = prompting::parse_instruction(synth_results[i].text);
                ++counters.calls_ok;
                ++counters.parsed;
                ActiveDraft a;
                a.draft.scenario = pending[i];
                a.draft.constraints = instance_sets[i];
                a.draft.text = parsed.text;
                a.draft.marker_missing = parsed.marker_missing;
                drafts.push_back(std::move(a));
            } catch (const ParseError& e) {
                discards_out.append(store::DiscardEntry{pending[i].id(), "SynthesisFailed", -1,
                                                        "", e.what()}
                                        .to_json());
                ++counters.discarded;
            }
        }

        // step 2: consistency judgement rounds over the still-active drafts
        std::vector<size_t> active(drafts.size());
        for (size_t i = 0; i < drafts.size(); ++i) active[i] = i;
        while (!active.empty()) {
            std::vector<std::vector<backend::ChatMessage>> round;
            round.reserve(active.size());
            for (size_t idx : active)
                round.push_back({backend::user_message(
                    synth::consistency_prompt(drafts[idx].draft.text, templates_))});
            const auto results =
                backend_->complete_batch(round, cfg_.params, cfg_.model_for("consistency"));
            counters.calls_attempted += static_cast<long>(round.size());

            std::vector<size_t> still_active;
            for (size_t r = 0; r < active.size(); ++r) {
                auto& entry = drafts[active[r]];
                synth::ConflictResult verdict;
                if (results[r].ok()) {
                    ++counters.calls_ok;
                    verdict =
                        synth::interpret_consistency_output(results[r].text, entry.draft.text);
                } else {
                    verdict.conflict = true;
                    verdict.refined = entry.draft.text;
                    verdict.parse_failed = true;
                }
                if (!verdict.conflict) {
                    finalize_accepted(entry.draft, existing_instruction_ids, instructions_out,
                                      discards_out, counters);
                    continue;
                }
                entry.draft.conflict_log.emplace_back(entry.draft.text, verdict.refined);
                entry.draft.text = verdict.refined;
                ++entry.draft.refinement_count;
                if (entry.draft.refinement_count >= synth_cfg.max_refinements) {
                    synth::Rejection rej;
                    rej.scenario = entry.draft.scenario;
                    for (const auto& inst : entry.draft.constraints)
                        rej.constraint_ids.push_back(inst.name());
                    rej.reason = "UnresolvedConflict";
                    rej.conflict_log = entry.draft.conflict_log;
                    rejects_out.append(store::rejection_to_json(rej));
                    ++counters.rejected;
                } else {
                    still_active.push_back(active[r]);
                }
            }
            active = std::move(still_active);
        }

        record_stage("instructions", counters, store::kInstructionsFile);
        log_("stage instructions: " + std::to_string(counters.accepted) + " accepted, " +
             std::to_string(counters.rejected) + " rejected, " +
             std::to_string(counters.discarded) + " discarded of " +
             std::to_string(counters.attempted));
    }

    void finalize_accepted(synth::InstructionDraft& draft,
                           std::set<std::string>& existing_ids,
                           store::JsonlWriter& instructions_out,
                           store::JsonlWriter& discards_out, meta::StageCounters& counters) {
        synth::InstructionRecord rec;
        rec.scenario = draft.scenario;
        rec.constraints = draft.constraints;
        rec.text = draft.text;
        rec.refinement_count = draft.refinement_count;
        rec.conflict_log = draft.conflict_log;
        rec.marker_missing = draft.marker_missing;
        for (auto& inst : rec.constraints)
            if (inst.id == constraints::ConstraintId::RepeatPrompt)
                inst.params["prompt_text"] = rec.text;
        if (!existing_ids.insert(rec.id()).second) {
            discards_out.append(store::DiscardEntry{draft.scenario.id(),
                                                    "DuplicateInstruction", -1, "",
                                                    "normalized instruction already stored"}
                                    .to_json());
            ++counters.discarded;
            return;
        }
        instructions_out.append(store::instruction_to_json(rec));
        ++counters.accepted;
    }

    // ---- response generation ----

    void run_responses() {
        require_input(Stage::Responses, store::kInstructionsFile);
        const auto instruction_objs = store::read_jsonl(file(store::kInstructionsFile));

        std::set<std::string> done;
        if (fs::exists(file(store::kResponsesFile)))
            for (const auto& obj : store::read_jsonl(file(store::kResponsesFile)))
                done.insert(obj.at("instruction_id").get<std::string>());
        if (fs::exists(file(store::kDiscardsFile)))
            for (const auto& obj : store::read_jsonl(file(store::kDiscardsFile))) {
                const std::string reason = obj.at("reason").get<std::string>();
                if (reason == "EmptyResponse" || reason == "ResponseFailed")
                    done.insert(obj.at("record_id").get<std::string>());
            }

        std::vector<const nlohmann::json*> pending;
        for (const auto& obj : instruction_objs)
            if (!done.count(obj.at("id").get<std::string>())) pending.push_back(&obj);

        meta::StageCounters counters;
        counters.attempted = static_cast<long>(pending.size());
        store::JsonlWriter responses_out(file(store::kResponsesFile));
        store::JsonlWriter discards_out(file(store::kDiscardsFile));
        if (pending.empty()) {
            record_stage("responses", counters, store::kResponsesFile);
            return;
        }

        const std::string model = cfg_.model_for("responses");
        std::vector<std::vector<backend::ChatMessage>> prompts;
        prompts.reserve(pending.size());
        for (const auto* obj : pending)
            prompts.push_back({backend::user_message(verify::build_response_prompt(
                obj->at("instruction").get<std::string>(), cfg_.synthesis.general_purpose,
                templates_))});
        const auto results = backend_->complete_batch(prompts, cfg_.params, model);
        counters.calls_attempted += static_cast<long>(prompts.size());

        const std::string model_used = model.empty() ? cfg_.backend.model_id : model;
        for (size_t i = 0; i < pending.size(); ++i) {
            const std::string id = pending[i]->at("id").get<std::string>();
            if (!results[i].ok()) {
                discards_out.append(
                    store::DiscardEntry{id, "ResponseFailed", -1, "", results[i].message}
                        .to_json());
                ++counters.discarded;
                continue;
            }
            ++counters.calls_ok;
            if (trim(results[i].text).empty()) {
                discards_out.append(
                    store::DiscardEntry{id, "EmptyResponse", -1, "", ""}.to_json());
                ++counters.discarded;
                continue;
            }
            ++counters.parsed;
            responses_out.append(nlohmann::json{{"instruction_id", id},
                                                {"text", results[i].text},
                                                {"model_id", model_used}});
            ++counters.accepted;
        }
        record_stage("responses", counters, store::kResponsesFile);
        log_("stage responses: " + std::to_string(counters.accepted) + " responses of " +
             std::to_string(counters.attempted));
    }

    // ---- decompose-then-evaluate verification ----

    struct VerifyItem {
        std::string id;
        std::string instruction;
        std::string response;
        nlohmann::json lineage;
        std::vector<constraints::ConstraintInstance> instances;
        std::vector<verify::EvaluationCriterion> criteria;
        std::vector<verify::Verdict> judge_verdicts;
        bool judge_retry_pending = false;
        bool dropped = false;
    };

    void run_verify() {
        require_input(Stage::Verify, store::kInstructionsFile);
        require_input(Stage::Verify, store::kResponsesFile);

        std::map<std::string, const nlohmann::json*> instructions;
        const auto instruction_objs = store::read_jsonl(file(store::kInstructionsFile));
        for (const auto& obj : instruction_objs)
            instructions[obj.at("id").get<std::string>()] = &obj;

        store::DatasetWriter dataset(file(store::kDatasetFile));
        std::set<std::string> done;
        if (fs::exists(file(store::kDiscardsFile)))
            for (const auto& obj : store::read_jsonl(file(store::kDiscardsFile))) {
                const std::string reason = obj.at("reason").get<std::string>();
                if (reason == "NoCriteria" || reason == "JudgeUnparseable" ||
                    reason == "JudgeNo" || reason == "RuleFail" ||
                    reason == "VerifyFailed")
                    done.insert(obj.at("record_id").get<std::string>());
            }

        std::vector<VerifyItem> items;
        for (const auto& obj : store::read_jsonl(file(store::kResponsesFile))) {
            const std::string id = obj.at("instruction_id").get<std::string>();
            if (dataset.contains_id(id) || done.count(id)) continue;
            auto it = instructions.find(id);
            if (it == instructions.end()) continue;
            VerifyItem item;
            item.id = id;
            item.instruction = it->second->at("instruction").get<std::string>();
            item.response = obj.at("text").get<std::string>();
            item.lineage = it->second->at("lineage");
            for (const auto& c : it->second->at("constraints"))
                item.instances.push_back(store::constraint_from_summary(c));
            items.push_back(std::move(item));
        }

        meta::StageCounters counters;
        counters.attempted = static_cast<long>(items.size());
        store::JsonlWriter discards_out(file(store::kDiscardsFile));
        if (items.empty()) {
            record_stage("verify", counters, store::kDatasetFile);
            return;
        }

        const std::string respond_model = cfg_.model_for("responses");
        const std::string judge_model = cfg_.model_for("judge");
        const std::string decompose_model = cfg_.model_for("decompose");

        // decompose all instructions
        {
            std::vector<std::vector<backend::ChatMessage>> prompts;
            prompts.reserve(items.size());
            for (const auto& item : items)
                prompts.push_back({backend::user_message(
                    prompting::render(prompting::TemplateKind::Decompose,
                                      {{"instruction", item.instruction}}, templates_))});
            const auto results = backend_->complete_batch(prompts, cfg_.params, decompose_model);
            counters.calls_attempted += static_cast<long>(prompts.size());
            for (size_t i = 0; i < items.size(); ++i) {
                if (!results[i].ok()) {
                    drop(items[i], "VerifyFailed", results[i].message, discards_out, counters);
                    continue;
                }
                try {
                    const auto lines = prompting::parse_criteria(results[i].text);
                    ++counters.calls_ok;
                    for (size_t q = 0; q < lines.size(); ++q) {
                        verify::EvaluationCriterion c;
                        c.index = static_cast<int>(q);
                        c.question = lines[q].question;
                        c.non_question = lines[q].non_question;
                        items[i].criteria.push_back(std::move(c));
                    }
                    verify::link_criteria(items[i].criteria, items[i].instances);
                } catch (const ParseError&) {
                    drop(items[i], "NoCriteria", "decomposition yielded no criteria",
                         discards_out, counters);
                }
            }
        }

        // judge with one retry per item on parse failure
        for (int attempt = 0; attempt < 2; ++attempt) {
            std::vector<size_t> batch_items;
            std::vector<std::vector<backend::ChatMessage>> prompts;
            for (size_t i = 0; i < items.size(); ++i) {
                auto& item = items[i];
                if (item.dropped || item.criteria.empty()) continue;
                if (attempt == 1 && !item.judge_retry_pending) continue;
                if (attempt == 0 || item.judge_retry_pending) {
                    batch_items.push_back(i);
                    prompts.push_back({backend::user_message(prompting::render(
                        prompting::TemplateKind::Judge,
                        {{"instruction", item.instruction},
                         {"response", item.response},
                         {"criteria", verify::numbered_criteria_block(item.criteria)}},
                        templates_))});
                }
            }
            if (prompts.empty()) break;
            const auto results = backend_->complete_batch(prompts, cfg_.params, judge_model);
            counters.calls_attempted += static_cast<long>(prompts.size());
            for (size_t b = 0; b < batch_items.size(); ++b) {
                auto& item = items[batch_items[b]];
                item.judge_retry_pending = false;
                if (!results[b].ok()) {
                    if (attempt == 0) {
                        item.judge_retry_pending = true;
                    } else {
                        drop(item, "VerifyFailed", results[b].message, discards_out, counters);
                    }
                    continue;
                }
                try {
                    const auto raw =
                        prompting::parse_binary_verdicts(results[b].text, item.criteria.size());
                    ++counters.calls_ok;
                    item.judge_verdicts.clear();
                    for (size_t q = 0; q < raw.size(); ++q) {
                        verify::Verdict v;
                        v.criterion_index = static_cast<int>(q);
                        v.value = raw[q] == prompting::YesNo::Yes ? verify::VerdictValue::Yes
                                                                  : verify::VerdictValue::No;
                        v.source = verify::VerdictSource::Judge;
                        item.judge_verdicts.push_back(v);
                    }
                } catch (const ParseError& e) {
                    if (attempt == 0) {
                        item.judge_retry_pending = true;
                    } else {
                        drop(item, "JudgeUnparseable", e.what(), discards_out, counters);
                    }
                }
            }
        }

        // rule checks, filtering, persistence
        const std::string respond_model_used =
            respond_model.empty() ? cfg_.backend.model_id : respond_model;
        const std::string judge_model_used =
            judge_model.empty() ? cfg_.backend.model_id : judge_model;
        const std::string synth_model = cfg_.model_for("instructions");
        for (auto& item : items) {
            if (item.dropped) continue;
            const auto rule_verdicts = verify::rule_check_all(item.instances, item.response);
            const auto decision = verify::filter_record(item.judge_verdicts, rule_verdicts);
            if (!decision.keep) {
                store::DiscardEntry entry;
                entry.record_id = item.id;
                entry.reason = verify::discard_reason_name(decision.reason);
                entry.failing_index = decision.failing_index;
                entry.source = decision.source == verify::VerdictSource::Judge ? "judge" : "rule";
                entry.detail = decision.detail;
                discards_out.append(entry.to_json());
                ++counters.discarded;
                continue;
            }
            store::DatasetRecord record;
            record.id = item.id;
            record.instruction = item.instruction;
            record.response = item.response;
            record.lineage.domain = item.lineage.at("domain").get<std::string>();
            record.lineage.request = item.lineage.at("request").get<std::string>();
            record.lineage.scenario = item.lineage.at("scenario").get<std::string>();
            record.constraints = item.instances;
            for (const auto& c : item.criteria) record.criteria.push_back(c.question);
            record.verdicts = item.judge_verdicts;
            for (const auto& v : rule_verdicts) record.verdicts.push_back(v);
            record.models.synth = synth_model.empty() ? cfg_.backend.model_id : synth_model;
            record.models.respond = respond_model_used;
            record.models.judge = judge_model_used;
            record.created_at = now();
            record.seed = cfg_.seed;
            dataset.append(record);
            ++counters.accepted;
            ++counters.parsed;
        }

        record_stage("verify", counters, store::kDatasetFile);
        log_("stage verify: kept " + std::to_string(counters.accepted) + " of " +
             std::to_string(counters.attempted) + " records");
    }

    void drop(VerifyItem& item, const char* reason, const std::string& detail,
              store::JsonlWriter& discards_out, meta::StageCounters& counters) {
        item.dropped = true;
        discards_out.append(store::DiscardEntry{item.id, reason, -1, "", detail}.to_json());
        ++counters.discarded;
    }

    config::PipelineConfig cfg_;
    std::shared_ptr<backend::Backend> backend_;
    Logger log_;
    prompting::TemplateSet templates_;
    constraints::ConstraintPool pool_;
    fs::path root_;
    store::RunManifest manifest_;
};

} // namespace decif::pipeline
