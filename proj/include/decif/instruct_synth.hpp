#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "decif/constraints.hpp"
#include "decif/errors.hpp"
#include "decif/llm_backend.hpp"
#include "decif/meta_gen.hpp"
#include "decif/prompting.hpp"
#include "decif/util.hpp"

namespace decif::synth {

struct SynthesisConfig {
    int max_refinements = 3;
    constraints::SamplingDistribution dist;
    bool general_purpose = false; // drop response constraints entirely
};

inline void validate_synthesis_config(const SynthesisConfig& c) {
    if (c.max_refinements < 1)
        throw Error(ErrorCode::Config, "max_refinements must be >= 1");
    constraints::validate_distribution(c.dist);
}

struct InstructionDraft {
    meta::MetaScenario scenario;
    std::vector<constraints::ConstraintInstance> constraints;
    std::string text;
    int refinement_count = 0;
    std::vector<std::pair<std::string, std::string>> conflict_log; // (before, after)
    bool marker_missing = false;
};

/// An accepted instruction with full provenance.
struct InstructionRecord {
    meta::MetaScenario scenario;
    std::vector<constraints::ConstraintInstance> constraints;
    std::string text;
    int refinement_count = 0;
    std::vector<std::pair<std::string, std::string>> conflict_log;
    bool marker_missing = false;

    std::string id() const { return "i-" + hex64(fnv1a64(meta::normalize(text))); }
};

struct Rejection {
    meta::MetaScenario scenario;
    std::vector<std::string> constraint_ids;
    std::string reason;
    std::vector<std::pair<std::string, std::string>> conflict_log;
};

// ---------------------------------------------------------------------------
// Prompt construction
// ---------------------------------------------------------------------------

namespace detail {

inline std::string substitute_all(std::string text, const std::string& needle,
                                  const std::string& value) {
    size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

inline std::string collapse_blank_runs(const std::string& text) {
    std::string out;
    int newlines = 0;
    for (char c : text) {
        if (c == '\n') {
            if (++newlines <= 2) out.push_back(c);
        } else {
            newlines = 0;
            out.push_back(c);
        }
    }
    return out;
}

} // namespace detail

/// Builds the instruction-synthesis prompt. In general-purpose mode the
/// constraint note is removed from the template rather than left dangling
/// with an empty list.
inline std::string build_instruction_prompt(const meta::MetaScenario& scenario,
                                            const std::vector<constraints::ConstraintInstance>&
                                                instances,
                                            bool general_purpose,
                                            const prompting::TemplateSet& templates =
                                                prompting::default_templates()) {
    if (!general_purpose) {
        if (instances.empty() || instances.size() > 5)
            throw Error(ErrorCode::Precondition,
                        "instruction synthesis takes 1-5 constraint instances");
        return prompting::render(
            prompting::TemplateKind::InstructionGen,
            {{"meta scenarios", scenario.text},
             {"the selected constraint(s)", constraints::render_constraint_block(instances)}},
            templates);
    }
    if (!instances.empty())
        throw Error(ErrorCode::Precondition,
                    "general-purpose mode must not carry constraint instances");
    std::string tpl = templates.text(prompting::TemplateKind::InstructionGen);
    static const std::string kNote =
        "2. The instruction should contain all the following verifiable constraint(s):";
    static const std::string kSlot = "{the selected constraint(s)}";
    const size_t note_pos = tpl.find(kNote);
    const size_t slot_pos = tpl.find(kSlot);
    if (note_pos != std::string::npos && slot_pos != std::string::npos && slot_pos > note_pos) {
        tpl.erase(note_pos, slot_pos + kSlot.size() - note_pos);
        const size_t renum = tpl.find("3. Your output");
        if (renum != std::string::npos) tpl.replace(renum, 2, "2.");
        tpl = detail::collapse_blank_runs(tpl);
    } else {
        // custom template without the canonical note: bind an empty block
        tpl = detail::substitute_all(tpl, kSlot, "");
    }
    return detail::substitute_all(tpl, "{meta scenarios}", scenario.text);
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline InstructionDraft synthesize_instruction(backend::Backend& be,
                                               const meta::MetaScenario& scenario,
                                               std::vector<constraints::ConstraintInstance>
                                                   instances,
                                               const SynthesisConfig& cfg,
                                               const backend::GenerationParams& params,
                                               const prompting::TemplateSet& templates =
                                                   prompting::default_templates(),
                                               const std::string& model_override = {}) {
    const std::string prompt =
        build_instruction_prompt(scenario, instances, cfg.general_purpose, templates);
    const std::string raw =
        be.complete({backend::user_message(prompt)}, params, model_override);
    const auto parsed = prompting::parse_instruction(raw); // throws EmptyOutput
    InstructionDraft draft;
    draft.scenario = scenario;
    draft.constraints = std::move(instances);
    draft.text = parsed.text;
    draft.marker_missing = parsed.marker_missing;
    return draft;
}

struct ConflictResult {
    bool conflict = false;
    std::string refined;
    bool parse_failed = false;
};

/// Interprets raw consistency-judgement output for `instruction`. A
/// no-conflict verdict always keeps the input text, even if the model rewrote
/// it; unparseable output fails safe as a conflict that keeps the original.
inline ConflictResult interpret_consistency_output(const std::string& raw,
                                                   const std::string& instruction) {
    ConflictResult out;
    try {
        const auto parsed = prompting::parse_consistency(raw);
        out.conflict = parsed.conflict;
        out.refined = parsed.conflict ? parsed.refined : instruction;
        if (out.conflict && trim(out.refined).empty()) {
            out.refined = instruction;
            out.parse_failed = true;
        }
    } catch (const ParseError&) {
        out.conflict = true;
        out.refined = instruction;
        out.parse_failed = true;
    }
    return out;
}

inline std::string consistency_prompt(const std::string& instruction,
                                      const prompting::TemplateSet& templates =
                                          prompting::default_templates()) {
    return prompting::render(prompting::TemplateKind::ConsistencyJudge,
                             {{"instruction", instruction}}, templates);
}

/// Consistency judgement for one instruction text.
inline ConflictResult detect_conflict(backend::Backend& be, const std::string& instruction,
                                      const backend::GenerationParams& params,
                                      const prompting::TemplateSet& templates =
                                          prompting::default_templates(),
                                      const std::string& model_override = {}) {
    if (trim(instruction).empty())
        throw Error(ErrorCode::Precondition, "cannot judge an empty instruction");
    const std::string prompt = consistency_prompt(instruction, templates);
    try {
        const std::string raw =
            be.complete({backend::user_message(prompt)}, params, model_override);
        return interpret_consistency_output(raw, instruction);
    } catch (const BackendError&) {
        ConflictResult out;
        out.conflict = true;
        out.refined = instruction;
        out.parse_failed = true;
        return out;
    }
}

struct ResolveOutcome {
    std::optional<InstructionRecord> record;
    std::optional<Rejection> rejection;

    bool accepted() const { return record.has_value(); }
};

namespace detail {

inline std::vector<std::string> constraint_ids(
    const std::vector<constraints::ConstraintInstance>& instances) {
    std::vector<std::string> ids;
    ids.reserve(instances.size());
    for (const auto& inst : instances) ids.push_back(inst.name());
    return ids;
}

/// The repeat-the-request constraint can only bind its reference text once
/// the final instruction is known.
inline void bind_instruction_dependent_params(
    std::vector<constraints::ConstraintInstance>& instances, const std::string& final_text) {
    for (auto& inst : instances)
        if (inst.id == constraints::ConstraintId::RepeatPrompt)
            inst.params["prompt_text"] = final_text;
}

} // namespace detail

/// Iterates consistency judgement, rewriting the text with each refinement,
/// until no conflict remains or the refinement budget is exhausted.
inline ResolveOutcome resolve_loop(backend::Backend& be, InstructionDraft draft,
                                   const SynthesisConfig& cfg,
                                   const backend::GenerationParams& params,
                                   const prompting::TemplateSet& templates =
                                       prompting::default_templates(),
                                   const std::string& model_override = {}) {
    validate_synthesis_config(cfg);
    ResolveOutcome out;
    while (true) {
        const ConflictResult res =
            detect_conflict(be, draft.text, params, templates, model_override);
        if (!res.conflict) {
            InstructionRecord rec;
            rec.scenario = draft.scenario;
            rec.constraints = std::move(draft.constraints);
            rec.text = draft.text;
            rec.refinement_count = draft.refinement_count;
            rec.conflict_log = std::move(draft.conflict_log);
            rec.marker_missing = draft.marker_missing;
            detail::bind_instruction_dependent_params(rec.constraints, rec.text);
            out.record = std::move(rec);
            return out;
        }
        draft.conflict_log.emplace_back(draft.text, res.refined);
        draft.text = res.refined;
        ++draft.refinement_count;
        if (draft.refinement_count >= cfg.max_refinements) {
            Rejection rej;
            rej.scenario = draft.scenario;
            rej.constraint_ids = detail::constraint_ids(draft.constraints);
            rej.reason = "UnresolvedConflict";
            rej.conflict_log = std::move(draft.conflict_log);
            out.rejection = std::move(rej);
            return out;
        }
    }
}

} // namespace decif::synth
