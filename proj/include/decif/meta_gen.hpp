#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "decif/errors.hpp"
#include "decif/llm_backend.hpp"
#include "decif/prompting.hpp"
#include "decif/util.hpp"

namespace decif::meta {

/// Duplicate-detection key: case-folded, whitespace-collapsed, trailing
/// sentence punctuation stripped.
inline std::string normalize(std::string_view text) {
    std::string collapsed;
    collapsed.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_space(c)) {
            pending_space = !collapsed.empty();
            continue;
        }
        if (pending_space) {
            collapsed.push_back(' ');
            pending_space = false;
        }
        collapsed.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    while (!collapsed.empty() &&
           (collapsed.back() == '.' || collapsed.back() == '!' || collapsed.back() == '?'))
        collapsed.pop_back();
    while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
    return collapsed;
}

struct MetaDomain {
    std::string name;
    std::string norm_key;
};

struct MetaRequest {
    std::string domain; // owning domain display name
    std::string text;   // lowercase short task phrase
    std::string norm_key;
};

struct MetaScenario {
    std::string domain;
    std::string request;
    std::string text;
    std::string norm_key;

    std::string id() const {
        return "s-" + hex64(fnv1a64(domain + "\x1f" + request + "\x1f" + norm_key));
    }
};

struct MetaGenConfig {
    int iterations = 1000;          // T
    int domains_per_iter = 25;      // D
    int requests_per_domain = 30;   // R
    int scenarios_per_request = 20; // S
};

inline void validate_meta_config(const MetaGenConfig& c) {
    if (c.iterations < 1) throw Error(ErrorCode::Config, "iterations must be >= 1");
    if (c.domains_per_iter < 1) throw Error(ErrorCode::Config, "domains_per_iter must be >= 1");
    if (c.requests_per_domain < 1)
        throw Error(ErrorCode::Config, "requests_per_domain must be >= 1");
    if (c.scenarios_per_request < 1)
        throw Error(ErrorCode::Config, "scenarios_per_request must be >= 1");
}

/// Item-level stage counters. parsed == deduped + rejected + discarded + accepted.
struct StageCounters {
    long attempted = 0;
    long parsed = 0;
    long deduped = 0;
    long accepted = 0;
    long rejected = 0;
    long discarded = 0;
    long calls_attempted = 0;
    long calls_ok = 0;
};

// ---------------------------------------------------------------------------
// Pure parsing of stage outputs (reused by both the per-parent operations and
// the batched stage runners)
// ---------------------------------------------------------------------------

struct RequestParseResult {
    std::vector<MetaRequest> requests;
    long raw_items = 0;
    long duplicates = 0;
    long filtered = 0; // >= 6 words
    long capped = 0;   // beyond the 2R limit
    std::vector<std::string> warnings;
};

/// Down-cases items, applies the word-count soft filter (the template asks
/// for fewer than 4 words; 4-5 are kept with a warning, 6+ dropped), dedups
/// by norm_key within the domain, and caps the list at 2R.
inline RequestParseResult parse_requests(const MetaDomain& domain, std::string_view raw,
                                         const MetaGenConfig& cfg) {
    const auto list = prompting::parse_hyphen_list(raw); // throws EmptyOutput
    RequestParseResult out;
    out.raw_items = static_cast<long>(list.items.size());
    std::set<std::string> seen;
    const size_t cap = 2 * static_cast<size_t>(cfg.requests_per_domain);
    for (const std::string& item : list.items) {
        if (out.requests.size() >= cap) {
            ++out.capped;
            continue;
        }
        const std::string text = to_lower(trim(item));
        const size_t words = split_words(text).size();
        if (words >= 6) {
            ++out.filtered;
            continue;
        }
        if (words >= 4)
            out.warnings.push_back("request has " + std::to_string(words) + " words: " + text);
        const std::string key = normalize(text);
        if (key.empty() || !seen.insert(key).second) {
            ++out.duplicates;
            continue;
        }
        out.requests.push_back(MetaRequest{domain.name, text, key});
    }
    if (out.requests.empty())
        throw ParseError(ErrorCode::EmptyOutput, "no requests survived filtering for domain " +
                                                     domain.name);
    return out;
}

struct ScenarioParseResult {
    std::vector<MetaScenario> scenarios;
    long raw_items = 0;
    long duplicates = 0;
    long capped = 0;
};

inline ScenarioParseResult parse_scenarios(const MetaRequest& request, std::string_view raw,
                                           const MetaGenConfig& cfg) {
    const auto list = prompting::parse_hyphen_list(raw); // throws EmptyOutput
    ScenarioParseResult out;
    out.raw_items = static_cast<long>(list.items.size());
    std::set<std::string> seen;
    const size_t cap = 2 * static_cast<size_t>(cfg.scenarios_per_request);
    for (const std::string& item : list.items) {
        if (out.scenarios.size() >= cap) {
            ++out.capped;
            continue;
        }
        const std::string text = trim(item);
        const std::string key = normalize(text);
        if (key.empty() || !seen.insert(key).second) {
            ++out.duplicates;
            continue;
        }
        out.scenarios.push_back(MetaScenario{request.domain, request.text, text, key});
    }
    if (out.scenarios.empty())
        throw ParseError(ErrorCode::EmptyOutput,
                         "no scenarios survived dedup for request " + request.text);
    return out;
}

// ---------------------------------------------------------------------------
// Backend-driven generation
// ---------------------------------------------------------------------------

struct DomainStageResult {
    std::vector<MetaDomain> domains;
    StageCounters counters;
    std::vector<std::string> notes;
};

/// Runs T sequential iterations of the meta-domains prompt and merges the
/// parsed lists by norm_key. Iteration failures are recorded and skipped.
inline DomainStageResult generate_domains(backend::Backend& be, const MetaGenConfig& cfg,
                                          const backend::GenerationParams& params,
                                          double stage_success_threshold = 0.5,
                                          const prompting::TemplateSet& templates =
                                              prompting::default_templates(),
                                          const std::string& model_override = {}) {
    validate_meta_config(cfg);
    DomainStageResult result;
    std::set<std::string> seen;
    const std::string prompt = prompting::render(
        prompting::TemplateKind::MetaDomains,
        {{"number of domains", std::to_string(cfg.domains_per_iter)}}, templates);
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        ++result.counters.calls_attempted;
        try {
            const std::string raw =
                be.complete({backend::user_message(prompt)}, params, model_override);
            const auto list = prompting::parse_hyphen_list(raw);
            ++result.counters.calls_ok;
            result.counters.attempted += static_cast<long>(list.items.size());
            result.counters.parsed += static_cast<long>(list.items.size());
            for (const std::string& item : list.items) {
                const std::string key = normalize(item);
                if (key.empty() || !seen.insert(key).second) {
                    ++result.counters.deduped;
                    continue;
                }
                result.domains.push_back(MetaDomain{trim(item), key});
                ++result.counters.accepted;
            }
        } catch (const Error& e) {
            result.notes.push_back("iteration " + std::to_string(iter) + " skipped: " + e.what());
        }
    }
    if (result.counters.calls_ok == 0)
        throw Error(ErrorCode::AllIterationsFailed,
                    "every meta-domain iteration failed (" +
                        std::to_string(cfg.iterations) + " attempts)");
    if (static_cast<double>(result.counters.calls_ok) <
        stage_success_threshold * static_cast<double>(result.counters.calls_attempted))
        throw Error(ErrorCode::StageFailed,
                    "meta-domain stage parsed " + std::to_string(result.counters.calls_ok) +
                        "/" + std::to_string(result.counters.calls_attempted) +
                        " calls, below the success threshold");
    return result;
}

inline std::string requests_prompt(const MetaDomain& domain, const MetaGenConfig& cfg,
                                   const prompting::TemplateSet& templates =
                                       prompting::default_templates()) {
    return prompting::render(prompting::TemplateKind::MetaRequests,
                             {{"number of requests", std::to_string(cfg.requests_per_domain)},
                              {"domain", domain.name}},
                             templates);
}

inline std::string scenarios_prompt(const MetaRequest& request, const MetaGenConfig& cfg,
                                    const prompting::TemplateSet& templates =
                                        prompting::default_templates()) {
    return prompting::render(
        prompting::TemplateKind::MetaScenarios,
        {{"meta request", request.text},
         {"number of scenarios", std::to_string(cfg.scenarios_per_request)}},
        templates);
}

/// One backend call for one domain.
inline std::vector<MetaRequest> generate_requests(backend::Backend& be, const MetaDomain& domain,
                                                  const MetaGenConfig& cfg,
                                                  const backend::GenerationParams& params,
                                                  const prompting::TemplateSet& templates =
                                                      prompting::default_templates(),
                                                  const std::string& model_override = {}) {
    const std::string raw = be.complete(
        {backend::user_message(requests_prompt(domain, cfg, templates))}, params, model_override);
    return parse_requests(domain, raw, cfg).requests;
}

/// One backend call for one request; scenarios carry full lineage.
inline std::vector<MetaScenario> generate_scenarios(backend::Backend& be,
                                                    const MetaRequest& request,
                                                    const MetaGenConfig& cfg,
                                                    const backend::GenerationParams& params,
                                                    const prompting::TemplateSet& templates =
                                                        prompting::default_templates(),
                                                    const std::string& model_override = {}) {
    const std::string raw = be.complete(
        {backend::user_message(scenarios_prompt(request, cfg, templates))}, params,
        model_override);
    return parse_scenarios(request, raw, cfg).scenarios;
}

struct RequestStageResult {
    std::vector<MetaRequest> requests;
    StageCounters counters;
    std::vector<std::string> notes;
};

/// Fans out one call per domain through complete_batch. A failed or empty
/// parse skips that domain only; the stage fails when fewer than
/// stage_success_threshold of the calls parse.
inline RequestStageResult run_requests_stage(backend::Backend& be,
                                             const std::vector<MetaDomain>& domains,
                                             const MetaGenConfig& cfg,
                                             const backend::GenerationParams& params,
                                             double stage_success_threshold = 0.5,
                                             const prompting::TemplateSet& templates =
                                                 prompting::default_templates(),
                                             const std::string& model_override = {}) {
    validate_meta_config(cfg);
    if (domains.empty()) throw Error(ErrorCode::Precondition, "no domains to expand");
    std::vector<std::vector<backend::ChatMessage>> prompts;
    prompts.reserve(domains.size());
    for (const auto& d : domains)
        prompts.push_back({backend::user_message(requests_prompt(d, cfg, templates))});
    const auto results = be.complete_batch(prompts, params, model_override);

    RequestStageResult out;
    out.counters.calls_attempted = static_cast<long>(domains.size());
    for (size_t i = 0; i < domains.size(); ++i) {
        if (!results[i].ok()) {
            out.notes.push_back("domain \"" + domains[i].name +
                                "\" skipped: " + results[i].message);
            continue;
        }
        try {
            auto parsed = parse_requests(domains[i], results[i].text, cfg);
            ++out.counters.calls_ok;
            out.counters.attempted += parsed.raw_items;
            out.counters.parsed += parsed.raw_items;
            out.counters.deduped += parsed.duplicates;
            out.counters.rejected += parsed.filtered + parsed.capped;
            out.counters.accepted += static_cast<long>(parsed.requests.size());
            for (auto& w : parsed.warnings) out.notes.push_back(std::move(w));
            for (auto& r : parsed.requests) out.requests.push_back(std::move(r));
        } catch (const Error& e) {
            out.notes.push_back("domain \"" + domains[i].name + "\" skipped: " + e.what());
        }
    }
    if (static_cast<double>(out.counters.calls_ok) <
        stage_success_threshold * static_cast<double>(out.counters.calls_attempted))
        throw Error(ErrorCode::StageFailed,
                    "meta-request stage parsed " + std::to_string(out.counters.calls_ok) + "/" +
                        std::to_string(out.counters.calls_attempted) +
                        " calls, below the success threshold");
    return out;
}

struct ScenarioStageResult {
    std::vector<MetaScenario> scenarios;
    StageCounters counters;
    std::vector<std::string> notes;
};

inline ScenarioStageResult run_scenarios_stage(backend::Backend& be,
                                               const std::vector<MetaRequest>& requests,
                                               const MetaGenConfig& cfg,
                                               const backend::GenerationParams& params,
                                               double stage_success_threshold = 0.5,
                                               const prompting::TemplateSet& templates =
                                                   prompting::default_templates(),
                                               const std::string& model_override = {}) {
    validate_meta_config(cfg);
    if (requests.empty()) throw Error(ErrorCode::Precondition, "no requests to expand");
    std::vector<std::vector<backend::ChatMessage>> prompts;
    prompts.reserve(requests.size());
    for (const auto& r : requests)
        prompts.push_back({backend::user_message(scenarios_prompt(r, cfg, templates))});
    const auto results = be.complete_batch(prompts, params, model_override);

    ScenarioStageResult out;
    out.counters.calls_attempted = static_cast<long>(requests.size());
    for (size_t i = 0; i < requests.size(); ++i) {
        if (!results[i].ok()) {
            out.notes.push_back("request \"" + requests[i].text +
                                "\" skipped: " + results[i].message);
            continue;
        }
        try {
            auto parsed = parse_scenarios(requests[i], results[i].text, cfg);
            ++out.counters.calls_ok;
            out.counters.attempted += parsed.raw_items;
            out.counters.parsed += parsed.raw_items;
            out.counters.deduped += parsed.duplicates;
            out.counters.rejected += parsed.capped;
            out.counters.accepted += static_cast<long>(parsed.scenarios.size());
            for (auto& s : parsed.scenarios) out.scenarios.push_back(std::move(s));
        } catch (const Error& e) {
            out.notes.push_back("request \"" + requests[i].text + "\" skipped: " + e.what());
        }
    }
    if (static_cast<double>(out.counters.calls_ok) <
        stage_success_threshold * static_cast<double>(out.counters.calls_attempted))
        throw Error(ErrorCode::StageFailed,
                    "meta-scenario stage parsed " + std::to_string(out.counters.calls_ok) + "/" +
                        std::to_string(out.counters.calls_attempted) +
                        " calls, below the success threshold");
    return out;
}

} // namespace decif::meta
