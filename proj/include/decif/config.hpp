#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "decif/constraints.hpp"
#include "decif/errors.hpp"
#include "decif/instruct_synth.hpp"
#include "decif/llm_backend.hpp"
#include "decif/meta_gen.hpp"

namespace decif::config {

/// Full pipeline configuration. Defaults reproduce the reference parameters:
/// 25 domains per iteration over 1000 iterations, ~30 requests per domain,
/// 20 scenarios per request, p = [0.2, 0.3, 0.3, 0.1, 0.1], temperature 0.6,
/// top_p 0.95, max_tokens 4096.
struct PipelineConfig {
    backend::BackendConfig backend;
    std::string backend_kind = "http"; // http | mock
    std::string mock_script_path;
    std::map<std::string, std::string> stage_models; // stage name -> model override
    meta::MetaGenConfig meta;
    constraints::SamplingDistribution dist;
    synth::SynthesisConfig synthesis;
    backend::GenerationParams params;
    long long seed = 1;
    std::string output_root = "out";
    double stage_success_threshold = 0.5;
    std::map<std::string, std::string> template_overrides; // kind name -> file path
    std::string constraint_pool_path; // optional audited pool JSON
    bool no_timestamps = false;

    std::string model_for(const std::string& stage) const {
        auto it = stage_models.find(stage);
        return it == stage_models.end() ? std::string() : it->second;
    }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
    return {{"backend",
             {{"endpoint_url", c.backend.endpoint_url},
              {"model_id", c.backend.model_id},
              {"api_key_env", c.backend.api_key_env},
              {"request_timeout_ms", c.backend.request_timeout_ms},
              {"max_retries", c.backend.max_retries},
              {"max_in_flight", c.backend.max_in_flight},
              {"backoff_base_ms", c.backend.backoff_base_ms},
              {"min_request_interval_ms", c.backend.min_request_interval_ms},
              {"kind", c.backend_kind},
              {"mock_script", c.mock_script_path},
              {"stage_models", c.stage_models}}},
            {"meta",
             {{"iterations", c.meta.iterations},
              {"domains_per_iter", c.meta.domains_per_iter},
              {"requests_per_domain", c.meta.requests_per_domain},
              {"scenarios_per_request", c.meta.scenarios_per_request}}},
            {"distribution", c.dist.p},
            {"synthesis",
             {{"max_refinements", c.synthesis.max_refinements},
              {"general_purpose", c.synthesis.general_purpose}}},
            {"params",
             {{"temperature", c.params.temperature},
              {"top_p", c.params.top_p},
              {"max_tokens", c.params.max_tokens},
              {"stop_sequences", c.params.stop_sequences}}},
            {"seed", c.seed},
            {"output_root", c.output_root},
            {"stage_success_threshold", c.stage_success_threshold},
            {"templates", c.template_overrides},
            {"constraint_pool", c.constraint_pool_path},
            {"no_timestamps", c.no_timestamps}};
}

inline PipelineConfig from_json(const nlohmann::json& doc) {
    PipelineConfig c;
    if (!doc.is_object() && !doc.is_null())
        throw Error(ErrorCode::Config, "config document must be a JSON object");
    if (doc.is_null()) return c;
    try {
        if (doc.contains("backend")) {
            const auto& b = doc["backend"];
            c.backend.endpoint_url = b.value("endpoint_url", c.backend.endpoint_url);
            c.backend.model_id = b.value("model_id", c.backend.model_id);
            c.backend.api_key_env = b.value("api_key_env", c.backend.api_key_env);
            c.backend.request_timeout_ms =
                b.value("request_timeout_ms", c.backend.request_timeout_ms);
            c.backend.max_retries = b.value("max_retries", c.backend.max_retries);
            c.backend.max_in_flight = b.value("max_in_flight", c.backend.max_in_flight);
            c.backend.backoff_base_ms = b.value("backoff_base_ms", c.backend.backoff_base_ms);
            c.backend.min_request_interval_ms =
                b.value("min_request_interval_ms", c.backend.min_request_interval_ms);
            c.backend_kind = b.value("kind", c.backend_kind);
            c.mock_script_path = b.value("mock_script", c.mock_script_path);
            if (b.contains("stage_models"))
                c.stage_models = b["stage_models"].get<std::map<std::string, std::string>>();
        }
        if (doc.contains("meta")) {
            const auto& m = doc["meta"];
            c.meta.iterations = m.value("iterations", c.meta.iterations);
            c.meta.domains_per_iter = m.value("domains_per_iter", c.meta.domains_per_iter);
            c.meta.requests_per_domain =
                m.value("requests_per_domain", c.meta.requests_per_domain);
            c.meta.scenarios_per_request =
                m.value("scenarios_per_request", c.meta.scenarios_per_request);
        }
        if (doc.contains("distribution")) {
            const auto p = doc["distribution"].get<std::vector<double>>();
            if (p.size() != 5)
                throw Error(ErrorCode::Config, "distribution must have exactly 5 components");
            for (size_t i = 0; i < 5; ++i) c.dist.p[i] = p[i];
        }
        if (doc.contains("synthesis")) {
            const auto& s = doc["synthesis"];
            c.synthesis.max_refinements = s.value("max_refinements", c.synthesis.max_refinements);
            c.synthesis.general_purpose = s.value("general_purpose", c.synthesis.general_purpose);
        }
        if (doc.contains("params")) {
            const auto& p = doc["params"];
            c.params.temperature = p.value("temperature", c.params.temperature);
            c.params.top_p = p.value("top_p", c.params.top_p);
            c.params.max_tokens = p.value("max_tokens", c.params.max_tokens);
            if (p.contains("stop_sequences"))
                c.params.stop_sequences = p["stop_sequences"].get<std::vector<std::string>>();
        }
        c.seed = doc.value("seed", c.seed);
        c.output_root = doc.value("output_root", c.output_root);
        c.stage_success_threshold =
            doc.value("stage_success_threshold", c.stage_success_threshold);
        if (doc.contains("templates"))
            c.template_overrides = doc["templates"].get<std::map<std::string, std::string>>();
        c.constraint_pool_path = doc.value("constraint_pool", c.constraint_pool_path);
        c.no_timestamps = doc.value("no_timestamps", c.no_timestamps);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, std::string("config field has the wrong type: ") + e.what());
    }
    c.synthesis.dist = c.dist;
    return c;
}

/// Empty or whitespace-only files yield the full default configuration.
inline PipelineConfig load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Config, "cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string content = trim(ss.str());
    if (content.empty()) return from_json(nlohmann::json::object());
    nlohmann::json doc = nlohmann::json::parse(content, nullptr, false);
    if (doc.is_discarded())
        throw Error(ErrorCode::Config, "config file is not valid JSON: " + path);
    return from_json(doc);
}

/// Collects every invariant violation instead of stopping at the first.
inline std::vector<std::string> validate(const PipelineConfig& c) {
    std::vector<std::string> errors;
    auto check = [&](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            errors.emplace_back(e.what());
        }
    };
    check([&] { backend::validate_backend_config(c.backend); });
    check([&] { backend::validate_params(c.params); });
    check([&] { meta::validate_meta_config(c.meta); });
    check([&] { constraints::validate_distribution(c.dist); });
    check([&] { synth::validate_synthesis_config(c.synthesis); });
    if (c.backend_kind != "http" && c.backend_kind != "mock")
        errors.push_back("backend.kind must be \"http\" or \"mock\"");
    if (!(c.stage_success_threshold >= 0.0 && c.stage_success_threshold <= 1.0))
        errors.push_back("stage_success_threshold must be within [0, 1]");
    if (c.output_root.empty()) errors.push_back("output_root must be non-empty");
    for (const auto& [kind, path] : c.template_overrides) {
        if (!prompting::template_kind_from_name(kind))
            errors.push_back("templates: unknown template kind \"" + kind + "\"");
        else if (path.empty())
            errors.push_back("templates." + kind + ": empty path");
    }
    return errors;
}

/// Resolved template set with any configured per-kind file overrides applied.
inline prompting::TemplateSet resolve_templates(const PipelineConfig& c) {
    prompting::TemplateSet set;
    for (const auto& [kind_name, path] : c.template_overrides) {
        const auto kind = prompting::template_kind_from_name(kind_name);
        if (!kind) throw Error(ErrorCode::Config, "unknown template kind: " + kind_name);
        set.load_override(*kind, path);
    }
    return set;
}

} // namespace decif::config
