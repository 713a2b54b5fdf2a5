#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "decif/constraints.hpp"
#include "decif/errors.hpp"
#include "decif/llm_backend.hpp"
#include "decif/prompting.hpp"
#include "decif/text_metrics.hpp"
#include "decif/util.hpp"

namespace decif::verify {

enum class VerdictValue { Yes, No };
enum class VerdictSource { Judge, Rule };

struct Verdict {
    int criterion_index = 0; // criterion position for judge verdicts,
                             // constraint position for rule verdicts
    VerdictValue value = VerdictValue::Yes;
    VerdictSource source = VerdictSource::Judge;
    std::string detail;

    bool passed() const { return value == VerdictValue::Yes; }
};

struct EvaluationCriterion {
    int index = 0;
    std::string question;
    std::optional<size_t> linked_constraint; // position in the instance list
    bool non_question = false;
};

enum class DiscardReason {
    EmptyResponse,
    NoCriteria,
    JudgeUnparseable,
    JudgeNo,
    RuleFail,
    DuplicateInstruction,
    BackendFailure,
};

inline const char* discard_reason_name(DiscardReason r) {
    switch (r) {
        case DiscardReason::EmptyResponse: return "EmptyResponse";
        case DiscardReason::NoCriteria: return "NoCriteria";
        case DiscardReason::JudgeUnparseable: return "JudgeUnparseable";
        case DiscardReason::JudgeNo: return "JudgeNo";
        case DiscardReason::RuleFail: return "RuleFail";
        case DiscardReason::DuplicateInstruction: return "DuplicateInstruction";
        case DiscardReason::BackendFailure: return "BackendFailure";
    }
    return "Unknown";
}

// ---------------------------------------------------------------------------
// Deterministic rule checking
// ---------------------------------------------------------------------------

namespace detail {

inline Verdict verdict(bool pass, std::string detail) {
    Verdict v;
    v.value = pass ? VerdictValue::Yes : VerdictValue::No;
    v.source = VerdictSource::Rule;
    v.detail = std::move(detail);
    return v;
}

inline bool looks_like_table(std::string_view text) {
    long pipe_rows = 0;
    for (const std::string& line : split_lines(text)) {
        long pipes = 0;
        for (char c : line)
            if (c == '|') ++pipes;
        if (pipes >= 2) ++pipe_rows;
    }
    return pipe_rows >= 2;
}

inline bool looks_like_html(std::string_view text) {
    bool open_tag = false;
    for (size_t i = 0; i + 1 < text.size(); ++i)
        if (text[i] == '<' && std::isalpha(static_cast<unsigned char>(text[i + 1])))
            open_tag = true;
    return open_tag && text.find("</") != std::string_view::npos;
}

inline bool looks_like_xml(std::string_view text) {
    const std::string t = trim(text);
    return !t.empty() && t.front() == '<' && t.find("</") != std::string::npos;
}

inline bool looks_like_latex(std::string_view text) {
    for (size_t i = 0; i + 1 < text.size(); ++i)
        if (text[i] == '\\' && std::isalpha(static_cast<unsigned char>(text[i + 1])))
            return true;
    return false;
}

inline bool looks_like_markdown(std::string_view text) {
    if (text.find("```") != std::string_view::npos) return true;
    if (text_metrics::count_bullets(text) > 0) return true;
    if (text_metrics::count_highlights(text) > 0) return true;
    for (const std::string& line : split_lines(text))
        if (starts_with(trim(line), "#")) return true;
    return false;
}

inline bool format_check(const std::string& format, std::string_view text) {
    if (format == "JSON") return text_metrics::json_wellformed(text);
    if (format == "Table") return looks_like_table(text);
    if (format == "HTML") return looks_like_html(text);
    if (format == "XML") return looks_like_xml(text);
    if (format == "LaTeX") return looks_like_latex(text);
    if (format == "Markdown") return looks_like_markdown(text);
    return false;
}

} // namespace detail

/// Deterministic pass/fail for a rule-checkable constraint instance. The
/// detail field carries the measured quantity for diagnostics.
inline Verdict rule_check(const constraints::ConstraintInstance& inst,
                          const std::string& response) {
    using constraints::ConstraintId;
    namespace tm = text_metrics;
    if (!inst.rule_checkable())
        throw Error(ErrorCode::Precondition,
                    "rule_check requires a rule-checkable constraint, got " + inst.name());

    const auto& p = inst.params;
    switch (inst.id) {
        case ConstraintId::IncludeKeywords: {
            for (const auto& kw : p.at("keywords")) {
                const std::string w = kw.get<std::string>();
                if (tm::count_keyword(response, w) < 1)
                    return detail::verdict(false, "missing keyword \"" + w + "\"");
            }
            return detail::verdict(true, "all keywords present");
        }
        case ConstraintId::KeywordFrequency: {
            const std::string w = p.at("keyword").get<std::string>();
            const long n = tm::count_keyword(response, w);
            const bool ok = tm::relation_holds(p.at("relation").get<std::string>(), n,
                                               p.at("count").get<long>());
            return detail::verdict(ok, "count=" + std::to_string(n));
        }
        case ConstraintId::ForbiddenWords: {
            for (const auto& kw : p.at("words")) {
                const std::string w = kw.get<std::string>();
                if (tm::count_keyword(response, w) > 0)
                    return detail::verdict(false, "forbidden word \"" + w + "\" present");
            }
            return detail::verdict(true, "no forbidden words");
        }
        case ConstraintId::LetterFrequency: {
            const std::string letter = p.at("letter").get<std::string>();
            const long n = tm::count_letter(response, letter.empty() ? 'e' : letter[0]);
            const bool ok = tm::relation_holds(p.at("relation").get<std::string>(), n,
                                               p.at("count").get<long>());
            return detail::verdict(ok, "count=" + std::to_string(n));
        }
        case ConstraintId::NumberParagraphs: {
            const long n = tm::count_paragraphs(response);
            return detail::verdict(n == p.at("count").get<long>(),
                                   "count=" + std::to_string(n));
        }
        case ConstraintId::NumberWords: {
            const long n = tm::count_words(response);
            const bool ok = tm::relation_holds(p.at("relation").get<std::string>(), n,
                                               p.at("count").get<long>());
            return detail::verdict(ok, "count=" + std::to_string(n));
        }
        case ConstraintId::NumberSentences: {
            const long n = tm::count_sentences(response);
            const bool ok = tm::relation_holds(p.at("relation").get<std::string>(), n,
                                               p.at("count").get<long>());
            return detail::verdict(ok, "count=" + std::to_string(n));
        }
        case ConstraintId::Mixed: {
            const auto paragraphs = tm::split_paragraphs(response);
            const long want = p.at("count").get<long>();
            if (static_cast<long>(paragraphs.size()) != want)
                return detail::verdict(false,
                                       "count=" + std::to_string(paragraphs.size()));
            const long index = p.at("index").get<long>();
            if (index < 1 || index > static_cast<long>(paragraphs.size()))
                return detail::verdict(false, "index out of range");
            const std::string first = p.at("first_word").get<std::string>();
            const std::string& para = paragraphs[static_cast<size_t>(index - 1)];
            const auto words = split_words(para);
            const bool ok = !words.empty() && to_lower(words.front()) == to_lower(first);
            return detail::verdict(ok, ok ? "paragraph starts correctly"
                                          : "paragraph " + std::to_string(index) +
                                                " does not start with \"" + first + "\"");
        }
        case ConstraintId::Postscript: {
            const std::string marker = p.at("marker").get<std::string>();
            for (const std::string& line : split_lines(response))
                if (starts_with(to_lower(trim(line)), to_lower(marker)))
                    return detail::verdict(true, "postscript found");
            return detail::verdict(false, "no line starts with " + marker);
        }
        case ConstraintId::NumberPlaceholder: {
            const long n = tm::count_placeholders(response);
            return detail::verdict(n >= p.at("count").get<long>(),
                                   "count=" + std::to_string(n));
        }
        case ConstraintId::NumberBullets: {
            const long n = tm::count_bullets(response);
            return detail::verdict(n == p.at("count").get<long>(),
                                   "count=" + std::to_string(n));
        }
        case ConstraintId::Title:
            return detail::verdict(tm::has_title(response),
                                   tm::has_title(response) ? "title present" : "no <<title>>");
        case ConstraintId::ChooseFrom: {
            const std::string t = trim(response);
            for (const auto& opt : p.at("options"))
                if (t == opt.get<std::string>()) return detail::verdict(true, "matched option");
            return detail::verdict(false, "response is not one of the options");
        }
        case ConstraintId::HighlightedSection: {
            const long n = tm::count_highlights(response);
            return detail::verdict(n >= p.at("count").get<long>(),
                                   "count=" + std::to_string(n));
        }
        case ConstraintId::MultipleSections: {
            const long n = tm::count_sections(response);
            return detail::verdict(n == p.at("count").get<long>(),
                                   "count=" + std::to_string(n));
        }
        case ConstraintId::MultipleFormat: {
            const std::string format = p.at("format").get<std::string>();
            const bool ok = detail::format_check(format, response);
            return detail::verdict(ok, ok ? "format ok" : "not valid " + format);
        }
        case ConstraintId::RepeatPrompt: {
            const std::string prompt = p.value("prompt_text", std::string());
            if (prompt.empty()) return detail::verdict(true, "no prompt text bound");
            return detail::verdict(starts_with(response, prompt),
                                   "response must begin with the request verbatim");
        }
        case ConstraintId::TwoResponses: {
            const std::string sep = p.at("separator").get<std::string>();
            return detail::verdict(tm::two_responses(response, sep),
                                   "expected exactly one \"" + sep + "\" separator");
        }
        case ConstraintId::AllUppercase:
            return detail::verdict(tm::all_alpha_upper(response), "casing");
        case ConstraintId::AllLowercase:
            return detail::verdict(tm::all_alpha_lower(response), "casing");
        case ConstraintId::AllcapitalWords: {
            const long n = tm::count_allcaps_words(response);
            const bool ok = tm::relation_holds(p.at("relation").get<std::string>(), n,
                                               p.at("count").get<long>());
            return detail::verdict(ok, "count=" + std::to_string(n));
        }
        case ConstraintId::EndChecker: {
            const std::string phrase = p.at("phrase").get<std::string>();
            return detail::verdict(ends_with(rtrim(response), phrase),
                                   "must end with: " + phrase);
        }
        case ConstraintId::StartChecker: {
            const std::string phrase = p.at("phrase").get<std::string>();
            return detail::verdict(starts_with(rtrim(response), phrase),
                                   "must start with: " + phrase);
        }
        case ConstraintId::Quotation: {
            const std::string style = p.at("mark_style").get<std::string>();
            const char mark = style == "single" ? '\'' : '"';
            return detail::verdict(tm::quotation_wrapped(response, mark),
                                   "must be wrapped in " + style + " quotes");
        }
        case ConstraintId::NoCommas: {
            const long n = tm::count_commas(response);
            return detail::verdict(n == 0, "count=" + std::to_string(n));
        }
        default:
            throw Error(ErrorCode::Precondition, "unreachable: judge-only constraint");
    }
}

// ---------------------------------------------------------------------------
// Backend-driven operations
// ---------------------------------------------------------------------------

/// Renders the response prompt for an accepted instruction.
inline std::string build_response_prompt(const std::string& instruction, bool general_mode,
                                         const prompting::TemplateSet& templates) {
    const auto kind = general_mode ? prompting::TemplateKind::GeneralResponse
                                   : prompting::TemplateKind::IFResponse;
    return prompting::render(kind, {{"instruction", instruction}}, templates);
}

inline std::string generate_response(backend::Backend& be, const std::string& instruction,
                                     bool general_mode, const backend::GenerationParams& params,
                                     const prompting::TemplateSet& templates =
                                         prompting::default_templates(),
                                     const std::string& model_override = {}) {
    const std::string prompt = build_response_prompt(instruction, general_mode, templates);
    const std::string text = be.complete({backend::user_message(prompt)}, params, model_override);
    if (trim(text).empty())
        throw ParseError(ErrorCode::EmptyOutput, "model returned an empty response");
    return text;
}

/// Best-effort linkage of criteria to constraint instances by distinctive
/// parameter tokens; a criterion links only when exactly one instance matches.
inline void link_criteria(std::vector<EvaluationCriterion>& criteria,
                          const std::vector<constraints::ConstraintInstance>& instances) {
    using constraints::ConstraintId;
    auto tokens_for = [](const constraints::ConstraintInstance& inst) {
        std::vector<std::string> tokens;
        for (const auto& [key, value] : inst.params.items()) {
            (void)key;
            if (value.is_string() && !value.get<std::string>().empty())
                tokens.push_back(value.get<std::string>());
            else if (value.is_number_integer())
                tokens.push_back(std::to_string(value.get<long>()));
            else if (value.is_array())
                for (const auto& item : value)
                    if (item.is_string()) tokens.push_back(item.get<std::string>());
        }
        switch (inst.id) {
            case ConstraintId::AllUppercase: tokens.push_back("capital"); tokens.push_back("uppercase"); break;
            case ConstraintId::AllLowercase: tokens.push_back("lowercase"); break;
            case ConstraintId::NoCommas: tokens.push_back("comma"); break;
            case ConstraintId::NumberBullets: tokens.push_back("bullet"); break;
            case ConstraintId::Title: tokens.push_back("title"); break;
            case ConstraintId::Quotation: tokens.push_back("quotation"); break;
            case ConstraintId::NumberPlaceholder: tokens.push_back("placeholder"); break;
            case ConstraintId::HighlightedSection: tokens.push_back("highlight"); break;
            case ConstraintId::RepeatPrompt: tokens.push_back("repeat"); break;
            default: break;
        }
        return tokens;
    };

    std::vector<std::vector<std::string>> instance_tokens;
    instance_tokens.reserve(instances.size());
    for (const auto& inst : instances) instance_tokens.push_back(tokens_for(inst));

    for (auto& criterion : criteria) {
        size_t match_count = 0;
        size_t matched = 0;
        for (size_t i = 0; i < instances.size(); ++i) {
            bool hit = false;
            for (const auto& token : instance_tokens[i]) {
                const bool numeric =
                    !token.empty() && std::isdigit(static_cast<unsigned char>(token[0]));
                if (numeric ? text_metrics::count_keyword(criterion.question, token) > 0
                            : contains_ci(criterion.question, token)) {
                    hit = true;
                    break;
                }
            }
            if (hit) {
                ++match_count;
                matched = i;
            }
        }
        if (match_count == 1) criterion.linked_constraint = matched;
    }
}

inline std::vector<EvaluationCriterion> decompose(
    backend::Backend& be, const std::string& instruction,
    const std::vector<constraints::ConstraintInstance>& instances,
    const backend::GenerationParams& params,
    const prompting::TemplateSet& templates = prompting::default_templates(),
    const std::string& model_override = {}) {
    const std::string prompt = prompting::render(prompting::TemplateKind::Decompose,
                                                 {{"instruction", instruction}}, templates);
    const std::string raw = be.complete({backend::user_message(prompt)}, params, model_override);
    const auto lines = prompting::parse_criteria(raw); // throws EmptyOutput
    std::vector<EvaluationCriterion> criteria;
    criteria.reserve(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        EvaluationCriterion c;
        c.index = static_cast<int>(i);
        c.question = lines[i].question;
        c.non_question = lines[i].non_question;
        criteria.push_back(std::move(c));
    }
    link_criteria(criteria, instances);
    return criteria;
}

inline std::string numbered_criteria_block(const std::vector<EvaluationCriterion>& criteria) {
    std::string out;
    for (size_t i = 0; i < criteria.size(); ++i) {
        if (i) out += "\n";
        out += std::to_string(i + 1) + ". " + criteria[i].question;
    }
    return out;
}

/// Judges the response against every criterion. One retry with an identical
/// prompt on a parse failure; a second failure propagates as a ParseError.
inline std::vector<Verdict> judge(backend::Backend& be, const std::string& instruction,
                                  const std::string& response,
                                  const std::vector<EvaluationCriterion>& criteria,
                                  const backend::GenerationParams& params,
                                  const prompting::TemplateSet& templates =
                                      prompting::default_templates(),
                                  const std::string& model_override = {}) {
    if (criteria.empty())
        throw Error(ErrorCode::Precondition, "judge requires at least one criterion");
    const std::string prompt =
        prompting::render(prompting::TemplateKind::Judge,
                          {{"instruction", instruction},
                           {"response", response},
                           {"criteria", numbered_criteria_block(criteria)}},
                          templates);
    std::vector<prompting::YesNo> raw;
    for (int attempt = 0;; ++attempt) {
        const std::string out =
            be.complete({backend::user_message(prompt)}, params, model_override);
        try {
            raw = prompting::parse_binary_verdicts(out, criteria.size());
            break;
        } catch (const ParseError&) {
            if (attempt >= 1) throw;
        }
    }
    std::vector<Verdict> verdicts;
    verdicts.reserve(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        Verdict v;
        v.criterion_index = static_cast<int>(i);
        v.value = raw[i] == prompting::YesNo::Yes ? VerdictValue::Yes : VerdictValue::No;
        v.source = VerdictSource::Judge;
        verdicts.push_back(v);
    }
    return verdicts;
}

/// Runs rule_check over every rule-checkable instance; verdict indices are
/// positions in the instance list.
inline std::vector<Verdict> rule_check_all(
    const std::vector<constraints::ConstraintInstance>& instances,
    const std::string& response) {
    std::vector<Verdict> out;
    for (size_t i = 0; i < instances.size(); ++i) {
        if (!instances[i].rule_checkable()) continue;
        Verdict v = rule_check(instances[i], response);
        v.criterion_index = static_cast<int>(i);
        out.push_back(std::move(v));
    }
    return out;
}

struct FilterDecision {
    bool keep = false;
    DiscardReason reason = DiscardReason::JudgeNo;
    int failing_index = -1;
    VerdictSource source = VerdictSource::Judge;
    std::string detail;

    static FilterDecision kept() {
        FilterDecision d;
        d.keep = true;
        return d;
    }
};

/// Keep iff every verdict from both sources passes; otherwise records the
/// first failing criterion or constraint.
inline FilterDecision filter_record(const std::vector<Verdict>& judge_verdicts,
                                    const std::vector<Verdict>& rule_verdicts) {
    for (const Verdict& v : judge_verdicts) {
        if (!v.passed()) {
            FilterDecision d;
            d.reason = DiscardReason::JudgeNo;
            d.failing_index = v.criterion_index;
            d.source = VerdictSource::Judge;
            d.detail = v.detail;
            return d;
        }
    }
    for (const Verdict& v : rule_verdicts) {
        if (!v.passed()) {
            FilterDecision d;
            d.reason = DiscardReason::RuleFail;
            d.failing_index = v.criterion_index;
            d.source = VerdictSource::Rule;
            d.detail = v.detail;
            return d;
        }
    }
    return FilterDecision::kept();
}

} // namespace decif::verify
