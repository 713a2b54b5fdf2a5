#pragma once

#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "decif/errors.hpp"
#include "decif/util.hpp"

namespace decif::prompting {

/// One variant per prompt template used by the pipeline.
enum class TemplateKind {
    MetaDomains,
    MetaRequests,
    MetaScenarios,
    InstructionGen,
    ConsistencyJudge,
    IFResponse,
    GeneralResponse,
    Decompose,
    Judge,
};

inline constexpr std::array<TemplateKind, 9> kAllTemplateKinds = {
    TemplateKind::MetaDomains,    TemplateKind::MetaRequests,
    TemplateKind::MetaScenarios,  TemplateKind::InstructionGen,
    TemplateKind::ConsistencyJudge, TemplateKind::IFResponse,
    TemplateKind::GeneralResponse, TemplateKind::Decompose,
    TemplateKind::Judge,
};

inline const char* template_kind_name(TemplateKind k) {
    switch (k) {
        case TemplateKind::MetaDomains: return "MetaDomains";
        case TemplateKind::MetaRequests: return "MetaRequests";
        case TemplateKind::MetaScenarios: return "MetaScenarios";
        case TemplateKind::InstructionGen: return "InstructionGen";
        case TemplateKind::ConsistencyJudge: return "ConsistencyJudge";
        case TemplateKind::IFResponse: return "IFResponse";
        case TemplateKind::GeneralResponse: return "GeneralResponse";
        case TemplateKind::Decompose: return "Decompose";
        case TemplateKind::Judge: return "Judge";
    }
    return "Unknown";
}

inline std::optional<TemplateKind> template_kind_from_name(std::string_view name) {
    for (TemplateKind k : kAllTemplateKinds)
        if (name == template_kind_name(k)) return k;
    return std::nullopt;
}

namespace detail {

inline constexpr const char* kMetaDomainsTemplate =
    R"tpl(Generate exactly {number of domains} real-world domains that these tasks might address.

Criteria:

- Cover everyday life comprehensively.

- Each domain is broad, distinct, and has clear practical value.

- All tasks within the domain must be solvable by a language model.

Examples:

- Education

- Healthcare

- Finance

- Technology

- Travel

- Computer Science

- Artificial Intelligence

- Data Science

- Mathematics

*Strict Output Format Requirements*

- Each domain must start with a hyphen followed by a space ("- ")

- Do not number the items

- Do not include any additional text, explanations, or formatting

- Do not repeat any examples from the input

- Maintain exactly one domain per line

Output exactly {number of domains} domains in this format:

- Domain A

- Domain B

- Domain C

...)tpl";

inline constexpr const char* kMetaRequestsTemplate =
    R"tpl(Generate nearly {number of requests} diverse short task instructions (meta requests) specifically for the {domain} domain.

*Requirements*

1. Each instruction must be **less than 4 words**, specific, unique, realistic, common, and *model-solvable*.

2. All instructions must be relevant to the {domain} domain.

3. No duplicate instructions within the output.

4. Instructions should be clear and actionable (avoid vague commands like "Do task").

*Example output for "Education" domain (Strictly follow this format and use lowercase letters)*

- explain the math concept

- grade student essays

- create lesson plan

- suggest teaching methods

- recommend educational apps

Now generate nearly {number of requests} diverse meta requests specifically for the {domain} domain:)tpl";

inline constexpr const char* kMetaScenariosTemplate =
    R"tpl(For the meta request {meta request}, generate {number of scenarios} diverse and realistic scenarios that would require this action in everyday life. Each scenario should:

1. Be specific with clear context (who, what, where, why)

2. Be from different domains (work, education, personal life, etc.)

3. Be 1-2 sentences maximum

4. Use hyphen formatting (- ...) for each scenario

An Example:

Meta request: create guide

- A fitness trainer needs to create a workout guide for elderly clients at a local community center

A software company wants to create an onboarding guide for new remote employees

A parent needs to create a morning routine guide for their children before school

...

Now generate scenarios for:

Meta request: {meta request})tpl";

inline constexpr const char* kInstructionGenTemplate =
    R"tpl(Create a verifiable instruction that the following persona might ask you to do:

{meta scenarios}

An example:

Write down the names of two famous international badminton mixed doubles tournaments and your answer should be all in capital words.

Note:

1. The above example is not tied to any particular persona, but you should create one that is unique and specific to the given persona.

2. The instruction should contain all the following verifiable constraint(s):

{the selected constraint(s)}

3. Your output should start with "User instruction:". Your output should not include an answer to the instruction.)tpl";

inline constexpr const char* kConsistencyJudgeTemplate =
    R"tpl(You are an expert in analyzing instructions for internal conflicts. Your task is to analyze the following instruction:

{instruction}

Follow these steps:

1. Check if there are any conflicting requirements (e.g., requiring both Chinese and English).

2. If there is a conflict, refine the instruction to resolve it. The refined instruction must be clear, concise, and free of any explanatory text.

3. If there is no conflict, return the original instruction unchanged.

4. Format your response as follows:

- Original: <original_instruction>

- Conflict: True/False

- Refined: <refined_instruction>

Ensure that the 'Refined' field contains ONLY the refined instruction without any additional explanations or context.)tpl";

inline constexpr const char* kIFResponseTemplate =
    R"tpl(You are an expert tasked with answering the given query. Please provide a clear and concise response directly, without introductory phrases such as 'What a great question', 'Here is the answer,' or similar expressions.

Focus solely on addressing the query.

Now please answer the given query while strictly following its inside constraints.

[Query] {instruction})tpl";

inline constexpr const char* kGeneralResponseTemplate =
    R"tpl(You are an expert tasked with answering the given query.

Please provide a clear and accurate response to the given query.

[Query] {instruction})tpl";

inline constexpr const char* kDecomposeTemplate =
    R"tpl(You are now an Evaluation Criteria Designer, tasked with breaking down complex instructions into granular evaluation questions. These questions will be used to assess whether a response meets the requirements of the given instruction.

Your task is as follows:

Analyze the provided instruction and identify all atomic-level requirements including: content specifications, formatting constraints, stylistic guidelines, factual accuracy checks, logical consistency requirements, and any other explicit or implicit conditions that must be satisfied.

For each requirement or constraint, create a clear, concise evaluation question that can be answered with a simple "yes" or "no."

Ensure the questions are specific, actionable, and free of any explanations or additional context.

Instruction:

{instruction}

Output Format:

Each evaluation question should be on a new line.
Questions must be phrased in a way that allows for a binary ("yes" or "no") answer.

Example Output:

Does the response include at least three sources?

Is the response under 100 words?

Now, proceed with the breakdown.)tpl";

inline constexpr const char* kJudgeTemplate =
    R"tpl(You are a Quality Assurance Specialist for AI responses. Your task is to rigorously evaluate whether a response meets all specified criteria. You must be thorough and impartial in your assessments.

Evaluation Guidelines:

1. Examine each criterion independently

2. Be strict but fair - only mark 'YES' if the response fully satisfies the criterion

3. Ignore any stylistic preferences not explicitly listed in the criteria

4. Focus exclusively on the criteria provided

Instruction:

{instruction}

Response to evaluate:

{response}

Evaluation criteria:

{criteria}

Your task:

For each criterion above, output ONLY either 'YES' or 'NO' on its own line, in order.

Begin evaluation:)tpl";

inline const char* builtin_template(TemplateKind k) {
    switch (k) {
        case TemplateKind::MetaDomains: return kMetaDomainsTemplate;
        case TemplateKind::MetaRequests: return kMetaRequestsTemplate;
        case TemplateKind::MetaScenarios: return kMetaScenariosTemplate;
        case TemplateKind::InstructionGen: return kInstructionGenTemplate;
        case TemplateKind::ConsistencyJudge: return kConsistencyJudgeTemplate;
        case TemplateKind::IFResponse: return kIFResponseTemplate;
        case TemplateKind::GeneralResponse: return kGeneralResponseTemplate;
        case TemplateKind::Decompose: return kDecomposeTemplate;
        case TemplateKind::Judge: return kJudgeTemplate;
    }
    return "";
}

} // namespace detail

using PromptBindings = std::map<std::string, std::string>;

/// The nine template texts, each overridable from a plain-text file
/// (config key "templates.<kind>"). Placeholders use single braces.
class TemplateSet {
public:
    TemplateSet() {
        for (TemplateKind k : kAllTemplateKinds)
            texts_[static_cast<size_t>(k)] = detail::builtin_template(k);
    }

    const std::string& text(TemplateKind k) const { return texts_[static_cast<size_t>(k)]; }

    void set_override(TemplateKind k, std::string text) {
        texts_[static_cast<size_t>(k)] = std::move(text);
    }

    void load_override(TemplateKind k, const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorCode::Io, "cannot open template override: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        set_override(k, ss.str());
    }

    /// Placeholder names occurring in the template, in first-occurrence order.
    std::vector<std::string> placeholders(TemplateKind k) const {
        std::vector<std::string> names;
        const std::string& t = text(k);
        size_t i = 0;
        while ((i = t.find('{', i)) != std::string::npos) {
            size_t close = t.find('}', i + 1);
            if (close == std::string::npos) break;
            std::string name = t.substr(i + 1, close - i - 1);
            if (std::find(names.begin(), names.end(), name) == names.end())
                names.push_back(name);
            i = close + 1;
        }
        return names;
    }

private:
    std::array<std::string, 9> texts_;
};

inline const TemplateSet& default_templates() {
    static const TemplateSet set;
    return set;
}

/// Substitutes every {placeholder} in the template. Bound values are inserted
/// verbatim and never rescanned, so values containing braces are safe.
inline std::string render(TemplateKind kind, const PromptBindings& bindings,
                          const TemplateSet& templates = default_templates()) {
    const std::string& tpl = templates.text(kind);
    std::string out;
    out.reserve(tpl.size() + 256);
    std::vector<std::string> used;
    size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] != '{') {
            out.push_back(tpl[i]);
            ++i;
            continue;
        }
        size_t close = tpl.find('}', i + 1);
        if (close == std::string::npos) {
            out.append(tpl, i, std::string::npos);
            break;
        }
        std::string name = tpl.substr(i + 1, close - i - 1);
        auto it = bindings.find(name);
        if (it == bindings.end())
            throw ParseError(ErrorCode::MissingPlaceholder,
                             "template " + std::string(template_kind_name(kind)) +
                                 " requires placeholder \"" + name + "\"",
                             name);
        out.append(it->second);
        if (std::find(used.begin(), used.end(), name) == used.end()) used.push_back(name);
        i = close + 1;
    }
    for (const auto& [name, value] : bindings) {
        (void)value;
        if (std::find(used.begin(), used.end(), name) == used.end())
            throw ParseError(ErrorCode::UnknownPlaceholder,
                             "binding \"" + name + "\" does not occur in template " +
                                 std::string(template_kind_name(kind)),
                             name);
    }
    return out;
}

/// Best-effort reverse mapping from a rendered prompt to its TemplateKind,
/// keyed on phrases unique to each builtin template. Used by the mock backend
/// and by call-log instrumentation.
inline std::optional<TemplateKind> classify_prompt(std::string_view prompt) {
    if (prompt.find("Quality Assurance Specialist") != std::string_view::npos)
        return TemplateKind::Judge;
    if (prompt.find("Evaluation Criteria Designer") != std::string_view::npos)
        return TemplateKind::Decompose;
    if (prompt.find("analyzing instructions for internal conflicts") != std::string_view::npos)
        return TemplateKind::ConsistencyJudge;
    if (prompt.find("strictly following its inside constraints") != std::string_view::npos)
        return TemplateKind::IFResponse;
    if (prompt.find("clear and accurate response to the given query") != std::string_view::npos)
        return TemplateKind::GeneralResponse;
    if (prompt.find("Create a verifiable instruction") != std::string_view::npos)
        return TemplateKind::InstructionGen;
    if (prompt.find("diverse and realistic scenarios") != std::string_view::npos)
        return TemplateKind::MetaScenarios;
    if (prompt.find("meta requests") != std::string_view::npos)
        return TemplateKind::MetaRequests;
    if (prompt.find("real-world domains") != std::string_view::npos)
        return TemplateKind::MetaDomains;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Structured-output parsers. All failures are typed ParseErrors; none of
// these abort on arbitrary input.
// ---------------------------------------------------------------------------

struct HyphenList {
    std::vector<std::string> items;
    int noise_count = 0; // non-empty lines that did not match "- <item>"
};

inline HyphenList parse_hyphen_list(std::string_view text) {
    HyphenList out;
    for (const std::string& raw : split_lines(text)) {
        std::string line = trim(raw);
        if (line.empty()) continue;
        if (line.size() >= 2 && line[0] == '-' && line[1] == ' ') {
            std::string item = trim(std::string_view(line).substr(2));
            if (item.empty()) {
                ++out.noise_count;
            } else {
                out.items.push_back(std::move(item));
            }
        } else {
            ++out.noise_count;
        }
    }
    if (out.items.empty())
        throw ParseError(ErrorCode::EmptyOutput, "no hyphen-list items parsed");
    return out;
}

struct ParsedInstruction {
    std::string text;
    bool marker_missing = false;
};

inline ParsedInstruction parse_instruction(std::string_view text) {
    static constexpr std::string_view kMarker = "user instruction:";
    ParsedInstruction out;
    size_t pos = find_ci(text, kMarker);
    if (pos == std::string::npos) {
        out.text = trim(text);
        out.marker_missing = true;
    } else {
        out.text = trim(text.substr(pos + kMarker.size()));
    }
    if (out.text.empty())
        throw ParseError(ErrorCode::EmptyOutput, "instruction text is empty");
    return out;
}

struct ConsistencyResult {
    std::string original;
    bool conflict = false;
    std::string refined;
};

namespace detail {

/// Matches "<bullet?> <Label>:" at the start of a line; labels are
/// case-insensitive. Returns the value part after the colon.
inline std::optional<std::string> match_label(const std::string& line, std::string_view label) {
    std::string s = trim(line);
    if (starts_with(s, "- ")) s = trim(std::string_view(s).substr(2));
    else if (starts_with(s, "* ")) s = trim(std::string_view(s).substr(2));
    if (s.size() < label.size() + 1) return std::nullopt;
    if (to_lower(s.substr(0, label.size())) != to_lower(label)) return std::nullopt;
    size_t i = label.size();
    while (i < s.size() && is_space(s[i])) ++i;
    if (i >= s.size() || s[i] != ':') return std::nullopt;
    return trim(std::string_view(s).substr(i + 1));
}

inline bool is_any_label(const std::string& line) {
    return match_label(line, "Original").has_value() ||
           match_label(line, "Conflict").has_value() ||
           match_label(line, "Refined").has_value();
}

} // namespace detail

/// Extracts the Original/Conflict/Refined triple. Labels are case-insensitive
/// and may appear in any order; values may span multiple lines up to the next
/// labeled line.
inline ConsistencyResult parse_consistency(std::string_view text) {
    std::optional<std::string> original, conflict_raw, refined;
    const std::vector<std::string> lines = split_lines(text);
    for (size_t i = 0; i < lines.size(); ++i) {
        std::optional<std::string>* slot = nullptr;
        std::optional<std::string> value;
        if ((value = detail::match_label(lines[i], "Original"))) slot = &original;
        else if ((value = detail::match_label(lines[i], "Conflict"))) slot = &conflict_raw;
        else if ((value = detail::match_label(lines[i], "Refined"))) slot = &refined;
        if (!slot) continue;
        std::string combined = *value;
        for (size_t j = i + 1; j < lines.size() && !detail::is_any_label(lines[j]); ++j) {
            if (trim(lines[j]).empty()) break;
            combined += "\n" + trim(lines[j]);
            i = j;
        }
        if (!slot->has_value()) *slot = trim(combined);
    }
    // a present-but-bad Conflict value is reported before any missing field
    bool conflict = false;
    if (conflict_raw) {
        std::string flag = to_lower(trim(*conflict_raw));
        while (!flag.empty() && (flag.back() == '.' || flag.back() == ',' || flag.back() == '!'))
            flag.pop_back();
        if (flag == "true") conflict = true;
        else if (flag == "false") conflict = false;
        else throw ParseError(ErrorCode::BadBoolean,
                              "conflict flag is not True/False: \"" + *conflict_raw + "\"",
                              *conflict_raw);
    }
    if (!original) throw ParseError(ErrorCode::MissingField, "missing field Original", "Original");
    if (!conflict_raw) throw ParseError(ErrorCode::MissingField, "missing field Conflict", "Conflict");
    if (!refined) throw ParseError(ErrorCode::MissingField, "missing field Refined", "Refined");

    ConsistencyResult out;
    out.original = *original;
    out.refined = *refined;
    out.conflict = conflict;
    return out;
}

struct CriterionLine {
    std::string question;
    bool non_question = false; // kept, but did not end with '?'
};

namespace detail {

inline std::string strip_list_marker(std::string line) {
    std::string s = trim(line);
    if (starts_with(s, "- ") || starts_with(s, "* "))
        return trim(std::string_view(s).substr(2));
    size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')'))
        return trim(std::string_view(s).substr(i + 1));
    return s;
}

} // namespace detail

inline std::vector<CriterionLine> parse_criteria(std::string_view text) {
    std::vector<CriterionLine> out;
    for (const std::string& raw : split_lines(text)) {
        std::string q = detail::strip_list_marker(raw);
        if (q.empty()) continue;
        CriterionLine c;
        c.non_question = q.back() != '?';
        c.question = std::move(q);
        out.push_back(std::move(c));
    }
    if (out.empty())
        throw ParseError(ErrorCode::EmptyOutput, "no evaluation criteria parsed");
    return out;
}

enum class YesNo { Yes, No };

namespace detail {

inline std::string strip_token_punct(std::string s) {
    static constexpr std::string_view punct = ".,:;!?\"'()[]*";
    size_t b = 0, e = s.size();
    while (b < e && punct.find(s[b]) != std::string_view::npos) ++b;
    while (e > b && punct.find(s[e - 1]) != std::string_view::npos) --e;
    return s.substr(b, e - b);
}

} // namespace detail

/// Scans lines for standalone YES/NO tokens, case-insensitively and tolerant
/// of list markers and surrounding punctuation. Exactly expected_n verdicts
/// must be found.
inline std::vector<YesNo> parse_binary_verdicts(std::string_view text, size_t expected_n) {
    if (expected_n < 1)
        throw ParseError(ErrorCode::Precondition, "expected_n must be >= 1");
    std::vector<YesNo> verdicts;
    std::vector<std::string> suspect_lines; // single-token lines that are not YES/NO
    for (const std::string& raw : split_lines(text)) {
        std::string line = detail::strip_list_marker(raw);
        if (line.empty()) continue;
        const std::vector<std::string> words = split_words(line);
        if (words.size() != 1) continue; // prose, skipped
        std::string token = to_lower(detail::strip_token_punct(words[0]));
        if (token == "yes") verdicts.push_back(YesNo::Yes);
        else if (token == "no") verdicts.push_back(YesNo::No);
        else if (!token.empty()) suspect_lines.push_back(trim(raw));
    }
    if (verdicts.size() != expected_n) {
        if (!suspect_lines.empty())
            throw ParseError(ErrorCode::UnparseableLine,
                             "unparseable verdict line: \"" + suspect_lines.front() + "\"",
                             suspect_lines.front());
        throw ParseError(ErrorCode::CountMismatch,
                         "found " + std::to_string(verdicts.size()) + " verdicts, expected " +
                             std::to_string(expected_n),
                         std::to_string(verdicts.size()) + "/" + std::to_string(expected_n));
    }
    return verdicts;
}

} // namespace decif::prompting
