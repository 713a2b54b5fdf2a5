#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "decif/errors.hpp"
#include "decif/rng.hpp"
#include "decif/util.hpp"

namespace decif::constraints {

/// The fixed response-constraint taxonomy the sampler draws from.
enum class ConstraintId {
    IncludeKeywords,
    KeywordFrequency,
    ForbiddenWords,
    LetterFrequency,
    ResponseLanguage,
    NumberParagraphs,
    NumberWords,
    NumberSentences,
    Mixed,
    Postscript,
    NumberPlaceholder,
    NumberBullets,
    Title,
    ChooseFrom,
    HighlightedSection,
    MultipleSections,
    MultipleFormat,
    RepeatPrompt,
    TwoResponses,
    AllUppercase,
    AllLowercase,
    AllcapitalWords,
    EndChecker,
    StartChecker,
    Quotation,
    NoCommas,
    RoleBased,
    ScenarioBased,
    Style,
    Audience,
};

inline constexpr size_t kConstraintCount = 30;

inline constexpr std::array<ConstraintId, kConstraintCount> kAllConstraintIds = {
    ConstraintId::IncludeKeywords,   ConstraintId::KeywordFrequency,
    ConstraintId::ForbiddenWords,    ConstraintId::LetterFrequency,
    ConstraintId::ResponseLanguage,  ConstraintId::NumberParagraphs,
    ConstraintId::NumberWords,       ConstraintId::NumberSentences,
    ConstraintId::Mixed,             ConstraintId::Postscript,
    ConstraintId::NumberPlaceholder, ConstraintId::NumberBullets,
    ConstraintId::Title,             ConstraintId::ChooseFrom,
    ConstraintId::HighlightedSection, ConstraintId::MultipleSections,
    ConstraintId::MultipleFormat,    ConstraintId::RepeatPrompt,
    ConstraintId::TwoResponses,      ConstraintId::AllUppercase,
    ConstraintId::AllLowercase,      ConstraintId::AllcapitalWords,
    ConstraintId::EndChecker,        ConstraintId::StartChecker,
    ConstraintId::Quotation,         ConstraintId::NoCommas,
    ConstraintId::RoleBased,         ConstraintId::ScenarioBased,
    ConstraintId::Style,             ConstraintId::Audience,
};

inline const char* constraint_id_name(ConstraintId id) {
    switch (id) {
        case ConstraintId::IncludeKeywords: return "IncludeKeywords";
        case ConstraintId::KeywordFrequency: return "KeywordFrequency";
        case ConstraintId::ForbiddenWords: return "ForbiddenWords";
        case ConstraintId::LetterFrequency: return "LetterFrequency";
        case ConstraintId::ResponseLanguage: return "ResponseLanguage";
        case ConstraintId::NumberParagraphs: return "NumberParagraphs";
        case ConstraintId::NumberWords: return "NumberWords";
        case ConstraintId::NumberSentences: return "NumberSentences";
        case ConstraintId::Mixed: return "Mixed";
        case ConstraintId::Postscript: return "Postscript";
        case ConstraintId::NumberPlaceholder: return "NumberPlaceholder";
        case ConstraintId::NumberBullets: return "NumberBullets";
        case ConstraintId::Title: return "Title";
        case ConstraintId::ChooseFrom: return "ChooseFrom";
        case ConstraintId::HighlightedSection: return "HighlightedSection";
        case ConstraintId::MultipleSections: return "MultipleSections";
        case ConstraintId::MultipleFormat: return "MultipleFormat";
        case ConstraintId::RepeatPrompt: return "RepeatPrompt";
        case ConstraintId::TwoResponses: return "TwoResponses";
        case ConstraintId::AllUppercase: return "AllUppercase";
        case ConstraintId::AllLowercase: return "AllLowercase";
        case ConstraintId::AllcapitalWords: return "AllcapitalWords";
        case ConstraintId::EndChecker: return "EndChecker";
        case ConstraintId::StartChecker: return "StartChecker";
        case ConstraintId::Quotation: return "Quotation";
        case ConstraintId::NoCommas: return "NoCommas";
        case ConstraintId::RoleBased: return "RoleBased";
        case ConstraintId::ScenarioBased: return "ScenarioBased";
        case ConstraintId::Style: return "Style";
        case ConstraintId::Audience: return "Audience";
    }
    return "Unknown";
}

inline std::optional<ConstraintId> constraint_id_from_name(std::string_view name) {
    for (ConstraintId id : kAllConstraintIds)
        if (name == constraint_id_name(id)) return id;
    return std::nullopt;
}

/// Verifiable by deterministic text analysis; the remaining five rely on the
/// judge alone.
inline bool is_rule_checkable(ConstraintId id) {
    switch (id) {
        case ConstraintId::ResponseLanguage:
        case ConstraintId::RoleBased:
        case ConstraintId::ScenarioBased:
        case ConstraintId::Style:
        case ConstraintId::Audience:
            return false;
        default:
            return true;
    }
}

struct ParamSpec {
    std::string name;
    std::string kind; // int | word | phrase | choice-list | relation | language | format
    long min = 0;
    long max = 0;
    std::vector<std::string> choices;
};

struct ConstraintType {
    ConstraintId id;
    std::string description_template;
    std::vector<ParamSpec> param_schema;
    bool rule_checkable = true;
};

struct ConstraintInstance {
    ConstraintId id;
    nlohmann::json params; // concrete values keyed by param name
    std::string rendered;  // human-readable description with parameters inlined

    std::string name() const { return constraint_id_name(id); }
    bool rule_checkable() const { return is_rule_checkable(id); }
};

// ---------------------------------------------------------------------------
// Curated parameter material
// ---------------------------------------------------------------------------

namespace detail {

inline const std::vector<std::string>& curated_keywords() {
    static const std::vector<std::string> words = {
        "forest",   "river",    "bridge",   "journey",  "garden",  "window",
        "harvest",  "lantern",  "compass",  "anchor",   "horizon", "meadow",
        "summit",   "village",  "library",  "kitchen",  "market",  "festival",
        "workshop", "blueprint", "schedule", "balance",  "pattern", "signal",
        "network",  "memory",   "courage",  "harmony",  "shelter", "voyage",
        "mirror",   "thread",   "puzzle",   "rhythm",   "stone",   "ocean",
        "candle",   "ladder",   "engine",   "canvas",
    };
    return words;
}

inline const std::vector<std::string>& stopwords() {
    static const std::vector<std::string> words = {
        "a",     "an",    "and",   "are",    "about",  "after",  "before", "being",
        "between", "both", "could", "during", "each",  "for",    "from",   "have",
        "needs", "model", "must",  "of",     "or",     "should", "that",   "the",
        "their", "them",  "then",  "there",  "these",  "they",   "this",   "those",
        "to",    "under", "wants", "was",    "were",   "when",   "where",  "which",
        "while", "will",  "with",  "within", "would",  "your",   "into",   "over",
    };
    return words;
}

inline bool is_stopword(const std::string& w) {
    const auto& sw = stopwords();
    return std::find(sw.begin(), sw.end(), w) != sw.end();
}

/// Alphabetic words of length >= 4 from the scenario text, lowercased,
/// deduplicated, in order of first occurrence.
inline std::vector<std::string> content_words(std::string_view text) {
    std::vector<std::string> out;
    for (const std::string& raw : split_words(text)) {
        std::string w;
        for (char c : raw)
            if (std::isalpha(static_cast<unsigned char>(c)))
                w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (w.size() < 4 || is_stopword(w)) continue;
        if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
    }
    return out;
}

inline const std::vector<std::string>& end_phrases() {
    static const std::vector<std::string> v = {
        "Hope this helps.", "That is all.", "Thank you for reading.", "The end.",
        "Any other questions?", "Is there anything else I can help with?",
    };
    return v;
}

inline const std::vector<std::string>& start_phrases() {
    static const std::vector<std::string> v = {
        "Here is my answer:", "To begin with:", "Let me explain.",
        "My answer is as follows:", "Certainly:",
    };
    return v;
}

inline const std::vector<std::string>& roles() {
    static const std::vector<std::string> v = {
        "a seasoned travel guide", "a patient school teacher", "a meticulous librarian",
        "an enthusiastic sports commentator", "a calm emergency dispatcher",
        "a veteran ship captain", "a friendly museum docent",
    };
    return v;
}

inline const std::vector<std::string>& situations() {
    static const std::vector<std::string> v = {
        "the reader is preparing for an important deadline tomorrow",
        "the reader is presenting to a skeptical committee",
        "the reader has only five minutes to act",
        "the reader is new to the topic and easily overwhelmed",
        "the reader must relay the answer over a noisy phone line",
    };
    return v;
}

inline const std::vector<std::string>& styles() {
    static const std::vector<std::string> v = {
        "formal",  "casual",      "poetic",        "humorous",
        "academic", "persuasive", "journalistic",  "conversational",
    };
    return v;
}

inline const std::vector<std::string>& audiences() {
    static const std::vector<std::string> v = {
        "young children",  "complete beginners", "domain experts",
        "senior executives", "teenagers",        "elderly readers",
    };
    return v;
}

inline const std::vector<std::string>& option_groups() {
    // groups are encoded as '|'-separated alternatives
    static const std::vector<std::string> v = {
        "yes|no|maybe",
        "agree|disagree",
        "true|false",
        "My answer is yes.|My answer is no.|My answer is maybe.",
    };
    return v;
}

inline const std::vector<std::string>& common_letters() {
    static const std::vector<std::string> v = {"a", "e", "i", "o", "n", "r",
                                               "s", "t", "l", "c", "d", "m"};
    return v;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Pool definition
// ---------------------------------------------------------------------------

inline constexpr const char* kRelationAtLeast = "at least";
inline constexpr const char* kRelationAround = "around";
inline constexpr const char* kRelationAtMost = "at most";

inline const std::vector<std::string>& relation_choices() {
    static const std::vector<std::string> v = {kRelationAtLeast, kRelationAround,
                                               kRelationAtMost};
    return v;
}

inline const std::vector<std::string>& format_choices() {
    static const std::vector<std::string> v = {"JSON", "Table", "HTML",
                                               "XML",  "LaTeX", "Markdown"};
    return v;
}

inline const std::vector<std::string>& language_choices() {
    static const std::vector<std::string> v = {"English", "Spanish", "French", "German"};
    return v;
}

class ConstraintPool {
public:
    ConstraintPool() : types_(builtin_types()) {}

    const std::vector<ConstraintType>& types() const { return types_; }

    const ConstraintType& type(ConstraintId id) const {
        for (const auto& t : types_)
            if (t.id == id) return t;
        throw Error(ErrorCode::Precondition, "constraint id not in pool");
    }

    size_t size() const { return types_.size(); }

    nlohmann::json dump() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& t : types_) {
            nlohmann::json schema = nlohmann::json::array();
            for (const auto& p : t.param_schema) {
                nlohmann::json ps{{"name", p.name}, {"kind", p.kind}};
                if (p.kind == "int") {
                    ps["min"] = p.min;
                    ps["max"] = p.max;
                } else if (p.min != 0 || p.max != 0) {
                    ps["min"] = p.min;
                    ps["max"] = p.max;
                }
                if (!p.choices.empty()) ps["choices"] = p.choices;
                schema.push_back(std::move(ps));
            }
            arr.push_back({{"id", constraint_id_name(t.id)},
                           {"description_template", t.description_template},
                           {"param_schema", std::move(schema)},
                           {"rule_checkable", t.rule_checkable}});
        }
        return arr;
    }

    void dump_to_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorCode::Io, "cannot write pool file: " + path);
        out << dump().dump(2) << "\n";
    }

    /// Replaces the pool from an audited JSON document. All 30 ids must be
    /// present; templates, bounds, and choice lists may differ from the
    /// builtins, the check semantics per id may not.
    static ConstraintPool load(const nlohmann::json& doc) {
        if (!doc.is_array())
            throw Error(ErrorCode::Config, "constraint pool document must be an array");
        std::vector<ConstraintType> types;
        std::set<ConstraintId> seen;
        for (const auto& entry : doc) {
            const std::string name = entry.at("id").get<std::string>();
            const auto id = constraint_id_from_name(name);
            if (!id) throw Error(ErrorCode::Config, "unknown constraint id: " + name);
            if (!seen.insert(*id).second)
                throw Error(ErrorCode::Config, "duplicate constraint id: " + name);
            ConstraintType t;
            t.id = *id;
            t.description_template = entry.at("description_template").get<std::string>();
            t.rule_checkable = entry.at("rule_checkable").get<bool>();
            if (t.rule_checkable != is_rule_checkable(*id))
                throw Error(ErrorCode::Config,
                            "rule_checkable flag for " + name + " contradicts its semantics");
            for (const auto& ps : entry.at("param_schema")) {
                ParamSpec p;
                p.name = ps.at("name").get<std::string>();
                p.kind = ps.at("kind").get<std::string>();
                p.min = ps.value("min", 0L);
                p.max = ps.value("max", 0L);
                if (ps.contains("choices"))
                    p.choices = ps["choices"].get<std::vector<std::string>>();
                t.param_schema.push_back(std::move(p));
            }
            types.push_back(std::move(t));
        }
        if (types.size() != kConstraintCount)
            throw Error(ErrorCode::Config,
                        "constraint pool must define exactly 30 types, got " +
                            std::to_string(types.size()));
        ConstraintPool pool;
        pool.types_ = std::move(types);
        return pool;
    }

    static ConstraintPool load_from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorCode::Io, "cannot open pool file: " + path);
        nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded())
            throw Error(ErrorCode::Config, "pool file is not valid JSON: " + path);
        return load(doc);
    }

private:
    static std::vector<ConstraintType> builtin_types();

    std::vector<ConstraintType> types_;
};

inline std::vector<ConstraintType> ConstraintPool::builtin_types() {
    using detail::common_letters;
    using detail::option_groups;
    auto relation = [] {
        return ParamSpec{"relation", "relation", 0, 0, relation_choices()};
    };
    auto count = [](long lo, long hi) { return ParamSpec{"count", "int", lo, hi, {}}; };

    std::vector<ConstraintType> types;
    types.push_back({ConstraintId::IncludeKeywords,
                     "Include the keyword(s) {keywords} in the response.",
                     {ParamSpec{"keywords", "word", 1, 3, {}}},
                     true});
    types.push_back({ConstraintId::KeywordFrequency,
                     "The word \"{keyword}\" should appear {relation} {count} times in the response.",
                     {ParamSpec{"keyword", "word", 0, 0, {}}, relation(), count(1, 10)},
                     true});
    types.push_back({ConstraintId::ForbiddenWords,
                     "Do not include the word(s) {words} in the response.",
                     {ParamSpec{"words", "word", 1, 3, {}}},
                     true});
    types.push_back({ConstraintId::LetterFrequency,
                     "The letter '{letter}' should appear {relation} {count} times in the response.",
                     {ParamSpec{"letter", "word", 0, 0, common_letters()}, relation(),
                      count(1, 10)},
                     true});
    types.push_back({ConstraintId::ResponseLanguage,
                     "Write the entire response in {language}; no other language is allowed.",
                     {ParamSpec{"language", "language", 0, 0, language_choices()}},
                     false});
    types.push_back({ConstraintId::NumberParagraphs,
                     "Organize the response into exactly {count} paragraphs, separated by the divider ***.",
                     {count(2, 6)},
                     true});
    types.push_back({ConstraintId::NumberWords,
                     "Respond with {relation} {count} words.",
                     {relation(), count(50, 800)},
                     true});
    types.push_back({ConstraintId::NumberSentences,
                     "Your response should contain {relation} {count} sentences.",
                     {relation(), count(3, 30)},
                     true});
    types.push_back({ConstraintId::Mixed,
                     "Write exactly {count} paragraphs separated by the divider ***. Paragraph {index} must start with the word \"{first_word}\".",
                     {count(2, 6), ParamSpec{"index", "int", 1, 6, {}},
                      ParamSpec{"first_word", "word", 0, 0, {}}},
                     true});
    types.push_back({ConstraintId::Postscript,
                     "At the end of the response, add a postscript starting with {marker}.",
                     {ParamSpec{"marker", "phrase", 0, 0, {"P.S.", "P.P.S"}}},
                     true});
    types.push_back({ConstraintId::NumberPlaceholder,
                     "The response must contain at least {count} placeholder(s) represented by square brackets, such as [name].",
                     {count(1, 10)},
                     true});
    types.push_back({ConstraintId::NumberBullets,
                     "The response must contain exactly {count} bullet point(s) in markdown format, each on its own line starting with \"- \" or \"* \".",
                     {count(1, 10)},
                     true});
    types.push_back({ConstraintId::Title,
                     "Give the response a title wrapped in double angle brackets, such as <<my answer>>.",
                     {},
                     true});
    types.push_back({ConstraintId::ChooseFrom,
                     "Answer with one of: {options}.",
                     {ParamSpec{"options", "choice-list", 0, 0, option_groups()}},
                     true});
    types.push_back({ConstraintId::HighlightedSection,
                     "Highlight at least {count} section(s) of the response with markdown asterisks, such as *highlighted section*.",
                     {count(1, 10)},
                     true});
    types.push_back({ConstraintId::MultipleSections,
                     "Split the response into exactly {count} sections; begin each section with \"SECTION\" followed by its number, such as SECTION 1.",
                     {count(2, 6)},
                     true});
    types.push_back({ConstraintId::MultipleFormat,
                     "Format the entire response as {format}.",
                     {ParamSpec{"format", "format", 0, 0, format_choices()}},
                     true});
    types.push_back({ConstraintId::RepeatPrompt,
                     "First repeat the request word for word without change, then give your answer. Do not say any words or characters before repeating the request.",
                     {ParamSpec{"prompt_text", "phrase", 0, 0, {}}},
                     true});
    types.push_back({ConstraintId::TwoResponses,
                     "Give two different responses. The responses, and only the responses, should be separated by six asterisk symbols: {separator}.",
                     {ParamSpec{"separator", "phrase", 0, 0, {"******"}}},
                     true});
    types.push_back({ConstraintId::AllUppercase,
                     "The entire response must be written in English, in all capital letters only.",
                     {},
                     true});
    types.push_back({ConstraintId::AllLowercase,
                     "The entire response must be written in lowercase letters only; no capital letters are allowed.",
                     {},
                     true});
    types.push_back({ConstraintId::AllcapitalWords,
                     "Words written in all capital letters should appear {relation} {count} times in the response.",
                     {relation(), count(1, 10)},
                     true});
    types.push_back({ConstraintId::EndChecker,
                     "Finish the response with this exact phrase: {phrase} No other words should follow that phrase.",
                     {ParamSpec{"phrase", "phrase", 0, 0, detail::end_phrases()}},
                     true});
    types.push_back({ConstraintId::StartChecker,
                     "Begin the response with this exact phrase: {phrase}",
                     {ParamSpec{"phrase", "phrase", 0, 0, detail::start_phrases()}},
                     true});
    types.push_back({ConstraintId::Quotation,
                     "Wrap the entire response in {mark_style} quotation marks.",
                     {ParamSpec{"mark_style", "phrase", 0, 0, {"double", "single"}}},
                     true});
    types.push_back({ConstraintId::NoCommas,
                     "Refrain from using any commas in the response.",
                     {},
                     true});
    types.push_back({ConstraintId::RoleBased,
                     "Write the response as if you were {role}, staying in character throughout.",
                     {ParamSpec{"role", "phrase", 0, 0, detail::roles()}},
                     false});
    types.push_back({ConstraintId::ScenarioBased,
                     "Tailor the response to this situation: {situation}.",
                     {ParamSpec{"situation", "phrase", 0, 0, detail::situations()}},
                     false});
    types.push_back({ConstraintId::Style,
                     "Write the response in a {style} style.",
                     {ParamSpec{"style", "phrase", 0, 0, detail::styles()}},
                     false});
    types.push_back({ConstraintId::Audience,
                     "Tailor the response to an audience of {audience}.",
                     {ParamSpec{"audience", "phrase", 0, 0, detail::audiences()}},
                     false});
    return types;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Probability of attaching exactly k constraints, k in 1..5.
struct SamplingDistribution {
    std::array<double, 5> p = {0.2, 0.3, 0.3, 0.1, 0.1};
};

inline void validate_distribution(const SamplingDistribution& d) {
    double sum = 0.0;
    for (double x : d.p) {
        if (x < 0.0)
            throw Error(ErrorCode::Config, "distribution components must be nonnegative");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error(ErrorCode::Config,
                    "distribution sums to " + std::to_string(sum) + ", expected 1");
}

inline int sample_constraint_count(const SamplingDistribution& dist, SeededRng& rng) {
    validate_distribution(dist);
    const double u = rng.next_double();
    double cum = 0.0;
    for (int k = 0; k < 5; ++k) {
        cum += dist.p[static_cast<size_t>(k)];
        if (u < cum) return k + 1;
    }
    return 5;
}

/// Pairs that never co-occur regardless of parameters. Subtler conflicts are
/// left to the LLM consistency judgement.
inline bool statically_incompatible(ConstraintId a, ConstraintId b) {
    auto pair_is = [&](ConstraintId x, ConstraintId y) {
        return (a == x && b == y) || (a == y && b == x);
    };
    return pair_is(ConstraintId::AllUppercase, ConstraintId::AllLowercase) ||
           pair_is(ConstraintId::TwoResponses, ConstraintId::RepeatPrompt);
}

/// k distinct types, uniform without replacement over the pool minus types
/// statically incompatible with the ones already drawn.
inline std::vector<ConstraintId> sample_constraints(const ConstraintPool& pool, int k,
                                                    SeededRng& rng) {
    if (k < 1 || k > 5 || static_cast<size_t>(k) > pool.size())
        throw Error(ErrorCode::Precondition, "constraint count k must satisfy 1 <= k <= 5 <= |pool|");
    std::vector<ConstraintId> drawn;
    for (int round = 0; round < k; ++round) {
        std::vector<ConstraintId> candidates;
        for (const auto& t : pool.types()) {
            bool blocked = false;
            for (ConstraintId d : drawn)
                if (d == t.id || statically_incompatible(d, t.id)) blocked = true;
            if (!blocked) candidates.push_back(t.id);
        }
        if (candidates.empty())
            throw Error(ErrorCode::ExhaustedPool, "no compatible constraint type remains");
        drawn.push_back(candidates[rng.index(candidates.size())]);
    }
    return drawn;
}

// ---------------------------------------------------------------------------
// Instantiation
// ---------------------------------------------------------------------------

namespace detail {

inline std::string quote_join(const std::vector<std::string>& items) {
    std::string out;
    for (size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += "\"" + items[i] + "\"";
    }
    return out;
}

inline std::string plain_join(const std::vector<std::string>& items) {
    std::string out;
    for (size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += items[i];
    }
    return out;
}

/// Fills {slots} in a description template from the concrete params object.
inline std::string fill_description(const std::string& tpl, const nlohmann::json& params) {
    std::string out;
    size_t i = 0;
    while (i < tpl.size()) {
        if (tpl[i] != '{') {
            out.push_back(tpl[i]);
            ++i;
            continue;
        }
        const size_t close = tpl.find('}', i + 1);
        if (close == std::string::npos) {
            out.append(tpl, i, std::string::npos);
            break;
        }
        const std::string key = tpl.substr(i + 1, close - i - 1);
        if (!params.contains(key))
            throw Error(ErrorCode::Precondition, "unfilled constraint parameter: " + key);
        const auto& v = params[key];
        if (v.is_string()) {
            out += v.get<std::string>();
        } else if (v.is_number_integer()) {
            out += std::to_string(v.get<long>());
        } else if (v.is_array()) {
            const auto items = v.get<std::vector<std::string>>();
            out += (key == "options") ? plain_join(items) : quote_join(items);
        } else {
            out += v.dump();
        }
        i = close + 1;
    }
    return out;
}

} // namespace detail

/// Renders a description from explicit parameter values.
inline std::string render_description(const ConstraintType& type, const nlohmann::json& params) {
    return detail::fill_description(type.description_template, params);
}

/// Cross-constraint coordination applied when several constraints attach to
/// one instruction: formats ruled out by siblings, and phrase casing aligned
/// with a casing constraint.
struct InstantiationContext {
    std::set<std::string> excluded_formats;
    bool force_upper = false;
    bool force_lower = false;

    std::string cased(std::string s) const {
        if (force_upper) return to_upper(s);
        if (force_lower) return to_lower(s);
        return s;
    }
};

class Instantiator {
public:
    explicit Instantiator(const ConstraintPool& pool) : pool_(pool) {}

    /// Draws concrete parameters for one constraint type. Deterministic given
    /// (type, rng state, scenario text).
    ConstraintInstance instantiate(ConstraintId id, SeededRng& rng,
                                   const std::string& scenario_text,
                                   const InstantiationContext& ctx = {}) const {
        const ConstraintType& type = pool_.type(id);
        nlohmann::json params = nlohmann::json::object();
        for (const auto& spec : type.param_schema)
            fill_param(type, spec, params, rng, scenario_text, ctx);
        ConstraintInstance inst;
        inst.id = id;
        inst.params = std::move(params);
        inst.rendered = detail::fill_description(type.description_template, inst.params);
        return inst;
    }

    /// Instantiates a sampled set in draw order with coordination between
    /// members (e.g. no JSON format alongside a no-commas rule).
    std::vector<ConstraintInstance> instantiate_set(const std::vector<ConstraintId>& ids,
                                                    SeededRng& rng,
                                                    const std::string& scenario_text) const {
        InstantiationContext ctx;
        for (ConstraintId id : ids) {
            if (id == ConstraintId::NoCommas) ctx.excluded_formats.insert("JSON");
            if (id == ConstraintId::Quotation) ctx.excluded_formats.insert("Table");
            if (id == ConstraintId::AllUppercase) ctx.force_upper = true;
            if (id == ConstraintId::AllLowercase) ctx.force_lower = true;
        }
        std::vector<ConstraintInstance> out;
        out.reserve(ids.size());
        for (ConstraintId id : ids) out.push_back(instantiate(id, rng, scenario_text, ctx));
        return out;
    }

private:
    void fill_param(const ConstraintType& type, const ParamSpec& spec, nlohmann::json& params,
                    SeededRng& rng, const std::string& scenario_text,
                    const InstantiationContext& ctx) const {
        const ConstraintId id = type.id;
        if (spec.kind == "int") {
            long lo = spec.min, hi = spec.max;
            if (id == ConstraintId::Mixed && spec.name == "index") {
                hi = params.value("count", hi); // index within the paragraph count
                lo = 1;
            }
            params[spec.name] = rng.uniform_int(lo, hi);
            return;
        }
        if (spec.kind == "relation") {
            params[spec.name] = rng.pick(spec.choices.empty() ? relation_choices() : spec.choices);
            return;
        }
        if (spec.kind == "language") {
            params[spec.name] = rng.pick(spec.choices.empty() ? language_choices() : spec.choices);
            return;
        }
        if (spec.kind == "format") {
            std::vector<std::string> allowed;
            for (const auto& f : (spec.choices.empty() ? format_choices() : spec.choices))
                if (!ctx.excluded_formats.count(f)) allowed.push_back(f);
            if (allowed.empty()) allowed = {"Markdown"};
            params[spec.name] = rng.pick(allowed);
            return;
        }
        if (spec.kind == "choice-list") {
            const std::string group = rng.pick(spec.choices.empty() ? detail::option_groups()
                                                                    : spec.choices);
            std::vector<std::string> options;
            size_t start = 0;
            while (start <= group.size()) {
                const size_t bar = group.find('|', start);
                if (bar == std::string::npos) {
                    options.push_back(ctx.cased(group.substr(start)));
                    break;
                }
                options.push_back(ctx.cased(group.substr(start, bar - start)));
                start = bar + 1;
            }
            params[spec.name] = options;
            return;
        }
        if (spec.kind == "word") {
            if (!spec.choices.empty()) {
                params[spec.name] = rng.pick(spec.choices);
                return;
            }
            if (spec.min > 0) {
                // a list of min..max distinct words
                const long n = rng.uniform_int(spec.min, spec.max);
                std::vector<std::string> picked;
                for (long i = 0; i < n; ++i) {
                    std::string w;
                    do {
                        w = pick_word(rng, scenario_text, /*allow_scenario=*/
                                      id != ConstraintId::ForbiddenWords);
                    } while (std::find(picked.begin(), picked.end(), w) != picked.end());
                    picked.push_back(ctx.cased(w));
                }
                params[spec.name] = picked;
                return;
            }
            std::string w = pick_word(rng, scenario_text,
                                      id != ConstraintId::ForbiddenWords);
            if (id == ConstraintId::Mixed && spec.name == "first_word") {
                std::string capped = ctx.cased(w);
                if (!ctx.force_lower && !capped.empty())
                    capped[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(capped[0])));
                params[spec.name] = capped;
            } else {
                params[spec.name] = ctx.cased(w);
            }
            return;
        }
        if (spec.kind == "phrase") {
            if (id == ConstraintId::RepeatPrompt) {
                params[spec.name] = ""; // bound to the final instruction text later
                return;
            }
            std::string phrase = spec.choices.empty() ? "" : rng.pick(spec.choices);
            if (id == ConstraintId::EndChecker || id == ConstraintId::StartChecker)
                phrase = ctx.cased(phrase);
            params[spec.name] = phrase;
            return;
        }
        throw Error(ErrorCode::Config, "unknown param kind in schema: " + spec.kind);
    }

    std::string pick_word(SeededRng& rng, const std::string& scenario_text,
                          bool allow_scenario) const {
        const auto& curated = detail::curated_keywords();
        if (allow_scenario) {
            const auto scen = detail::content_words(scenario_text);
            const size_t total = curated.size() + scen.size();
            const size_t i = rng.index(total);
            return i < curated.size() ? curated[i] : scen[i - curated.size()];
        }
        return rng.pick(curated);
    }

    const ConstraintPool& pool_;
};

/// Numbered constraint lines in draw order, no trailing newline.
inline std::string render_constraint_block(const std::vector<ConstraintInstance>& instances) {
    if (instances.empty() || instances.size() > 5)
        throw Error(ErrorCode::Precondition, "constraint block takes 1-5 instances");
    std::string out;
    for (size_t i = 0; i < instances.size(); ++i) {
        if (i) out += "\n";
        out += std::to_string(i + 1) + ". " + instances[i].rendered;
    }
    return out;
}

} // namespace decif::constraints
