#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "decif/constraints.hpp"
#include "decif/prompting.hpp"
#include "decif/text_metrics.hpp"
#include "decif/util.hpp"

namespace decif::mockmodel {

// A deterministic stand-in model: every reply is a pure function of
// (template kind, prompt text), so full offline runs reproduce byte-for-byte
// at any concurrency level. Responses honor the most common constraint
// phrasings on a best-effort basis; combinations it cannot satisfy simply get
// filtered downstream, which is exactly the behavior the verification layer
// exists to exercise.

namespace detail {

inline std::string between(std::string_view text, std::string_view after,
                           std::string_view before) {
    const size_t a = text.find(after);
    if (a == std::string_view::npos) return {};
    const size_t start = a + after.size();
    const size_t b = before.empty() ? text.size() : text.find(before, start);
    if (b == std::string_view::npos) return trim(text.substr(start));
    return trim(text.substr(start, b - start));
}

inline long first_number_after(std::string_view text, std::string_view marker) {
    size_t pos = text.find(marker);
    if (pos == std::string_view::npos) return -1;
    pos += marker.size();
    while (pos < text.size() && !std::isdigit(static_cast<unsigned char>(text[pos]))) {
        if (text[pos] == '\n') return -1;
        ++pos;
    }
    long value = 0;
    bool any = false;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
        value = value * 10 + (text[pos] - '0');
        any = true;
        ++pos;
    }
    return any ? value : -1;
}

inline const std::vector<std::string>& domain_names() {
    static const std::vector<std::string> v = {
        "Education",       "Healthcare",      "Finance",        "Technology",
        "Travel",          "Sports",          "Cooking",        "Gardening",
        "Music",           "Photography",     "Real Estate",    "Law",
        "Marketing",       "Agriculture",     "Astronomy",      "Fitness",
        "Parenting",       "Fashion",         "Automotive",     "Insurance",
        "Journalism",      "Architecture",    "Psychology",     "Logistics",
        "Retail",          "Energy",          "Tourism",        "Banking",
        "Construction",    "Telecommunications", "Publishing",  "Gaming",
        "Meteorology",     "Veterinary Care", "Event Planning", "Interior Design",
        "Public Transit",  "Recycling",       "Language Learning", "Career Coaching",
        "Home Repair",     "Nutrition",       "Cybersecurity",  "Film Production",
        "Volunteering",    "Urban Planning",  "Genealogy",      "Robotics",
    };
    return v;
}

inline const std::vector<std::string>& request_verbs() {
    static const std::vector<std::string> v = {
        "review", "draft",  "plan",   "compare", "explain",
        "outline", "summarize", "improve", "organize", "evaluate",
    };
    return v;
}

inline const std::vector<std::string>& request_nouns() {
    static const std::vector<std::string> v = {
        "checklist", "report", "schedule", "budget", "guide",
        "proposal",  "routine", "summary", "roadmap", "briefing",
    };
    return v;
}

inline const std::vector<std::string>& personas() {
    static const std::vector<std::string> v = {
        "A shop owner", "A new manager", "A retired teacher", "A busy parent",
        "A city official", "A student volunteer", "A clinic coordinator",
        "A freelance writer",
    };
    return v;
}

inline const std::vector<std::string>& settings() {
    static const std::vector<std::string> v = {
        "before the weekly meeting", "for a community workshop",
        "ahead of the seasonal rush", "during a training session",
        "for an upcoming inspection", "before the grant deadline",
        "for new team members",       "at the neighborhood fair",
    };
    return v;
}

// filler vocabulary kept disjoint from the constraint keyword pool
inline const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> v = {
        "the",  "plan", "covers", "each", "step", "in",  "order", "and",
        "notes", "what", "matters", "most", "for", "this", "task",  "today",
    };
    return v;
}

inline std::string filler_sentence(std::uint64_t salt, size_t words) {
    const auto& vocab = filler_words();
    std::string out;
    for (size_t i = 0; i < words; ++i) {
        std::string w = vocab[(salt + i * 7) % vocab.size()];
        if (i == 0 && !w.empty()) w[0] = static_cast<char>(std::toupper(w[0]));
        out += (i ? " " : "") + w;
    }
    out += ".";
    return out;
}

inline std::string pad_to_words(std::string text, long target, std::uint64_t salt) {
    long have = text_metrics::count_words(text);
    while (have < target) {
        const size_t chunk = static_cast<size_t>(std::min<long>(target - have, 12));
        text += " " + filler_sentence(salt + static_cast<std::uint64_t>(have), chunk);
        have = text_metrics::count_words(text);
    }
    return text;
}

inline std::string trim_to_words(const std::string& text, long target) {
    const auto words = split_words(text);
    if (static_cast<long>(words.size()) <= target) return text;
    std::string out;
    for (long i = 0; i < target; ++i) out += (i ? " " : "") + words[static_cast<size_t>(i)];
    return out;
}

inline std::vector<std::string> quoted_strings(std::string_view text) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        const size_t open = text.find('"', i);
        if (open == std::string_view::npos) break;
        const size_t close = text.find('"', open + 1);
        if (close == std::string_view::npos) break;
        out.emplace_back(text.substr(open + 1, close - open - 1));
        i = close + 1;
    }
    return out;
}

// ---- per-template synthesis ----

inline std::string meta_domains(const std::string& prompt) {
    long n = first_number_after(prompt, "Generate exactly");
    if (n < 1) n = 10;
    const auto& names = domain_names();
    const std::uint64_t offset = fnv1a64(prompt) % names.size();
    std::string out;
    for (long i = 0; i < n; ++i) {
        out += "- " + names[(offset + static_cast<std::uint64_t>(i)) % names.size()] + "\n";
    }
    return out;
}

inline std::string meta_requests(const std::string& prompt) {
    long n = first_number_after(prompt, "Generate nearly");
    if (n < 1) n = 8;
    n = std::min<long>(n, 10);
    std::string domain = between(prompt, "specifically for the ", " domain.");
    if (domain.empty()) domain = "general";
    const std::string dword = to_lower(split_words(domain).front());
    const std::uint64_t salt = fnv1a64(domain);
    std::string out;
    for (long i = 0; i < n; ++i) {
        const auto& verb = request_verbs()[(salt + static_cast<std::uint64_t>(i)) %
                                           request_verbs().size()];
        const auto& noun = request_nouns()[(salt / 7 + static_cast<std::uint64_t>(i)) %
                                           request_nouns().size()];
        out += "- " + verb + " " + dword + " " + noun + "\n";
    }
    return out;
}

inline std::string meta_scenarios(const std::string& prompt) {
    long n = first_number_after(prompt, ", generate ");
    if (n < 1) n = 6;
    n = std::min<long>(n, 8);
    std::string request = between(prompt, "Now generate scenarios for:", "");
    request = between(request + "\n", "Meta request:", "\n");
    if (request.empty()) request = "complete the task";
    const std::uint64_t salt = fnv1a64(request);
    std::string out;
    for (long i = 0; i < n; ++i) {
        const auto& who = personas()[(salt + static_cast<std::uint64_t>(i)) % personas().size()];
        const auto& where =
            settings()[(salt / 5 + static_cast<std::uint64_t>(i)) % settings().size()];
        out += "- " + who + " needs to " + request + " " + where + "\n";
    }
    return out;
}

inline std::string instruction_gen(const std::string& prompt) {
    std::string scenario = between(prompt, "ask you to do:\n\n", "\n\nAn example");
    if (scenario.empty()) scenario = "Complete a small planning task";
    std::string block = between(prompt, "verifiable constraint(s):\n\n", "\n\n3.");
    std::string instruction =
        "Help with this situation: " + scenario + ". Provide a practical answer.";
    if (!block.empty()) {
        for (const std::string& line : split_lines(block)) {
            std::string clause = trim(line);
            // strip the "1. " numbering
            size_t d = 0;
            while (d < clause.size() && std::isdigit(static_cast<unsigned char>(clause[d]))) ++d;
            if (d > 0 && d < clause.size() && clause[d] == '.')
                clause = trim(std::string_view(clause).substr(d + 1));
            if (!clause.empty()) instruction += " " + clause;
        }
    }
    return "User instruction: " + instruction;
}

inline std::string consistency_judge(const std::string& prompt) {
    std::string instruction =
        between(prompt, "analyze the following instruction:\n\n", "\n\nFollow these steps");
    if (instruction.empty()) instruction = "unknown";
    return "- Original: " + instruction + "\n- Conflict: False\n- Refined: " + instruction;
}

/// Best-effort constraint satisfier for the response prompt.
inline std::string if_response(const std::string& prompt) {
    const std::string instruction = between(prompt, "[Query]", "");
    const std::uint64_t salt = fnv1a64(instruction);

    // dominant formats first
    if (instruction.find("Answer with one of:") != std::string::npos) {
        std::string opts = between(instruction, "Answer with one of:", ".");
        const size_t comma = opts.find(',');
        std::string choice = trim(comma == std::string::npos ? opts : opts.substr(0, comma));
        return choice.empty() ? "yes" : choice;
    }
    if (instruction.find("Format the entire response as JSON") != std::string::npos)
        return "{\"answer\": \"" + filler_sentence(salt, 6) + "\", \"confidence\": 3}";
    if (instruction.find("Format the entire response as Table") != std::string::npos)
        return "| Item | Value |\n| --- | --- |\n| plan | ready |";
    if (instruction.find("Format the entire response as HTML") != std::string::npos)
        return "<p>" + filler_sentence(salt, 8) + "</p>";
    if (instruction.find("Format the entire response as XML") != std::string::npos)
        return "<answer>" + filler_sentence(salt, 8) + "</answer>";
    if (instruction.find("Format the entire response as LaTeX") != std::string::npos)
        return "\\section{Answer} " + filler_sentence(salt, 8);

    std::string body;

    if (instruction.find("repeat the request word for word") != std::string::npos)
        body += instruction + "\n\n";

    const size_t start_pos = instruction.find("Begin the response with this exact phrase: ");
    if (start_pos != std::string::npos) {
        // the phrase runs to the next constraint clause; recover it by matching
        // the curated phrase list (in any casing) against the tail
        const std::string tail =
            instruction.substr(start_pos + std::string("Begin the response with this "
                                                       "exact phrase: ")
                                               .size());
        for (const auto& p : constraints::detail::start_phrases()) {
            for (const std::string& variant : {p, to_upper(p), to_lower(p)}) {
                if (starts_with(tail, variant)) {
                    body += variant + " ";
                    goto start_phrase_done;
                }
            }
        }
    start_phrase_done:;
    }

    // paragraph-structured answers
    const long para_exact = first_number_after(instruction, "Organize the response into exactly");
    const long para_mixed = first_number_after(instruction, "Write exactly");
    const long sections = first_number_after(instruction, "Split the response into exactly");
    if (para_exact > 0 || para_mixed > 0) {
        const long n = para_exact > 0 ? para_exact : para_mixed;
        std::string first_word;
        long index = -1;
        if (instruction.find("must start with the word") != std::string::npos) {
            index = first_number_after(instruction, "Paragraph");
            first_word = between(instruction, "must start with the word \"", "\"");
        }
        for (long i = 1; i <= n; ++i) {
            if (i > 1) body += "\n***\n";
            if (i == index && !first_word.empty())
                body += first_word + " " + filler_sentence(salt + static_cast<std::uint64_t>(i), 8);
            else
                body += filler_sentence(salt + static_cast<std::uint64_t>(i), 9);
        }
    } else if (sections > 0) {
        for (long i = 1; i <= sections; ++i) {
            if (i > 1) body += "\n";
            body += "SECTION " + std::to_string(i) + "\n" +
                    filler_sentence(salt + static_cast<std::uint64_t>(i), 8);
        }
    } else {
        const long bullets = first_number_after(instruction, "bullet point");
        if (instruction.find("bullet point") != std::string::npos && bullets > 0) {
            for (long i = 0; i < bullets; ++i)
                body += "- " + filler_sentence(salt + static_cast<std::uint64_t>(i), 5) + "\n";
        } else {
            body += filler_sentence(salt, 9) + " " + filler_sentence(salt + 3, 8);
        }
    }

    // keyword obligations
    if (instruction.find("Include the keyword(s)") != std::string::npos) {
        const std::string tail = instruction.substr(instruction.find("Include the keyword(s)"));
        const size_t stop = tail.find(" in the response.");
        for (const auto& kw :
             quoted_strings(stop == std::string::npos ? tail : tail.substr(0, stop)))
            body += " The notes mention " + kw + " as well.";
    }
    if (instruction.find("should appear") != std::string::npos) {
        const std::string freq_word = between(instruction, "The word \"", "\"");
        const long times =
            first_number_after(instruction, "\" should appear at least");
        if (times > 0 && !freq_word.empty()) {
            body += "\n";
            for (long i = 0; i < times; ++i) body += " " + freq_word;
        }
        const long letters = first_number_after(instruction, "' should appear at least");
        const size_t lp = instruction.find("The letter '");
        if (letters > 0 && lp != std::string::npos && lp + 12 < instruction.size()) {
            body += " ";
            for (long i = 0; i < letters; ++i) body += instruction[lp + 12];
        }
    }
    const long caps = first_number_after(instruction, "capital letters should appear at least");
    if (caps > 0) {
        body += "\n";
        for (long i = 0; i < caps; ++i) body += " NOTE";
    }

    const long placeholders = first_number_after(instruction, "must contain at least");
    if (instruction.find("square brackets") != std::string::npos && placeholders > 0) {
        body += "\n";
        for (long i = 0; i < placeholders; ++i)
            body += " [detail-" + std::to_string(i + 1) + "]";
    }
    const long highlights = first_number_after(instruction, "Highlight at least");
    if (highlights > 0) {
        body += "\n";
        for (long i = 0; i < highlights; ++i)
            body += " *key point " + std::to_string(i + 1) + "*";
    }
    if (instruction.find("title wrapped in double angle brackets") != std::string::npos)
        body += "\n<<Answer Notes>>";

    if (instruction.find("six asterisk symbols") != std::string::npos)
        body = body + "\n******\n" + filler_sentence(salt + 11, 9);

    // length shaping
    const long at_least_words = first_number_after(instruction, "Respond with at least");
    const long around_words = first_number_after(instruction, "Respond with around");
    const long at_most_words = first_number_after(instruction, "Respond with at most");
    if (at_least_words > 0) body = pad_to_words(body, at_least_words, salt);
    if (around_words > 0) {
        body = pad_to_words(body, around_words, salt);
        body = trim_to_words(body, around_words);
    }
    if (at_most_words > 0) body = trim_to_words(body, std::min<long>(at_most_words, 60));

    const long at_least_sent = first_number_after(instruction, "contain at least");
    if (instruction.find("sentences") != std::string::npos && at_least_sent > 0) {
        while (text_metrics::count_sentences(body) < at_least_sent)
            body += " " + filler_sentence(salt + static_cast<std::uint64_t>(
                                                     text_metrics::count_sentences(body)),
                                          6);
    }

    if (instruction.find("postscript starting with P.P.S") != std::string::npos)
        body += "\nP.P.S remember to review the checklist.";
    else if (instruction.find("postscript starting with P.S.") != std::string::npos)
        body += "\nP.S. remember to review the checklist.";

    const std::string end_phrase =
        between(instruction, "Finish the response with this exact phrase: ", " No other words");
    if (!end_phrase.empty()) body += "\n" + end_phrase;

    // character-level shaping last
    if (instruction.find("Refrain from using any commas") != std::string::npos) {
        std::string stripped;
        for (char ch : body)
            if (ch != ',') stripped.push_back(ch);
        body = stripped;
    }
    if (instruction.find("all capital letters only") != std::string::npos) body = to_upper(body);
    if (instruction.find("lowercase letters only") != std::string::npos) body = to_lower(body);
    if (instruction.find("Wrap the entire response in double quotation marks") !=
        std::string::npos)
        body = "\"" + body + "\"";
    if (instruction.find("Wrap the entire response in single quotation marks") !=
        std::string::npos)
        body = "'" + body + "'";
    return body;
}

inline std::string general_response(const std::string& prompt) {
    const std::string instruction = between(prompt, "[Query]", "");
    const std::uint64_t salt = fnv1a64(instruction);
    return filler_sentence(salt, 10) + " " + filler_sentence(salt + 1, 9);
}

inline std::string decompose(const std::string& prompt) {
    const std::string instruction = between(prompt, "Instruction:\n\n", "\n\nOutput Format:");
    const std::uint64_t salt = fnv1a64(instruction);
    std::string out = "Does the response address the requested task?\n";
    const long words = first_number_after(instruction, "Respond with at least");
    if (words > 0)
        out += "Does the response contain at least " + std::to_string(words) + " words?\n";
    if (instruction.find("capital letters only") != std::string::npos)
        out += "Is the entire response written in capital letters?\n";
    if (instruction.find("lowercase letters") != std::string::npos)
        out += "Is the entire response written in lowercase letters?\n";
    if (instruction.find("title wrapped in double angle brackets") != std::string::npos)
        out += "Does the response include a title wrapped in double angle brackets?\n";
    if (instruction.find("commas") != std::string::npos)
        out += "Does the response avoid commas entirely?\n";
    out += "Is the response clear and relevant to scenario " +
           std::to_string(salt % 97) + "?\n";
    return out;
}

inline std::string judge(const std::string& prompt) {
    const std::string block = between(prompt, "Evaluation criteria:\n\n", "\n\nYour task:");
    long n = 0;
    for (const std::string& line : split_lines(block))
        if (!trim(line).empty()) ++n;
    if (n == 0) n = 1;
    std::string out;
    for (long i = 0; i < n; ++i) out += "YES\n";
    return out;
}

} // namespace detail

/// Deterministic scripted model: a pure function of (kind, prompt).
inline std::string synthesize(prompting::TemplateKind kind, const std::string& prompt) {
    using prompting::TemplateKind;
    switch (kind) {
        case TemplateKind::MetaDomains: return detail::meta_domains(prompt);
        case TemplateKind::MetaRequests: return detail::meta_requests(prompt);
        case TemplateKind::MetaScenarios: return detail::meta_scenarios(prompt);
        case TemplateKind::InstructionGen: return detail::instruction_gen(prompt);
        case TemplateKind::ConsistencyJudge: return detail::consistency_judge(prompt);
        case TemplateKind::IFResponse: return detail::if_response(prompt);
        case TemplateKind::GeneralResponse: return detail::general_response(prompt);
        case TemplateKind::Decompose: return detail::decompose(prompt);
        case TemplateKind::Judge: return detail::judge(prompt);
    }
    return "";
}

} // namespace decif::mockmodel
