#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "decif/util.hpp"

namespace decif::text_metrics {

/// A word is a maximal non-whitespace run.
inline long count_words(std::string_view text) {
    return static_cast<long>(split_words(text).size());
}

/// A sentence ends at '.', '!' or '?' followed by whitespace or end of text.
inline long count_sentences(std::string_view text) {
    long n = 0;
    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        if (i + 1 == text.size() || is_space(text[i + 1])) ++n;
    }
    return n;
}

/// Paragraphs are blocks separated by blank lines or by lines that consist of
/// the literal divider "***". Blocks empty after trimming do not count.
inline std::vector<std::string> split_paragraphs(std::string_view text) {
    std::vector<std::string> blocks;
    std::string current;
    auto flush = [&] {
        std::string t = trim(current);
        if (!t.empty()) blocks.push_back(std::move(t));
        current.clear();
    };
    for (const std::string& line : split_lines(text)) {
        const std::string t = trim(line);
        if (t.empty() || t == "***") {
            flush();
        } else {
            if (!current.empty()) current += "\n";
            current += line;
        }
    }
    flush();
    return blocks;
}

inline long count_paragraphs(std::string_view text) {
    return static_cast<long>(split_paragraphs(text).size());
}

inline bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

/// Case-insensitive occurrences of `keyword` delimited by non-alphanumerics.
inline long count_keyword(std::string_view text, std::string_view keyword) {
    if (keyword.empty()) return 0;
    const std::string h = to_lower(text);
    const std::string n = to_lower(keyword);
    long count = 0;
    size_t pos = 0;
    while ((pos = h.find(n, pos)) != std::string::npos) {
        const bool left_ok = pos == 0 || !is_word_char(h[pos - 1]);
        const size_t end = pos + n.size();
        const bool right_ok = end == h.size() || !is_word_char(h[end]);
        if (left_ok && right_ok) ++count;
        pos += 1;
    }
    return count;
}

inline long count_letter(std::string_view text, char letter) {
    const char lo = static_cast<char>(std::tolower(static_cast<unsigned char>(letter)));
    long count = 0;
    for (char c : text)
        if (std::tolower(static_cast<unsigned char>(c)) == lo) ++count;
    return count;
}

/// Bullet points are lines starting with "- " or "* ".
inline long count_bullets(std::string_view text) {
    long n = 0;
    for (const std::string& line : split_lines(text))
        if (starts_with(line, "- ") || starts_with(line, "* ")) ++n;
    return n;
}

/// Bracketed [placeholder] spans; pairs are matched left to right.
inline long count_placeholders(std::string_view text) {
    long n = 0;
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '[') {
            ++i;
            continue;
        }
        const size_t close = text.find(']', i + 1);
        if (close == std::string_view::npos) break;
        ++n;
        i = close + 1;
    }
    return n;
}

/// Single-asterisk *highlighted* spans: non-empty, single-line content.
inline long count_highlights(std::string_view text) {
    long n = 0;
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '*') {
            ++i;
            continue;
        }
        const size_t close = text.find('*', i + 1);
        if (close == std::string_view::npos) break;
        const std::string_view inner = text.substr(i + 1, close - i - 1);
        if (!inner.empty() && inner.find('\n') == std::string_view::npos) {
            ++n;
            i = close + 1;
        } else {
            ++i;
        }
    }
    return n;
}

/// A <<title>> span with non-empty content.
inline bool has_title(std::string_view text) {
    size_t open = text.find("<<");
    while (open != std::string_view::npos) {
        const size_t close = text.find(">>", open + 2);
        if (close == std::string_view::npos) return false;
        if (close > open + 2) return true;
        open = text.find("<<", open + 1);
    }
    return false;
}

/// Lines whose trimmed form is "SECTION <number>" or starts with it.
inline long count_sections(std::string_view text) {
    long n = 0;
    for (const std::string& line : split_lines(text)) {
        const std::string t = trim(line);
        if (starts_with(t, "SECTION ") && t.size() > 8 &&
            std::isdigit(static_cast<unsigned char>(t[8])))
            ++n;
    }
    return n;
}

/// Words of length >= 2 consisting solely of uppercase alphabetics.
inline long count_allcaps_words(std::string_view text) {
    long n = 0;
    for (const std::string& w : split_words(text)) {
        if (w.size() < 2) continue;
        bool all_caps = true;
        for (char c : w)
            if (!std::isupper(static_cast<unsigned char>(c))) all_caps = false;
        if (all_caps) ++n;
    }
    return n;
}

/// Casing checks judge alphabetic characters only.
inline bool all_alpha_upper(std::string_view text) {
    for (char c : text)
        if (std::isalpha(static_cast<unsigned char>(c)) &&
            !std::isupper(static_cast<unsigned char>(c)))
            return false;
    return true;
}

inline bool all_alpha_lower(std::string_view text) {
    for (char c : text)
        if (std::isalpha(static_cast<unsigned char>(c)) &&
            !std::islower(static_cast<unsigned char>(c)))
            return false;
    return true;
}

inline long count_commas(std::string_view text) {
    long n = 0;
    for (char c : text)
        if (c == ',') ++n;
    return n;
}

/// First and last non-whitespace characters both equal `mark`.
inline bool quotation_wrapped(std::string_view text, char mark) {
    size_t b = 0, e = text.size();
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    return e - b >= 2 && text[b] == mark && text[e - 1] == mark;
}

/// Exactly one occurrence of the separator, yielding two non-empty parts.
inline bool two_responses(std::string_view text, std::string_view separator) {
    if (separator.empty()) return false;
    const size_t first = text.find(separator);
    if (first == std::string_view::npos) return false;
    if (text.find(separator, first + separator.size()) != std::string_view::npos) return false;
    const std::string left = trim(text.substr(0, first));
    const std::string right = trim(text.substr(first + separator.size()));
    return !left.empty() && !right.empty();
}

inline bool json_wellformed(std::string_view text) {
    return nlohmann::json::accept(trim(text));
}

/// Relation band: "around" tolerates a deviation of max(1, target/10).
inline bool relation_holds(std::string_view relation, long measured, long target) {
    if (relation == "at least") return measured >= target;
    if (relation == "at most") return measured <= target;
    if (relation == "around") {
        const long tol = std::max(1L, target / 10);
        return measured >= target - tol && measured <= target + tol;
    }
    return false;
}

} // namespace decif::text_metrics
