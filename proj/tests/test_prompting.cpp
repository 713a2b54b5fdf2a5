#include <catch2/catch_amalgamated.hpp>

#include "decif/prompting.hpp"
#include "decif/rng.hpp"

using namespace decif;
using namespace decif::prompting;

namespace {

size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    size_t n = 0, pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a typed error");
    return ErrorCode::Io;
}

} // namespace

TEST_CASE("meta-domains template renders the requested count at both slots") {
    const std::string prompt = render(TemplateKind::MetaDomains, {{"number of domains", "25"}});
    CHECK(count_occurrences(prompt, "Generate exactly 25 real-world domains") == 1);
    CHECK(count_occurrences(prompt, "Output exactly 25 domains") == 1);
    CHECK(prompt.find('{') == std::string::npos);
}

TEST_CASE("judge template ends with the evaluation cue") {
    const std::string prompt = render(TemplateKind::Judge, {{"instruction", "I"},
                                                            {"response", "R"},
                                                            {"criteria", "1. Q?"}});
    CHECK(ends_with(prompt, "Begin evaluation:"));
}

TEST_CASE("every builtin template renders with its own placeholder set") {
    const TemplateSet& set = default_templates();
    for (TemplateKind kind : kAllTemplateKinds) {
        PromptBindings bindings;
        for (const auto& name : set.placeholders(kind)) bindings[name] = "17";
        const std::string prompt = render(kind, bindings);
        CHECK(prompt.find('{') == std::string::npos);
        CHECK(classify_prompt(prompt) == kind);
    }
}

TEST_CASE("render rejects missing and unknown placeholders") {
    CHECK(code_of([] {
              render(TemplateKind::InstructionGen, {{"meta scenarios", "s"}});
          }) == ErrorCode::MissingPlaceholder);
    CHECK(code_of([] {
              render(TemplateKind::IFResponse,
                     {{"instruction", "x"}, {"bogus", "y"}});
          }) == ErrorCode::UnknownPlaceholder);
}

TEST_CASE("bound values containing braces are inserted verbatim") {
    const std::string prompt =
        render(TemplateKind::IFResponse, {{"instruction", "emit {\"k\": 1} as JSON"}});
    CHECK(prompt.find("emit {\"k\": 1} as JSON") != std::string::npos);
}

TEST_CASE("template overrides replace the builtin text") {
    TemplateSet set;
    set.set_override(TemplateKind::MetaDomains, "list {number of domains} things");
    CHECK(render(TemplateKind::MetaDomains, {{"number of domains", "3"}}, set) ==
          "list 3 things");
}

TEST_CASE("hyphen list parsing") {
    const auto parsed = parse_hyphen_list("- Education\n- Healthcare\n- Finance");
    CHECK(parsed.items == std::vector<std::string>{"Education", "Healthcare", "Finance"});
    CHECK(parsed.noise_count == 0);

    const auto noisy = parse_hyphen_list("1. Sports\n- Health");
    CHECK(noisy.items == std::vector<std::string>{"Health"});
    CHECK(noisy.noise_count == 1);

    CHECK(code_of([] { parse_hyphen_list(""); }) == ErrorCode::EmptyOutput);
    CHECK(code_of([] { parse_hyphen_list("no markers here\njust prose"); }) ==
          ErrorCode::EmptyOutput);
}

TEST_CASE("hyphen list is idempotent over its own serialization") {
    const auto first = parse_hyphen_list("- alpha\nnoise\n- beta\n-   gamma  ");
    std::string reserialized;
    for (const auto& item : first.items) reserialized += "- " + item + "\n";
    const auto second = parse_hyphen_list(reserialized);
    CHECK(second.items == first.items);
    CHECK(second.noise_count == 0);
}

TEST_CASE("instruction parsing strips the marker") {
    const auto a =
        parse_instruction("User instruction: Write a poem about spring in all capital letters.");
    CHECK(a.text == "Write a poem about spring in all capital letters.");
    CHECK_FALSE(a.marker_missing);

    const auto b = parse_instruction("Write a memo.");
    CHECK(b.text == "Write a memo.");
    CHECK(b.marker_missing);

    CHECK(code_of([] { parse_instruction("User instruction:   "); }) == ErrorCode::EmptyOutput);
}

TEST_CASE("consistency triple parsing") {
    const auto r = parse_consistency("- Original: X\n- Conflict: False\n- Refined: X");
    CHECK(r.original == "X");
    CHECK_FALSE(r.conflict);
    CHECK(r.refined == "X");

    const auto reordered =
        parse_consistency("Refined: better\nORIGINAL: worse\nconflict: TRUE");
    CHECK(reordered.conflict);
    CHECK(reordered.original == "worse");
    CHECK(reordered.refined == "better");

    CHECK(code_of([] { parse_consistency("Conflict: maybe"); }) == ErrorCode::BadBoolean);
    CHECK(code_of([] {
              parse_consistency("- Original: X\n- Conflict: False");
          }) == ErrorCode::MissingField);
}

TEST_CASE("criteria parsing strips list markers and flags non-questions") {
    const auto two = parse_criteria(
        "Does the response include at least three sources?\nIs the response under 100 words?");
    REQUIRE(two.size() == 2);
    CHECK_FALSE(two[0].non_question);

    const auto bullet = parse_criteria("- Is it a poem?");
    REQUIRE(bullet.size() == 1);
    CHECK(bullet[0].question == "Is it a poem?");

    const auto numbered = parse_criteria("1. Is it short?\n2. The response is clear");
    REQUIRE(numbered.size() == 2);
    CHECK(numbered[0].question == "Is it short?");
    CHECK(numbered[1].non_question);

    CHECK(code_of([] { parse_criteria(""); }) == ErrorCode::EmptyOutput);
}

TEST_CASE("binary verdict parsing") {
    const auto three = parse_binary_verdicts("YES\nNO\nYES", 3);
    CHECK(three == std::vector<YesNo>{YesNo::Yes, YesNo::No, YesNo::Yes});

    CHECK(parse_binary_verdicts("yes.\nYES", 2) == std::vector<YesNo>{YesNo::Yes, YesNo::Yes});
    CHECK(parse_binary_verdicts("yes\nno\nyes", 3) ==
          std::vector<YesNo>{YesNo::Yes, YesNo::No, YesNo::Yes});
    CHECK(parse_binary_verdicts("1. YES\n2. NO", 2) ==
          std::vector<YesNo>{YesNo::Yes, YesNo::No});

    CHECK(code_of([] { parse_binary_verdicts("YES", 2); }) == ErrorCode::CountMismatch);
    CHECK(code_of([] { parse_binary_verdicts("YES\nMAYBE\nYES", 3); }) ==
          ErrorCode::UnparseableLine);
    CHECK(code_of([] { parse_binary_verdicts("YES", 0); }) == ErrorCode::Precondition);
}

// ---------------------------------------------------------------------------
// Round-trip properties: render a template, answer it in the canonical
// format, and the matching parser must reconstruct the payload exactly.
// ---------------------------------------------------------------------------

namespace {

std::string random_phrase(SeededRng& rng, int min_words = 1, int max_words = 6) {
    static const std::vector<std::string> vocab = {
        "amber", "basket", "copper", "delta",  "ember", "fjord",
        "grove", "harbor", "indigo", "jasper", "kettle", "lumen",
    };
    const long n = rng.uniform_int(min_words, max_words);
    std::string out;
    for (long i = 0; i < n; ++i) out += (i ? " " : "") + rng.pick(vocab);
    return out;
}

} // namespace

TEST_CASE("round-trip: hyphen-list payloads survive render + parse") {
    SeededRng rng(2024, "roundtrip/hyphen");
    for (int trial = 0; trial < 50; ++trial) {
        const long n = rng.uniform_int(1, 12);
        std::vector<std::string> payload;
        for (long i = 0; i < n; ++i)
            payload.push_back(random_phrase(rng) + " " + std::to_string(i));
        (void)render(TemplateKind::MetaDomains,
                     {{"number of domains", std::to_string(n)}});
        std::string answer;
        for (const auto& item : payload) answer += "- " + item + "\n";
        CHECK(parse_hyphen_list(answer).items == payload);
    }
}

TEST_CASE("round-trip: instruction payloads survive render + parse") {
    SeededRng rng(2024, "roundtrip/instruction");
    for (int trial = 0; trial < 50; ++trial) {
        const std::string payload = random_phrase(rng, 3, 10) + ".";
        (void)render(TemplateKind::InstructionGen,
                     {{"meta scenarios", random_phrase(rng)},
                      {"the selected constraint(s)", "1. none"}});
        CHECK(parse_instruction("User instruction: " + payload).text == payload);
    }
}

TEST_CASE("round-trip: consistency payloads survive render + parse") {
    SeededRng rng(2024, "roundtrip/consistency");
    for (int trial = 0; trial < 50; ++trial) {
        const std::string original = random_phrase(rng, 2, 8);
        const bool conflict = rng.chance(0.5);
        const std::string refined = conflict ? random_phrase(rng, 2, 8) : original;
        (void)render(TemplateKind::ConsistencyJudge, {{"instruction", original}});
        const std::string answer = "- Original: " + original +
                                   "\n- Conflict: " + (conflict ? "True" : "False") +
                                   "\n- Refined: " + refined;
        const auto parsed = parse_consistency(answer);
        CHECK(parsed.original == original);
        CHECK(parsed.conflict == conflict);
        CHECK(parsed.refined == refined);
    }
}

TEST_CASE("round-trip: verdict payloads survive render + parse") {
    SeededRng rng(2024, "roundtrip/verdicts");
    for (int trial = 0; trial < 50; ++trial) {
        const long n = rng.uniform_int(1, 10);
        std::vector<YesNo> payload;
        std::string criteria;
        std::string answer;
        for (long i = 0; i < n; ++i) {
            payload.push_back(rng.chance(0.5) ? YesNo::Yes : YesNo::No);
            criteria += std::to_string(i + 1) + ". " + random_phrase(rng) + "?\n";
            answer += payload.back() == YesNo::Yes ? "YES\n" : "NO\n";
        }
        (void)render(TemplateKind::Judge, {{"instruction", "I"},
                                           {"response", "R"},
                                           {"criteria", criteria}});
        CHECK(parse_binary_verdicts(answer, static_cast<size_t>(n)) == payload);
    }
}
