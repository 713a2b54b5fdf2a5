#include <catch2/catch_amalgamated.hpp>

#include "decif/respond_verify.hpp"
#include "oracle.hpp"

using namespace decif;
using namespace decif::verify;
using decif::backend::MockBackend;
using decif::backend::MockScript;
using decif::prompting::TemplateKind;

namespace {

backend::GenerationParams params() { return {}; }

constraints::ConstraintInstance instance(constraints::ConstraintId id, nlohmann::json p) {
    constraints::ConstraintPool pool;
    constraints::ConstraintInstance inst;
    inst.id = id;
    inst.params = std::move(p);
    inst.rendered = constraints::render_description(pool.type(id), inst.params);
    return inst;
}

} // namespace

TEST_CASE("rule check: letter frequency on beekeeper") {
    const auto inst = instance(constraints::ConstraintId::LetterFrequency,
                               {{"letter", "e"}, {"relation", "at least"}, {"count", 5}});
    const auto v = rule_check(inst, "beekeeper");
    CHECK(v.passed());
    CHECK(v.detail == "count=5");
    CHECK(v.source == VerdictSource::Rule);
}

TEST_CASE("rule check: commas and word counts") {
    const auto no_commas = instance(constraints::ConstraintId::NoCommas, nlohmann::json::object());
    CHECK_FALSE(rule_check(no_commas, "Hello, world").passed());
    CHECK(rule_check(no_commas, "Hello world").passed());

    const auto words = instance(constraints::ConstraintId::NumberWords,
                                {{"relation", "at least"}, {"count", 5}});
    const auto fail = rule_check(words, "one two three four");
    CHECK_FALSE(fail.passed());
    CHECK(fail.detail == "count=4");
    CHECK(rule_check(words, "one two three four five").passed());
}

TEST_CASE("rule check: title span") {
    const auto inst = instance(constraints::ConstraintId::Title, nlohmann::json::object());
    CHECK(rule_check(inst, "<<Spring Song>>\nA poem about renewal.").passed());
    CHECK_FALSE(rule_check(inst, "Spring Song, a poem.").passed());
    CHECK_FALSE(rule_check(inst, "<<>> empty").passed());
}

TEST_CASE("rule check: structured formats") {
    const auto json_fmt =
        instance(constraints::ConstraintId::MultipleFormat, {{"format", "JSON"}});
    CHECK(rule_check(json_fmt, R"({"a": [1, 2], "b": "x"})").passed());
    CHECK_FALSE(rule_check(json_fmt, "not json at all").passed());

    const auto table_fmt =
        instance(constraints::ConstraintId::MultipleFormat, {{"format", "Table"}});
    CHECK(rule_check(table_fmt, "| a | b |\n| --- | --- |\n| 1 | 2 |").passed());
    CHECK_FALSE(rule_check(table_fmt, "plain prose").passed());
}

TEST_CASE("rule check: repeat prompt binds the instruction text") {
    auto inst = instance(constraints::ConstraintId::RepeatPrompt, {{"prompt_text", "Do the thing."}});
    CHECK(rule_check(inst, "Do the thing. Here is my answer.").passed());
    CHECK_FALSE(rule_check(inst, "Answer first. Do the thing.").passed());
}

TEST_CASE("rule check rejects judge-only constraints") {
    const auto style = instance(constraints::ConstraintId::Style, {{"style", "formal"}});
    CHECK_THROWS_AS(rule_check(style, "text"), Error);
}

TEST_CASE("rule checker agrees with the brute-force oracle on targeted cases") {
    const std::vector<std::pair<constraints::ConstraintInstance, std::string>> cases = {
        {instance(constraints::ConstraintId::NumberBullets, {{"count", 2}}),
         "- one\n- two\nplain"},
        {instance(constraints::ConstraintId::NumberBullets, {{"count", 2}}), "- one\nplain"},
        {instance(constraints::ConstraintId::NumberParagraphs, {{"count", 3}}),
         "a\n***\nb\n\nc"},
        {instance(constraints::ConstraintId::Quotation, {{"mark_style", "double"}}),
         "\"wrapped\""},
        {instance(constraints::ConstraintId::TwoResponses, {{"separator", "******"}}),
         "first\n******\nsecond"},
        {instance(constraints::ConstraintId::AllcapitalWords,
                  {{"relation", "at least"}, {"count", 2}}),
         "The USA and NASA teams"},
    };
    for (const auto& [inst, response] : cases)
        CHECK(rule_check(inst, response).passed() == oracle::check(inst, response));
}

TEST_CASE("response prompts follow the mode contract") {
    const std::string if_prompt = build_response_prompt("Write a haiku.", false,
                                                        prompting::default_templates());
    CHECK(if_prompt.find("[Query] Write a haiku.") != std::string::npos);
    CHECK(if_prompt.find("strictly following its inside constraints") != std::string::npos);

    const std::string general = build_response_prompt("Write a haiku.", true,
                                                      prompting::default_templates());
    CHECK(general.find("[Query] Write a haiku.") != std::string::npos);
    CHECK(general.find("strictly following") == std::string::npos);
}

TEST_CASE("empty model responses are a typed discard") {
    MockScript script;
    script.add_default(TemplateKind::IFResponse, "   ");
    MockBackend mock(script);
    try {
        generate_response(mock, "Write a haiku.", false, params());
        FAIL("expected EmptyOutput");
    } catch (const ParseError& e) {
        CHECK(e.code() == ErrorCode::EmptyOutput);
    }
}

TEST_CASE("decompose parses criteria and links them to constraints") {
    MockScript script;
    script.add_default(TemplateKind::Decompose,
                       "Is the response a four-line poem?\n"
                       "Is the poem about Spring?\n"
                       "Does the response contain at least 100 words?");
    MockBackend mock(script);
    const auto inst = instance(constraints::ConstraintId::NumberWords,
                               {{"relation", "at least"}, {"count", 100}});
    const auto criteria =
        decompose(mock, "Write a four-line poem about Spring with at least 100 words.",
                  {inst}, params());
    REQUIRE(criteria.size() == 3);
    CHECK(criteria[0].index == 0);
    CHECK_FALSE(criteria[0].linked_constraint.has_value());
    REQUIRE(criteria[2].linked_constraint.has_value());
    CHECK(*criteria[2].linked_constraint == 0);
}

TEST_CASE("decompose with no parseable lines raises NoCriteria material") {
    MockScript script;
    script.add_default(TemplateKind::Decompose, "");
    MockBackend mock(script);
    CHECK_THROWS_AS(decompose(mock, "Write.", {}, params()), ParseError);
}

TEST_CASE("linkage stays unset when tokens are ambiguous") {
    std::vector<EvaluationCriterion> criteria(1);
    criteria[0].question = "Does the response mention 5 items?";
    const auto a = instance(constraints::ConstraintId::NumberBullets, {{"count", 5}});
    const auto b = instance(constraints::ConstraintId::NumberPlaceholder, {{"count", 5}});
    link_criteria(criteria, {a, b});
    CHECK_FALSE(criteria[0].linked_constraint.has_value());
}

TEST_CASE("judge returns ordered verdicts and retries once on parse failure") {
    MockScript script;
    script.add(TemplateKind::Judge, 0, "YES\nYES\nYES");
    MockBackend mock(script);
    std::vector<EvaluationCriterion> criteria(3);
    for (int i = 0; i < 3; ++i) {
        criteria[static_cast<size_t>(i)].index = i;
        criteria[static_cast<size_t>(i)].question = "Q" + std::to_string(i) + "?";
    }
    const auto verdicts = judge(mock, "I", "R", criteria, params());
    REQUIRE(verdicts.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(verdicts[static_cast<size_t>(i)].criterion_index == i);
        CHECK(verdicts[static_cast<size_t>(i)].passed());
    }

    // mixed-case tolerance
    MockScript mixed;
    mixed.add(TemplateKind::Judge, 0, "yes\nno\nyes");
    MockBackend mock2(mixed);
    const auto tolerant = judge(mock2, "I", "R", criteria, params());
    CHECK(tolerant[0].passed());
    CHECK_FALSE(tolerant[1].passed());

    // bad output twice: the retry is consumed, then a typed failure
    MockScript bad;
    bad.add(TemplateKind::Judge, 0, "YES\nNO");
    bad.add(TemplateKind::Judge, 1, "YES\nNO");
    MockBackend mock3(bad);
    CHECK_THROWS_AS(judge(mock3, "I", "R", criteria, params()), ParseError);
    CHECK(mock3.call_count(TemplateKind::Judge) == 2);

    // recovery on the retry
    MockScript recover;
    recover.add(TemplateKind::Judge, 0, "garbled");
    recover.add(TemplateKind::Judge, 1, "YES\nYES\nYES");
    MockBackend mock4(recover);
    CHECK(judge(mock4, "I", "R", criteria, params()).size() == 3);
}

TEST_CASE("filter keeps only all-pass verdict sets") {
    std::vector<Verdict> judge_ok(2);
    judge_ok[0] = {0, VerdictValue::Yes, VerdictSource::Judge, ""};
    judge_ok[1] = {1, VerdictValue::Yes, VerdictSource::Judge, ""};
    std::vector<Verdict> rules_ok(1);
    rules_ok[0] = {0, VerdictValue::Yes, VerdictSource::Rule, "count=3"};

    CHECK(filter_record(judge_ok, rules_ok).keep);

    auto judge_bad = judge_ok;
    judge_bad[1].value = VerdictValue::No;
    const auto d1 = filter_record(judge_bad, rules_ok);
    CHECK_FALSE(d1.keep);
    CHECK(d1.reason == DiscardReason::JudgeNo);
    CHECK(d1.failing_index == 1);
    CHECK(d1.source == VerdictSource::Judge);

    auto rules_bad = rules_ok;
    rules_bad[0].value = VerdictValue::No;
    const auto d2 = filter_record(judge_ok, rules_bad);
    CHECK_FALSE(d2.keep);
    CHECK(d2.reason == DiscardReason::RuleFail);
    CHECK(d2.source == VerdictSource::Rule);
}

TEST_CASE("rule verdicts cover exactly the rule-checkable instances") {
    const auto style = instance(constraints::ConstraintId::Style, {{"style", "poetic"}});
    const auto words = instance(constraints::ConstraintId::NumberWords,
                                {{"relation", "at least"}, {"count", 2}});
    const auto title = instance(constraints::ConstraintId::Title, nlohmann::json::object());
    const auto verdicts = rule_check_all({style, words, title}, "some answer <<here>>");
    REQUIRE(verdicts.size() == 2);
    CHECK(verdicts[0].criterion_index == 1);
    CHECK(verdicts[1].criterion_index == 2);
}

TEST_CASE("adding a constraint can only shrink the keep-set") {
    constraints::ConstraintPool pool;
    const constraints::Instantiator make(pool);
    SeededRng rng(77, "monotone");
    const std::vector<std::string> responses = {
        "THE PLAN WORKS",
        "a quiet note with <<title>> inside",
        "- one\n- two",
        "short answer.",
        "\"wrapped in quotes\"",
    };
    for (int trial = 0; trial < 200; ++trial) {
        const auto ids = constraints::sample_constraints(pool, 1 + trial % 4, rng);
        auto base = make.instantiate_set(ids, rng, "a planner drafts notes");
        auto extended = base;
        extended.push_back(make.instantiate(constraints::ConstraintId::NumberWords, rng,
                                            "a planner drafts notes"));
        for (const auto& response : responses) {
            const bool base_keep =
                filter_record({}, rule_check_all(base, response)).keep;
            const bool ext_keep =
                filter_record({}, rule_check_all(extended, response)).keep;
            if (ext_keep) CHECK(base_keep); // keep(S + c) implies keep(S)
        }
    }
}
