#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "fixtures.hpp"
#include "mgpo/harness.hpp"
#include "mgpo/tutor.hpp"

using namespace mgpo;

namespace {

VocConfig legacy_voc(double lambda = 0.05) {
    VocConfig c;
    c.lambda = lambda;
    c.legacy_mode = true;
    return c;
}

// Belief on a stage-4 template after a few observations, so that several
// distinct VOC levels exist.
BeliefState worked_belief(const TemplatePtr& env, std::uint64_t seed, int clicks) {
    auto inst = sample_instance(env, seed);
    StreamObservations src(inst, 0.005, seed);
    MgpoPolicy policy(env, legacy_voc());
    Episode ep(inst, {0.05, 0.005, 200, ScoreMode::posterior}, src);
    for (int i = 0; i < clicks && !ep.done(); ++i) {
        const auto a = policy.select(ep.belief());
        if (a.is_terminate()) break;
        ep.step(a);
    }
    return ep.belief();
}

} // namespace

TEST(ChoiceSet, ContainsArgmaxAndDistinctValues) {
    for (int stage = 1; stage <= 4; ++stage) {
        auto env = builtin_curriculum(stage);
        const int k = stage_choice_count(stage);
        SplitMix64 gen(static_cast<std::uint64_t>(stage));
        for (int trial = 0; trial < 20; ++trial) {
            const auto b = worked_belief(env, static_cast<std::uint64_t>(trial), trial % 5);
            const auto cfg = legacy_voc();
            const auto set = build_choice_set(b, *env, cfg, k, gen);
            const auto table = voc_table(b, *env, cfg);
            ASSERT_EQ(static_cast<int>(set.options.size()), k);
            EXPECT_TRUE(set.includes_terminate);
            EXPECT_TRUE(set.offers(MetaAction::terminate()));
            // argmax first
            EXPECT_NEAR(set.option_voc[0], max_voc(table), 1e-12);
            const auto mgpo_choice = select_from_table(table);
            EXPECT_EQ(set.correct, mgpo_choice);
            if (mgpo_choice.is_inspect()) EXPECT_TRUE(set.offers(mgpo_choice));
            if (!set.relaxed) {
                for (std::size_t i = 0; i < set.option_voc.size(); ++i) {
                    for (std::size_t j = i + 1; j < set.option_voc.size(); ++j) {
                        EXPECT_GT(std::abs(set.option_voc[i] - set.option_voc[j]), 1e-12);
                    }
                }
            }
        }
    }
}

TEST(ChoiceSet, StageOneFreshBeliefHasTwoDistinctOptions) {
    auto env = builtin_curriculum(1);
    SplitMix64 gen(1);
    const auto cfg = legacy_voc();
    const auto b = init_belief(*env);
    const auto set = build_choice_set(b, *env, cfg, 2, gen);
    ASSERT_EQ(set.options.size(), 2u);
    EXPECT_FALSE(set.relaxed);
    EXPECT_NE(set.option_voc[0], set.option_voc[1]);
    EXPECT_EQ(set.options[0], select_computation(b, *env, cfg));
}

TEST(ChoiceSet, RelaxesWhenValuesRunOut) {
    // Fork: four nodes with one shared VOC value.
    auto env = fixtures::fork();
    SplitMix64 gen(2);
    const auto set = build_choice_set(init_belief(*env), *env, VocConfig{}, 3, gen);
    EXPECT_EQ(set.options.size(), 3u);
    EXPECT_TRUE(set.relaxed);
    // more options than nodes
    const auto all = build_choice_set(init_belief(*env), *env, VocConfig{}, 6, gen);
    EXPECT_EQ(all.options.size(), 4u);
    EXPECT_TRUE(all.relaxed);
    EXPECT_THROW(build_choice_set(init_belief(*env), *env, VocConfig{}, 1, gen), TutorError);
}

TEST(ChoiceSet, SecondOptionUniformOverEligiblePool) {
    auto env = builtin_curriculum(4);
    const auto b = worked_belief(env, 3, 2);
    const auto cfg = legacy_voc();
    const auto table = voc_table(b, *env, cfg);
    const double best = max_voc(table);
    std::set<NodeId> pool;
    NodeId argmax = -1;
    for (const auto& r : table) {
        if (r.voc == best && argmax < 0) argmax = r.node;
    }
    for (const auto& r : table) {
        if (r.node != argmax && std::abs(r.voc - best) > 1e-9 * std::max(1.0, std::abs(best))) pool.insert(r.node);
    }
    ASSERT_GE(pool.size(), 2u);

    SplitMix64 gen(99);
    const int n = 10000;
    std::map<NodeId, int> counts;
    for (int i = 0; i < n; ++i) {
        const auto set = build_choice_set(b, *env, cfg, 2, gen);
        ASSERT_EQ(set.options[0].node, argmax);
        ++counts[set.options[1].node];
    }
    const double p = 1.0 / static_cast<double>(pool.size());
    const double sigma = std::sqrt(n * p * (1 - p));
    for (NodeId node : pool) EXPECT_LE(std::abs(counts[node] - n * p), 3 * sigma) << "node " << node;
    for (const auto& [node, c] : counts) EXPECT_TRUE(pool.count(node)) << "node " << node << " outside pool";
}

TEST(EvaluateClick, ArgmaxIsCorrect) {
    auto env = builtin_curriculum(4);
    const auto b = init_belief(*env);
    const auto cfg = legacy_voc();
    SplitMix64 gen(4);
    const auto set = build_choice_set(b, *env, cfg, 4, gen);
    ASSERT_TRUE(set.correct.is_inspect());
    const auto r = evaluate_click(b, *env, set.correct, set, cfg, FeedbackConfig{}, {});
    EXPECT_TRUE(r.correct);
    EXPECT_EQ(r.delay, 0.0);
    EXPECT_TRUE(r.executed);
}

TEST(EvaluateClick, WrongClickAndNotOffered) {
    auto env = builtin_curriculum(4);
    const auto b = init_belief(*env);
    const auto cfg = legacy_voc();
    const auto table = voc_table(b, *env, cfg);
    const double best = max_voc(table);
    NodeId worst = table.front().node;
    double worst_voc = table.front().voc;
    for (const auto& r : table) {
        if (r.voc < worst_voc) {
            worst = r.node;
            worst_voc = r.voc;
        }
    }
    ASSERT_GT(best - worst_voc, 0.05);
    ChoiceSet set;
    set.options = {select_from_table(table), MetaAction::inspect(worst)};
    set.correct = set.options[0];
    FeedbackConfig fb;
    fb.d_click = 3.0;
    const auto r = evaluate_click(b, *env, MetaAction::inspect(worst), set, cfg, fb, {});
    EXPECT_FALSE(r.correct);
    EXPECT_EQ(r.delay, 3.0);
    EXPECT_EQ(r.highlighted, set.correct);
    NodeId other = 1;
    while (set.offers(MetaAction::inspect(other))) ++other;
    EXPECT_THROW(evaluate_click(b, *env, MetaAction::inspect(other), set, cfg, fb, {}), TutorError);
}

TEST(EvaluateClick, AtMostOneCorrectWhenGapsAreLarge) {
    auto env = builtin_curriculum(4);
    const auto cfg = legacy_voc();
    SplitMix64 gen(8);
    for (int t = 0; t < 10; ++t) {
        const auto b = worked_belief(env, 50 + static_cast<std::uint64_t>(t), t);
        const auto set = build_choice_set(b, *env, cfg, 4, gen);
        bool gaps_large = true;
        for (std::size_t i = 1; i < set.option_voc.size(); ++i) {
            if (set.option_voc[0] - set.option_voc[i] <= 0.05) gaps_large = false;
        }
        if (!gaps_large) continue;
        int correct = 0;
        for (const auto& o : set.options) correct += evaluate_click(b, *env, o, set, cfg, {}, {}).correct ? 1 : 0;
        EXPECT_LE(correct, 1);
    }
}

TEST(TerminationDelay, WorkedExamples) {
    FeedbackConfig fb;
    EXPECT_DOUBLE_EQ(termination_delay(2.0, {1.0, 2.0}, fb), 7.0);
    EXPECT_DOUBLE_EQ(termination_delay(1.0, {2.0, 1.5}, fb), 5.0);
    EXPECT_DOUBLE_EQ(termination_delay(1.0, {}, fb), 7.0);
    EXPECT_DOUBLE_EQ(termination_delay(5.0, {1.0}, fb), 7.0); // clamped
    EXPECT_DOUBLE_EQ(termination_delay(-1.0, {1.0}, fb), 3.0);
}

TEST(TerminationDelay, AlwaysWithinBounds) {
    FeedbackConfig fb;
    SplitMix64 gen(6);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> hist;
        const int len = static_cast<int>(uniform_index(gen, 5));
        for (int j = 0; j < len; ++j) hist.push_back(10 * standard_normal(gen));
        const double d = termination_delay(10 * standard_normal(gen), hist, fb);
        EXPECT_GE(d, fb.d_c);
        EXPECT_LE(d, fb.d_c + fb.d_max);
    }
}

TEST(EvaluateClick, PrematureTerminate) {
    auto env = builtin_curriculum(4);
    const auto b = init_belief(*env);
    const auto cfg = legacy_voc();
    SplitMix64 gen(4);
    const auto set = build_choice_set(b, *env, cfg, 4, gen);
    const double now = max_voc(voc_table(b, *env, cfg));
    ASSERT_GT(now, 0.0);
    auto r = evaluate_click(b, *env, MetaAction::terminate(), set, cfg, {}, {now});
    EXPECT_FALSE(r.correct);
    EXPECT_FALSE(r.executed);
    EXPECT_DOUBLE_EQ(r.delay, 7.0);
    r = evaluate_click(b, *env, MetaAction::terminate(), set, cfg, {}, {2 * now});
    EXPECT_NEAR(r.delay, 5.0, 1e-12);
}

TEST(EvaluateClick, TerminateWhenPolicyStops) {
    auto env = fixtures::fork(1.0);
    VocConfig cfg;
    cfg.lambda = 100.0;
    SplitMix64 gen(4);
    const auto b = init_belief(*env);
    const auto set = build_choice_set(b, *env, cfg, 2, gen);
    EXPECT_TRUE(set.correct.is_terminate());
    const auto r = evaluate_click(b, *env, MetaAction::terminate(), set, cfg, {}, {});
    EXPECT_TRUE(r.correct);
    EXPECT_TRUE(r.executed);
    EXPECT_EQ(r.delay, 0.0);
}

TEST(EvaluateClick, HighlightFollowingLearnerHasNoDelay) {
    auto env = builtin_curriculum(3);
    const auto cfg = legacy_voc();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto inst = sample_instance(env, seed);
        TableObservations src(inst, 0.005, seed);
        Episode ep(inst, {0.05, 0.005, 200, ScoreMode::posterior}, src);
        SplitMix64 gen(seed);
        std::vector<double> hist;
        double total_delay = 0;
        while (!ep.done()) {
            const auto set = build_choice_set(ep.belief(), *env, cfg, 4, gen);
            const auto r = evaluate_click(ep.belief(), *env, set.correct, set, cfg, {}, hist);
            EXPECT_TRUE(r.correct);
            total_delay += r.delay;
            hist.push_back(max_voc(voc_table(ep.belief(), *env, cfg)));
            ep.step(set.correct);
        }
        EXPECT_EQ(total_delay, 0.0);
    }
}

TEST(GenerateDemo, GoalFirstOnStageFour) {
    auto env = builtin_curriculum(4);
    const auto tiers = variance_tiers(*env);
    int goal_first = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto inst = sample_instance(env, seed);
        TableObservations src(inst, 0.005, seed);
        SplitMix64 gen(seed);
        const auto demo = generate_demo(inst, legacy_voc(), {0.05, 0.005, 200, ScoreMode::posterior}, src, gen,
                                        DemoMode::mgpo);
        ASSERT_FALSE(demo.steps.empty());
        EXPECT_TRUE(demo.steps.back().action.is_terminate());
        if (demo.steps.front().action.is_inspect() &&
            tiers[static_cast<std::size_t>(demo.steps.front().action.node)] == 2) {
            ++goal_first;
        }
    }
    EXPECT_EQ(goal_first, 10);
}

TEST(GenerateDemo, DummyMatchesLengthAndReproduces) {
    auto env = builtin_curriculum(4);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto inst = sample_instance(env, seed);
        TableObservations src(inst, 0.005, seed);
        const EpisodeConfig ep{0.05, 0.005, 200, ScoreMode::posterior};
        SplitMix64 g1(seed), g2(seed), g3(seed);
        const auto m = generate_demo(inst, legacy_voc(), ep, src, g1, DemoMode::mgpo);
        const auto d = generate_demo(inst, legacy_voc(), ep, src, g2, DemoMode::dummy);
        const auto d2 = generate_demo(inst, legacy_voc(), ep, src, g3, DemoMode::dummy);
        EXPECT_EQ(d.inspect_count(), m.inspect_count());
        ASSERT_EQ(d.steps.size(), d2.steps.size());
        for (std::size_t i = 0; i < d.steps.size(); ++i) {
            EXPECT_EQ(d.steps[i].action, d2.steps[i].action);
            EXPECT_EQ(d.steps[i].observation, d2.steps[i].observation);
        }
    }
}

TEST(DummyChoiceSet, EquidistantPairOfTwo) {
    for (int stage = 1; stage <= 4; ++stage) {
        auto env = builtin_curriculum(stage);
        SplitMix64 gen(static_cast<std::uint64_t>(stage));
        for (int i = 0; i < 200; ++i) {
            const auto set = dummy_choice_set(*env, gen);
            ASSERT_EQ(set.options.size(), 2u);
            EXPECT_NE(set.options[0], set.options[1]);
            EXPECT_EQ(env->depth(set.options[0].node), env->depth(set.options[1].node));
            EXPECT_TRUE(set.offers(set.correct));
        }
    }
}

TEST(DummyChoiceSet, DepthUniform) {
    auto env = builtin_curriculum(3);
    std::set<int> eligible;
    std::map<int, int> per_depth;
    for (NodeId n : env->inspectable_nodes()) ++per_depth[env->depth(n)];
    for (const auto& [d, c] : per_depth) {
        if (c >= 2) eligible.insert(d);
    }
    SplitMix64 gen(17);
    const int n = 10000;
    std::map<int, int> counts;
    for (int i = 0; i < n; ++i) ++counts[env->depth(dummy_choice_set(*env, gen).options[0].node)];
    const double p = 1.0 / static_cast<double>(eligible.size());
    const double sigma = std::sqrt(n * p * (1 - p));
    for (int d : eligible) EXPECT_LE(std::abs(counts[d] - n * p), 3 * sigma) << "depth " << d;
    EXPECT_EQ(counts.size(), eligible.size());
}

TEST(Curriculum, Schedules) {
    for (auto c : {Condition::choice_tutor, Condition::dummy_tutor, Condition::no_tutor}) {
        const auto plan = curriculum_schedule(c);
        ASSERT_EQ(plan.size(), 22u);
        for (int t = 12; t < 22; ++t) {
            EXPECT_EQ(plan[static_cast<std::size_t>(t)].kind, TrialKind::test);
            EXPECT_EQ(plan[static_cast<std::size_t>(t)].stage, 4);
        }
        for (int t = 0; t < 12; ++t) EXPECT_EQ(plan[static_cast<std::size_t>(t)].stage, t / 3 + 1);
    }
    const auto tutor = curriculum_schedule(Condition::choice_tutor);
    std::vector<int> demos;
    for (const auto& p : tutor) {
        if (p.kind == TrialKind::demo) demos.push_back(p.index);
    }
    EXPECT_EQ(demos, (std::vector<int>{0, 3, 6, 9}));
    EXPECT_EQ(tutor[1].k_choices, 2);
    EXPECT_EQ(tutor[4].k_choices, 3);
    EXPECT_EQ(tutor[7].k_choices, 4);
    EXPECT_EQ(tutor[10].k_choices, 4);

    const auto dummy = curriculum_schedule(Condition::dummy_tutor);
    EXPECT_EQ(dummy[7].k_choices, 2);
    EXPECT_EQ(dummy[10].k_choices, 2);

    const auto none = curriculum_schedule(Condition::no_tutor);
    int practice = 0, demo = 0;
    for (const auto& p : none) {
        practice += p.kind == TrialKind::practice;
        demo += p.kind == TrialKind::demo;
    }
    EXPECT_EQ(practice, 12);
    EXPECT_EQ(demo, 0);
    EXPECT_THROW(parse_condition("placebo"), TutorError);
}

TEST(TableObservations, DepthAndExhaustion) {
    auto env = builtin_curriculum(2);
    auto inst = sample_instance(env, 1);
    TableObservations table(inst, 0.005, 1);
    for (NodeId n : env->inspectable_nodes()) EXPECT_EQ(table.depth(n), 200u);
    EXPECT_NO_THROW(table.draw(1, 199));
    EXPECT_THROW(table.draw(1, 200), TutorError);
    TableObservations again(inst, 0.005, 1);
    EXPECT_EQ(table.table(), again.table());

    Episode ep(inst, {0.05, 0.005, 500, ScoreMode::posterior}, table);
    for (int i = 0; i < 200; ++i) ep.step(MetaAction::inspect(1));
    EXPECT_THROW(ep.step(MetaAction::inspect(1)), TutorError);
}
