#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>

#include "fixtures.hpp"
#include "mgpo/envgraph.hpp"

using namespace mgpo;

namespace {

// Independent oracle: recursive DFS over the adjacency in the edge list,
// without the template's cached child lists.
std::vector<Path> dfs_paths(const EnvTemplate& env) {
    std::vector<std::vector<NodeId>> adj(static_cast<std::size_t>(env.node_count()));
    for (const auto& [a, b] : env.edges()) adj[static_cast<std::size_t>(a)].push_back(b);
    std::vector<Path> out;
    Path cur{0};
    std::function<void(NodeId)> rec = [&](NodeId v) {
        if (std::find(env.goals().begin(), env.goals().end(), v) != env.goals().end()) out.push_back(cur);
        for (NodeId w : adj[static_cast<std::size_t>(v)]) {
            cur.push_back(w);
            rec(w);
            cur.pop_back();
        }
    };
    rec(0);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<TemplatePtr> shipped() {
    std::vector<TemplatePtr> all;
    for (int g = 2; g <= 5; ++g) all.push_back(builtin_benchmark(g));
    for (int s = 1; s <= 4; ++s) all.push_back(builtin_curriculum(s));
    return all;
}

constexpr const char* kChain = R"({"nodes":[{"id":0,"mean":0,"sigma":0},{"id":1,"mean":0,"sigma":5},
  {"id":2,"mean":0,"sigma":5}],"edges":[[0,1],[1,2]],"start":0,"goals":[2]})";

} // namespace

TEST(LoadTemplate, ChainHasOnePath) {
    auto env = load_template(kChain);
    ASSERT_EQ(env->paths().size(), 1u);
    EXPECT_EQ(env->paths()[0], (Path{0, 1, 2}));
}

TEST(LoadTemplate, BackEdgeIsCycle) {
    std::string doc = kChain;
    doc.replace(doc.find("[[0,1],[1,2]]"), 13, "[[0,1],[1,2],[2,0]]");
    try {
        load_template(doc);
        FAIL() << "expected a cycle error";
    } catch (const EnvError& e) {
        EXPECT_NE(std::string(e.what()).find("cycle"), std::string::npos) << e.what();
    }
}

TEST(LoadTemplate, ReportsLocations) {
    EXPECT_THROW(load_template("{not json"), EnvError);
    EXPECT_THROW(load_template(R"({"nodes":[],"edges":[],"start":0})"), EnvError);
    // duplicate id
    EXPECT_THROW(load_template(R"({"nodes":[{"id":0,"mean":0,"sigma":0},{"id":0,"mean":0,"sigma":1}],
        "edges":[],"start":0,"goals":[1]})"),
                 EnvError);
    // unreachable goal
    try {
        load_template(R"({"nodes":[{"id":0,"mean":0,"sigma":0},{"id":1,"mean":0,"sigma":1},{"id":2,"mean":0,"sigma":1}],
            "edges":[[0,1]],"start":0,"goals":[1,2]})");
        FAIL();
    } catch (const EnvError& e) {
        EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("unreachable"), std::string::npos);
    }
    // goal with children, start with variance, edge to unknown node
    EXPECT_THROW(EnvTemplate::create({{0, 0, 0}, {1, 0, 1}, {2, 0, 1}}, {{0, 1}, {1, 2}}, 0, {1, 2}), EnvError);
    EXPECT_THROW(EnvTemplate::create({{0, 0, 1}, {1, 0, 1}}, {{0, 1}}, 0, {1}), EnvError);
    EXPECT_THROW(EnvTemplate::create({{0, 0, 0}, {1, 0, 1}}, {{0, 7}}, 0, {1}), EnvError);
    EXPECT_THROW(EnvTemplate::create({{0, 0, 0}, {1, 0, -1}}, {{0, 1}}, 0, {1}), EnvError);
}

TEST(LoadTemplate, ShippedFilesMatchBuiltins) {
    for (int g = 2; g <= 5; ++g) {
        auto file = load_template_file(fixtures::data_path("env/bench_g" + std::to_string(g) + ".json"));
        EXPECT_EQ(template_to_json(*file), template_to_json(*builtin_benchmark(g)));
    }
    for (int s = 1; s <= 4; ++s) {
        auto file = load_template_file(fixtures::data_path("env/curriculum_" + std::to_string(s) + ".json"));
        EXPECT_EQ(template_to_json(*file), template_to_json(*builtin_curriculum(s)));
    }
}

TEST(LoadTemplate, ShippedTwoGoalFileHasTwoBlocksOf18) {
    auto env = load_template_file(fixtures::data_path("env/bench_g2.json"));
    EXPECT_EQ(env->node_count() - 1, 36);
    EXPECT_EQ(env->goals().size(), 2u);
    // blocks are disjoint: no path touches both goals, and the children of
    // the start node split evenly
    EXPECT_EQ(env->children(0).size() % 2, 0u);
}

TEST(LoadTemplate, JsonRoundTrip) {
    for (const auto& env : shipped()) {
        auto back = load_template(template_to_json(*env).dump());
        EXPECT_EQ(back->paths(), env->paths());
        EXPECT_EQ(back->name(), env->name());
    }
}

TEST(EnumeratePaths, SmallGraphs) {
    EXPECT_EQ(enumerate_paths(*fixtures::chain3()), (std::vector<Path>{{0, 1, 2}}));
    const auto diamond = fixtures::diamond();
    const auto& d = enumerate_paths(*diamond);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d[0], (Path{0, 1, 3}));
    EXPECT_EQ(d[1], (Path{0, 2, 3}));
}

TEST(EnumeratePaths, MatchesIndependentDfsOnShippedTemplates) {
    for (const auto& env : shipped()) {
        auto expect = dfs_paths(*env);
        EXPECT_EQ(env->paths(), expect) << env->name();
        EXPECT_TRUE(std::is_sorted(env->paths().begin(), env->paths().end()));
        std::set<Path> unique(env->paths().begin(), env->paths().end());
        EXPECT_EQ(unique.size(), env->paths().size());
    }
}

TEST(EnumeratePaths, EveryNodeLiesOnSomePath) {
    for (const auto& env : shipped()) {
        for (NodeId n = 1; n < env->node_count(); ++n) {
            EXPECT_FALSE(env->paths_through(n).empty()) << env->name() << " node " << n;
        }
    }
}

TEST(EnumeratePaths, PathsAreWellFormed) {
    for (const auto& env : shipped()) {
        for (std::size_t p = 0; p < env->paths().size(); ++p) {
            const auto& path = env->paths()[p];
            EXPECT_EQ(path.front(), 0);
            EXPECT_TRUE(env->is_goal(path.back()));
            for (std::size_t k = 1; k < path.size(); ++k) {
                const auto& ch = env->children(path[k - 1]);
                EXPECT_NE(std::find(ch.begin(), ch.end(), path[k]), ch.end());
            }
            for (NodeId n = 0; n < env->node_count(); ++n) {
                const bool in = std::find(path.begin(), path.end(), n) != path.end();
                EXPECT_EQ(env->path_contains(static_cast<int>(p), n), in);
            }
        }
    }
}

TEST(TopoOrder, RespectsEdges) {
    for (const auto& env : shipped()) {
        std::vector<int> pos(static_cast<std::size_t>(env->node_count()));
        ASSERT_EQ(env->topo_order().size(), pos.size());
        for (std::size_t i = 0; i < pos.size(); ++i) pos[static_cast<std::size_t>(env->topo_order()[i])] = static_cast<int>(i);
        for (const auto& [a, b] : env->edges()) EXPECT_LT(pos[static_cast<std::size_t>(a)], pos[static_cast<std::size_t>(b)]);
    }
}

TEST(SampleInstance, DegenerateNodeEqualsMean) {
    auto env = EnvTemplate::create({{0, 0, 0}, {1, 3.5, 0}, {2, 0, 4}}, {{0, 1}, {1, 2}}, 0, {2});
    auto inst = sample_instance(env, 42);
    EXPECT_EQ(inst.truths[1], 3.5);
    EXPECT_EQ(inst.truths[0], 0.0);
    EXPECT_FALSE(env->inspectable(1));
}

TEST(SampleInstance, MomentsOfSigma5Node) {
    auto env = fixtures::chain3(5.0);
    const int n = 100000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double t = sample_instance(env, static_cast<std::uint64_t>(i)).truths[1];
        sum += t;
        sq += t * t;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    EXPECT_NEAR(mean, 0.0, 0.1);
    EXPECT_NEAR(sd, 5.0, 0.1);
}

TEST(SampleInstance, Deterministic) {
    auto env = builtin_benchmark(3);
    EXPECT_EQ(sample_instance(env, 7).truths, sample_instance(env, 7).truths);
    EXPECT_NE(sample_instance(env, 7).truths, sample_instance(env, 8).truths);
}

TEST(BuiltinBenchmark, Sizes) {
    for (int g = 2; g <= 5; ++g) {
        auto env = builtin_benchmark(g);
        EXPECT_EQ(env->node_count(), 1 + 18 * g);
        EXPECT_EQ(static_cast<int>(env->goals().size()), g);
        for (NodeId goal : env->goals()) {
            EXPECT_GE(env->parents(goal).size(), 1u);
            EXPECT_TRUE(env->children(goal).empty());
        }
    }
    EXPECT_EQ(builtin_benchmark(2)->node_count(), 37);
    EXPECT_THROW(builtin_benchmark(1), EnvError);
    EXPECT_THROW(builtin_benchmark(6), EnvError);
}

TEST(BuiltinBenchmark, SigmaNonDecreasingAlongPaths) {
    for (int g = 2; g <= 5; ++g) {
        auto env = builtin_benchmark(g);
        for (const auto& path : env->paths()) {
            for (std::size_t k = 2; k < path.size(); ++k) {
                EXPECT_LE(env->node(path[k - 1]).sigma, env->node(path[k]).sigma);
            }
        }
    }
}

TEST(BuiltinBenchmark, UsesTheDescribedVarianceLevels) {
    auto env = builtin_benchmark(2);
    std::set<double> sigmas;
    for (NodeId n : env->inspectable_nodes()) sigmas.insert(env->node(n).sigma);
    EXPECT_EQ(sigmas, (std::set<double>{5, 10, 20, 40, 100, 120}));
}

TEST(BuiltinCurriculum, StageSizes) {
    struct Expect {
        int nodes;
        std::size_t goals;
    };
    const Expect expect[] = {{8, 1}, {16, 2}, {30, 2}, {60, 3}};
    for (int s = 1; s <= 4; ++s) {
        auto env = builtin_curriculum(s);
        EXPECT_EQ(env->node_count(), expect[s - 1].nodes) << "stage " << s;
        EXPECT_EQ(env->goals().size(), expect[s - 1].goals) << "stage " << s;
    }
    EXPECT_THROW(builtin_curriculum(0), EnvError);
    EXPECT_THROW(builtin_curriculum(5), EnvError);
}

TEST(BuiltinCurriculum, Stage4GoalsHaveUniqueBottlenecks) {
    auto env = builtin_curriculum(4);
    std::set<NodeId> bottlenecks;
    for (NodeId goal : env->goals()) {
        std::vector<int> to_goal;
        for (std::size_t p = 0; p < env->paths().size(); ++p) {
            if (env->paths()[p].back() == goal) to_goal.push_back(static_cast<int>(p));
        }
        ASSERT_FALSE(to_goal.empty());
        std::vector<NodeId> common;
        for (NodeId n = 1; n < env->node_count(); ++n) {
            if (n == goal) continue;
            const bool all = std::all_of(to_goal.begin(), to_goal.end(),
                                         [&](int p) { return env->path_contains(p, n); });
            if (all) common.push_back(n);
        }
        ASSERT_EQ(common.size(), 1u) << "goal " << goal;
        bottlenecks.insert(common[0]);
    }
    EXPECT_EQ(bottlenecks.size(), env->goals().size());
}

TEST(BuiltinCurriculum, Stage4VarianceTiers) {
    auto env = builtin_curriculum(4);
    for (NodeId goal : env->goals()) EXPECT_EQ(env->node(goal).sigma, 20.0);
    for (NodeId c : env->children(0)) EXPECT_EQ(env->node(c).sigma, 5.0);
}

TEST(BuiltinByName, Names) {
    EXPECT_EQ(builtin_by_name("g4")->node_count(), 73);
    EXPECT_EQ(builtin_by_name("exp60")->node_count(), 60);
    EXPECT_EQ(builtin_by_name("curriculum_2")->node_count(), 16);
    EXPECT_THROW(builtin_by_name("g9"), EnvError);
}
