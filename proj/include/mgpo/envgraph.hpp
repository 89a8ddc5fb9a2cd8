#ifndef MGPO_ENVGRAPH_HPP
#define MGPO_ENVGRAPH_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgpo/rng.hpp"

namespace mgpo {

using NodeId = int;
using Path = std::vector<NodeId>;

class EnvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NodeSpec {
    NodeId id = 0;
    double mean = 0.0;
    double sigma = 0.0;
};

using Edge = std::pair<NodeId, NodeId>;

// Object-level planning problem: a DAG whose nodes carry independent Gaussian
// reward priors. Immutable after construction; all start-to-goal paths are
// enumerated once and cached together with per-node path partitions.
class EnvTemplate {
public:
    static std::shared_ptr<const EnvTemplate> create(std::vector<NodeSpec> nodes,
                                                     std::vector<Edge> edges,
                                                     NodeId start,
                                                     std::vector<NodeId> goals,
                                                     std::string name = {}) {
        auto t = std::shared_ptr<EnvTemplate>(new EnvTemplate());
        t->name_ = std::move(name);
        t->build(std::move(nodes), std::move(edges), start, std::move(goals));
        return t;
    }

    const std::string& name() const { return name_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    NodeId start() const { return start_; }
    const std::vector<NodeId>& goals() const { return goals_; }
    bool is_goal(NodeId n) const { return is_goal_[static_cast<std::size_t>(n)]; }
    const NodeSpec& node(NodeId n) const { return nodes_[static_cast<std::size_t>(n)]; }
    const std::vector<NodeSpec>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<NodeId>& children(NodeId n) const { return children_[static_cast<std::size_t>(n)]; }
    const std::vector<NodeId>& parents(NodeId n) const { return parents_[static_cast<std::size_t>(n)]; }

    // Shortest edge distance from the start node.
    int depth(NodeId n) const { return depth_[static_cast<std::size_t>(n)]; }

    // A node can be inspected iff it is not the start and its prior is not degenerate.
    bool inspectable(NodeId n) const {
        return n != start_ && nodes_[static_cast<std::size_t>(n)].sigma > 0.0;
    }
    const std::vector<NodeId>& inspectable_nodes() const { return inspectable_; }

    // Nodes in topological order (Kahn's algorithm, smallest id first).
    const std::vector<NodeId>& topo_order() const { return topo_; }

    const std::vector<Path>& paths() const { return paths_; }
    // Indices into paths() of every path that visits the node.
    const std::vector<int>& paths_through(NodeId n) const { return paths_through_[static_cast<std::size_t>(n)]; }
    bool path_contains(int path_index, NodeId n) const {
        const auto& mask = path_masks_[static_cast<std::size_t>(path_index)];
        return (mask[static_cast<std::size_t>(n) / 64] >> (static_cast<unsigned>(n) % 64)) & 1ULL;
    }

private:
    EnvTemplate() = default;

    void build(std::vector<NodeSpec> nodes, std::vector<Edge> edges, NodeId start, std::vector<NodeId> goals) {
        const int n = static_cast<int>(nodes.size());
        if (n == 0) {
            throw EnvError("environment has no nodes");
        }
        std::vector<bool> seen(static_cast<std::size_t>(n), false);
        for (const auto& spec : nodes) {
            if (spec.id < 0 || spec.id >= n) {
                throw EnvError("node id " + std::to_string(spec.id) + " outside dense range [0, " +
                               std::to_string(n) + ")");
            }
            if (seen[static_cast<std::size_t>(spec.id)]) {
                throw EnvError("duplicate node id " + std::to_string(spec.id));
            }
            if (!(spec.sigma >= 0.0)) {
                throw EnvError("node " + std::to_string(spec.id) + " has negative sigma");
            }
            seen[static_cast<std::size_t>(spec.id)] = true;
        }
        std::sort(nodes.begin(), nodes.end(), [](const NodeSpec& a, const NodeSpec& b) { return a.id < b.id; });
        nodes_ = std::move(nodes);

        if (start != 0) {
            throw EnvError("start node must be node 0, got " + std::to_string(start));
        }
        start_ = start;
        if (nodes_[0].mean != 0.0 || nodes_[0].sigma != 0.0) {
            throw EnvError("start node 0 must have mean 0 and sigma 0");
        }

        children_.assign(static_cast<std::size_t>(n), {});
        parents_.assign(static_cast<std::size_t>(n), {});
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const auto [from, to] = edges[e];
            if (from < 0 || from >= n || to < 0 || to >= n) {
                throw EnvError("edge #" + std::to_string(e) + " (" + std::to_string(from) + "->" +
                               std::to_string(to) + ") references an unknown node");
            }
            if (from == to) {
                throw EnvError("cycle detected: self-loop on node " + std::to_string(from));
            }
            auto& ch = children_[static_cast<std::size_t>(from)];
            if (std::find(ch.begin(), ch.end(), to) != ch.end()) {
                throw EnvError("duplicate edge " + std::to_string(from) + "->" + std::to_string(to));
            }
            ch.push_back(to);
            parents_[static_cast<std::size_t>(to)].push_back(from);
        }
        for (auto& ch : children_) std::sort(ch.begin(), ch.end());
        for (auto& pa : parents_) std::sort(pa.begin(), pa.end());
        edges_ = std::move(edges);

        check_acyclic();

        is_goal_.assign(static_cast<std::size_t>(n), false);
        if (goals.empty()) {
            throw EnvError("environment has no goal nodes");
        }
        for (NodeId g : goals) {
            if (g < 0 || g >= n) {
                throw EnvError("goal " + std::to_string(g) + " is not a node");
            }
            if (g == start_) {
                throw EnvError("start node cannot be a goal");
            }
            if (!children_[static_cast<std::size_t>(g)].empty()) {
                throw EnvError("goal node " + std::to_string(g) + " has outgoing edges");
            }
            if (is_goal_[static_cast<std::size_t>(g)]) {
                throw EnvError("duplicate goal " + std::to_string(g));
            }
            is_goal_[static_cast<std::size_t>(g)] = true;
        }
        std::sort(goals.begin(), goals.end());
        goals_ = std::move(goals);

        compute_topo_order();
        compute_depths();
        for (NodeId g : goals_) {
            if (depth_[static_cast<std::size_t>(g)] < 0) {
                throw EnvError("goal node " + std::to_string(g) + " is unreachable from start");
            }
        }
        for (NodeId v = 0; v < n; ++v) {
            if (depth_[static_cast<std::size_t>(v)] < 0) {
                throw EnvError("node " + std::to_string(v) + " is unreachable from start");
            }
            if (!is_goal_[static_cast<std::size_t>(v)] && children_[static_cast<std::size_t>(v)].empty()) {
                throw EnvError("node " + std::to_string(v) + " is a dead end (no children, not a goal)");
            }
        }

        for (NodeId v = 0; v < n; ++v) {
            if (inspectable(v)) inspectable_.push_back(v);
        }
        enumerate();
    }

    void check_acyclic() const {
        // Iterative three-colour DFS; reports the back edge that closes a cycle.
        const std::size_t n = nodes_.size();
        std::vector<int> colour(n, 0);
        for (std::size_t root = 0; root < n; ++root) {
            if (colour[root] != 0) continue;
            std::vector<std::pair<NodeId, std::size_t>> stack{{static_cast<NodeId>(root), 0}};
            colour[root] = 1;
            while (!stack.empty()) {
                auto& [v, next] = stack.back();
                const auto& ch = children_[static_cast<std::size_t>(v)];
                if (next < ch.size()) {
                    const NodeId w = ch[next++];
                    if (colour[static_cast<std::size_t>(w)] == 1) {
                        throw EnvError("cycle detected at edge " + std::to_string(v) + "->" + std::to_string(w));
                    }
                    if (colour[static_cast<std::size_t>(w)] == 0) {
                        colour[static_cast<std::size_t>(w)] = 1;
                        stack.emplace_back(w, 0);
                    }
                } else {
                    colour[static_cast<std::size_t>(v)] = 2;
                    stack.pop_back();
                }
            }
        }
    }

    void compute_topo_order() {
        std::vector<int> indegree(nodes_.size(), 0);
        for (std::size_t v = 0; v < nodes_.size(); ++v) indegree[v] = static_cast<int>(parents_[v].size());
        std::vector<NodeId> ready;
        for (std::size_t v = 0; v < nodes_.size(); ++v) {
            if (indegree[v] == 0) ready.push_back(static_cast<NodeId>(v));
        }
        std::make_heap(ready.begin(), ready.end(), std::greater<>());
        topo_.clear();
        while (!ready.empty()) {
            std::pop_heap(ready.begin(), ready.end(), std::greater<>());
            const NodeId v = ready.back();
            ready.pop_back();
            topo_.push_back(v);
            for (NodeId w : children_[static_cast<std::size_t>(v)]) {
                if (--indegree[static_cast<std::size_t>(w)] == 0) {
                    ready.push_back(w);
                    std::push_heap(ready.begin(), ready.end(), std::greater<>());
                }
            }
        }
    }

    void compute_depths() {
        depth_.assign(nodes_.size(), -1);
        std::vector<NodeId> frontier{start_};
        depth_[static_cast<std::size_t>(start_)] = 0;
        for (std::size_t head = 0; head < frontier.size(); ++head) {
            const NodeId v = frontier[head];
            for (NodeId w : children_[static_cast<std::size_t>(v)]) {
                if (depth_[static_cast<std::size_t>(w)] < 0) {
                    depth_[static_cast<std::size_t>(w)] = depth_[static_cast<std::size_t>(v)] + 1;
                    frontier.push_back(w);
                }
            }
        }
    }

    void enumerate() {
        // Children are sorted, so DFS emits paths in lexicographic order.
        Path current{start_};
        std::vector<std::size_t> cursor{0};
        while (!current.empty()) {
            const NodeId v = current.back();
            const auto& ch = children_[static_cast<std::size_t>(v)];
            if (is_goal_[static_cast<std::size_t>(v)] && cursor.back() == 0) {
                paths_.push_back(current);
            }
            if (cursor.back() < ch.size()) {
                const NodeId w = ch[cursor.back()++];
                current.push_back(w);
                cursor.push_back(0);
            } else {
                current.pop_back();
                cursor.pop_back();
            }
        }
        const std::size_t words = (nodes_.size() + 63) / 64;
        paths_through_.assign(nodes_.size(), {});
        path_masks_.assign(paths_.size(), std::vector<std::uint64_t>(words, 0));
        for (std::size_t p = 0; p < paths_.size(); ++p) {
            for (NodeId v : paths_[p]) {
                paths_through_[static_cast<std::size_t>(v)].push_back(static_cast<int>(p));
                path_masks_[p][static_cast<std::size_t>(v) / 64] |= 1ULL << (static_cast<unsigned>(v) % 64);
            }
        }
    }

    std::string name_;
    std::vector<NodeSpec> nodes_;
    std::vector<Edge> edges_;
    NodeId start_ = 0;
    std::vector<NodeId> goals_;
    std::vector<bool> is_goal_;
    std::vector<std::vector<NodeId>> children_;
    std::vector<std::vector<NodeId>> parents_;
    std::vector<int> depth_;
    std::vector<NodeId> topo_;
    std::vector<NodeId> inspectable_;
    std::vector<Path> paths_;
    std::vector<std::vector<int>> paths_through_;
    std::vector<std::vector<std::uint64_t>> path_masks_;
};

using TemplatePtr = std::shared_ptr<const EnvTemplate>;

inline const std::vector<Path>& enumerate_paths(const EnvTemplate& env) { return env.paths(); }

// ---------------------------------------------------------------------------
// Environment files

inline TemplatePtr template_from_json(const nlohmann::json& doc, std::string name = {}) {
    if (!doc.is_object()) {
        throw EnvError("environment document must be a JSON object");
    }
    for (const char* key : {"nodes", "edges", "start", "goals"}) {
        if (!doc.contains(key)) {
            throw EnvError(std::string("environment document is missing key '") + key + "'");
        }
    }
    std::vector<NodeSpec> nodes;
    std::size_t index = 0;
    for (const auto& item : doc.at("nodes")) {
        try {
            nodes.push_back({item.at("id").get<int>(), item.at("mean").get<double>(), item.at("sigma").get<double>()});
        } catch (const nlohmann::json::exception& e) {
            throw EnvError("nodes[" + std::to_string(index) + "]: " + e.what());
        }
        ++index;
    }
    std::vector<Edge> edges;
    index = 0;
    for (const auto& item : doc.at("edges")) {
        if (!item.is_array() || item.size() != 2) {
            throw EnvError("edges[" + std::to_string(index) + "] must be a [from, to] pair");
        }
        edges.emplace_back(item[0].get<int>(), item[1].get<int>());
        ++index;
    }
    std::vector<NodeId> goals = doc.at("goals").get<std::vector<NodeId>>();
    if (name.empty() && doc.contains("name")) {
        name = doc.at("name").get<std::string>();
    }
    return EnvTemplate::create(std::move(nodes), std::move(edges), doc.at("start").get<int>(), std::move(goals),
                               std::move(name));
}

inline TemplatePtr load_template(std::string_view text, std::string name = {}) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw EnvError(std::string("parse error: ") + e.what());
    }
    try {
        return template_from_json(doc, std::move(name));
    } catch (const nlohmann::json::exception& e) {
        throw EnvError(std::string("schema error: ") + e.what());
    }
}

inline TemplatePtr load_template_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw EnvError("cannot open environment file " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return load_template(buffer.str());
}

inline nlohmann::json template_to_json(const EnvTemplate& env) {
    nlohmann::json doc;
    if (!env.name().empty()) doc["name"] = env.name();
    doc["nodes"] = nlohmann::json::array();
    for (const auto& n : env.nodes()) {
        doc["nodes"].push_back({{"id", n.id}, {"mean", n.mean}, {"sigma", n.sigma}});
    }
    doc["edges"] = nlohmann::json::array();
    for (const auto& [from, to] : env.edges()) {
        doc["edges"].push_back({from, to});
    }
    doc["start"] = env.start();
    doc["goals"] = env.goals();
    return doc;
}

// ---------------------------------------------------------------------------
// Instances

struct EnvInstance {
    TemplatePtr env;
    std::vector<double> truths;
    std::uint64_t seed = 0;
};

// Ground-truth rewards t_i ~ N(mean_i, sigma_i), one stream per node so that
// a template edit on one node does not reshuffle the others.
inline EnvInstance sample_instance(TemplatePtr env, std::uint64_t seed) {
    EnvInstance inst;
    inst.seed = seed;
    inst.truths.resize(static_cast<std::size_t>(env->node_count()), 0.0);
    for (const auto& n : env->nodes()) {
        if (n.sigma == 0.0) {
            inst.truths[static_cast<std::size_t>(n.id)] = n.mean;
            continue;
        }
        SplitMix64 gen(derive_seed({seed, 0x7472757468ULL, static_cast<std::uint64_t>(n.id)}));
        inst.truths[static_cast<std::size_t>(n.id)] = n.mean + n.sigma * standard_normal(gen);
    }
    inst.env = std::move(env);
    return inst;
}

inline double path_truth(const EnvInstance& inst, const Path& path) {
    double total = 0.0;
    for (NodeId v : path) total += inst.truths[static_cast<std::size_t>(v)];
    return total;
}

// ---------------------------------------------------------------------------
// Shipped templates

namespace detail {

struct Layer {
    int count;
    double sigma;
};

// Appends a block of fully connected consecutive layers below `parent_layer`.
// Returns the id of the block's last node (the goal when the last layer has size 1).
inline std::vector<NodeId> append_block(std::vector<NodeSpec>& nodes, std::vector<Edge>& edges,
                                        const std::vector<NodeId>& parent_layer, const std::vector<Layer>& layers) {
    std::vector<NodeId> previous = parent_layer;
    for (const auto& layer : layers) {
        std::vector<NodeId> current;
        for (int k = 0; k < layer.count; ++k) {
            const NodeId id = static_cast<NodeId>(nodes.size());
            nodes.push_back({id, 0.0, layer.sigma});
            current.push_back(id);
        }
        for (NodeId from : previous) {
            for (NodeId to : current) edges.emplace_back(from, to);
        }
        previous = std::move(current);
    }
    return previous;
}

inline TemplatePtr build_blocks(const std::vector<std::vector<Layer>>& blocks, std::string name) {
    std::vector<NodeSpec> nodes{{0, 0.0, 0.0}};
    std::vector<Edge> edges;
    std::vector<NodeId> goals;
    for (const auto& block : blocks) {
        const auto last = append_block(nodes, edges, {0}, block);
        goals.insert(goals.end(), last.begin(), last.end());
    }
    return EnvTemplate::create(std::move(nodes), std::move(edges), 0, std::move(goals), std::move(name));
}

} // namespace detail

// Simulation benchmark: `goal_count` blocks of 18 nodes. Each block is
// three early layers, a bottleneck, two late layers and a goal, with reward
// sigma growing with depth and the goals carrying the two high-variance priors.
inline TemplatePtr builtin_benchmark(int goal_count) {
    if (goal_count < 2 || goal_count > 5) {
        throw EnvError("benchmark goal count must be in 2..5, got " + std::to_string(goal_count));
    }
    std::vector<std::vector<detail::Layer>> blocks;
    for (int g = 0; g < goal_count; ++g) {
        const double goal_sigma = (g % 2 == 0) ? 100.0 : 120.0;
        blocks.push_back({{4, 5.0}, {4, 5.0}, {4, 10.0}, {1, 10.0}, {2, 20.0}, {2, 40.0}, {1, goal_sigma}});
    }
    return detail::build_blocks(blocks, "g" + std::to_string(goal_count));
}

// Training curriculum. Stage 4 is the full 60-node experiment environment:
// near-root nodes N(0,5), a bottleneck subgoal and intermediate nodes N(0,10),
// and final goals N(0,20).
inline TemplatePtr builtin_curriculum(int stage) {
    using detail::Layer;
    switch (stage) {
    case 1:
        return detail::build_blocks({{{2, 5.0}, {1, 10.0}, {3, 10.0}, {1, 20.0}}}, "curriculum_1");
    case 2:
        return detail::build_blocks({{{2, 5.0}, {1, 10.0}, {3, 10.0}, {1, 20.0}},
                                     {{3, 5.0}, {1, 10.0}, {3, 10.0}, {1, 20.0}}},
                                    "curriculum_2");
    case 3:
        return detail::build_blocks({{{3, 5.0}, {3, 5.0}, {1, 10.0}, {3, 10.0}, {3, 10.0}, {1, 20.0}},
                                     {{3, 5.0}, {3, 5.0}, {1, 10.0}, {4, 10.0}, {3, 10.0}, {1, 20.0}}},
                                    "curriculum_3");
    case 4:
        return detail::build_blocks({{{4, 5.0}, {4, 5.0}, {1, 10.0}, {5, 10.0}, {5, 10.0}, {1, 20.0}},
                                     {{4, 5.0}, {4, 5.0}, {1, 10.0}, {5, 10.0}, {5, 10.0}, {1, 20.0}},
                                     {{4, 5.0}, {4, 5.0}, {1, 10.0}, {4, 10.0}, {5, 10.0}, {1, 20.0}}},
                                    "curriculum_4");
    default:
        throw EnvError("curriculum stage must be in 1..4, got " + std::to_string(stage));
    }
}

// Resolves the short names used by the CLI and the service: g2..g5, exp60,
// curriculum_1..curriculum_4.
inline TemplatePtr builtin_by_name(std::string_view name) {
    if (name.size() == 2 && name[0] == 'g' && name[1] >= '2' && name[1] <= '5') {
        return builtin_benchmark(name[1] - '0');
    }
    if (name == "exp60") {
        return builtin_curriculum(4);
    }
    constexpr std::string_view prefix = "curriculum_";
    if (name.size() == prefix.size() + 1 && name.substr(0, prefix.size()) == prefix) {
        return builtin_curriculum(name.back() - '0');
    }
    throw EnvError("unknown environment name '" + std::string(name) + "'");
}

} // namespace mgpo

#endif // MGPO_ENVGRAPH_HPP
