#include <array>
#include <set>
#include <string>
#include <utility>

#include "ripple/error.hpp"
#include "ripple/kgstore.hpp"
#include "ripple/rng.hpp"

namespace ripple {

namespace {

constexpr std::array<std::string_view, 16> kSyllables = {"ka", "lo", "mi", "re", "su", "ta", "ve", "no",
                                                         "zi", "pa", "do", "fu", "ri", "xo", "be", "ly"};

// Pronounceable single-token names; distinct codes give distinct names.
std::string entity_name(std::size_t code) {
    std::string name;
    std::size_t digits = 3;
    for (std::size_t cap = 16 * 16 * 16; code >= cap; cap *= 16) ++digits;
    for (std::size_t i = 0; i < digits; ++i) {
        name += kSyllables[code % 16];
        code /= 16;
    }
    name[0] = static_cast<char>(name[0] - 'a' + 'A');
    return name;
}

// Index drawn with probability proportional to degree + 1 over [0, n).
std::size_t preferential_pick(const std::vector<std::size_t>& degree, std::size_t n, Rng& rng) {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) total += degree[i] + 1;
    std::uint64_t x = uniform_index(rng, total);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t w = degree[i] + 1;
        if (x < w) return i;
        x -= w;
    }
    return n - 1;
}

}  // namespace

KnowledgeGraph generate_synthetic_kg(const SyntheticSpec& spec) {
    if (spec.entities < 2) throw ConfigError("synthetic KG needs at least 2 entities");
    if (spec.relations < 1) throw ConfigError("synthetic KG needs at least 1 relation");
    if (spec.triplets + 1 < spec.entities) {
        throw ConfigError("synthetic KG needs triplets >= entities - 1 to stay connected");
    }
    if (spec.triplets > spec.entities * spec.relations / 2) {
        throw ConfigError("synthetic KG is too dense for unique (subject, relation) pairs");
    }

    Rng rng(derive_seed(spec.seed, "synthetic-kg"));

    // Shuffle name codes so names carry no information about degree.
    std::vector<std::size_t> codes(spec.entities);
    for (std::size_t i = 0; i < codes.size(); ++i) codes[i] = i;
    shuffle(codes, rng);

    KnowledgeGraphBuilder b;
    std::vector<EntityId> ents;
    ents.reserve(spec.entities);
    for (std::size_t i = 0; i < spec.entities; ++i) ents.push_back(b.entity(entity_name(codes[i])));
    std::vector<RelationId> rels;
    for (std::size_t r = 0; r < spec.relations; ++r) rels.push_back(b.relation("rel_" + std::to_string(r)));

    std::vector<std::size_t> degree(spec.entities, 0);
    std::set<std::pair<std::size_t, std::size_t>> subject_relation;

    // Spanning tree: each newcomer points at an existing, preferentially chosen hub.
    for (std::size_t i = 1; i < spec.entities; ++i) {
        const std::size_t hub = preferential_pick(degree, i, rng);
        const std::size_t r = uniform_index(rng, spec.relations);
        b.add(ents[i], rels[r], ents[hub]);
        subject_relation.emplace(i, r);
        ++degree[i];
        ++degree[hub];
    }

    const std::size_t max_attempts = 1000 * spec.triplets + 1000;
    std::size_t attempts = 0;
    while (b.triplet_count() < spec.triplets) {
        if (++attempts > max_attempts) throw Error("synthetic KG generator failed to place all triplets");
        const std::size_t s = uniform_index(rng, spec.entities);
        const std::size_t o = preferential_pick(degree, spec.entities, rng);
        const std::size_t r = uniform_index(rng, spec.relations);
        if (s == o || subject_relation.contains({s, r})) continue;
        b.add(ents[s], rels[r], ents[o]);
        subject_relation.emplace(s, r);
        ++degree[s];
        ++degree[o];
    }
    return std::move(b).build();
}

}  // namespace ripple
