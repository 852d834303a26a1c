#pragma once
// Knowledge-graph store: interned entities/relations, directed triplets, and
// the undirected entity view used for BFS sampling and hop distances.
//
// A KnowledgeGraph is immutable once built and safe to share read-only across
// threads. Build one with KnowledgeGraphBuilder or load_tsv().

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <type_traits>
#include <unordered_map>
#include <vector>

namespace ripple {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};
enum class TripletId : std::uint32_t {};

template <class Id>
    requires std::is_enum_v<Id>
constexpr std::size_t to_index(Id id) noexcept {
    return static_cast<std::size_t>(static_cast<std::underlying_type_t<Id>>(id));
}

template <class Id>
    requires std::is_enum_v<Id>
constexpr Id from_index(std::size_t i) noexcept {
    return static_cast<Id>(static_cast<std::underlying_type_t<Id>>(i));
}

struct Triplet {
    TripletId id{};
    EntityId subject{};
    RelationId relation{};
    EntityId object{};

    bool is_self_loop() const noexcept { return subject == object; }
    friend bool operator==(const Triplet&, const Triplet&) = default;
};

// A counterfactual edit <s, r, o> -> <s, r, o'>.
struct EditRequest {
    Triplet original;
    EntityId new_object{};
};

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    std::size_t entity_count() const noexcept { return entity_names_.size(); }
    std::size_t relation_count() const noexcept { return relation_names_.size(); }
    std::size_t triplet_count() const noexcept { return triplets_.size(); }
    bool empty() const noexcept { return triplets_.empty(); }

    const std::string& entity_name(EntityId e) const { return entity_names_.at(to_index(e)); }
    const std::string& relation_name(RelationId r) const { return relation_names_.at(to_index(r)); }
    const Triplet& triplet(TripletId t) const { return triplets_.at(to_index(t)); }
    std::span<const Triplet> triplets() const noexcept { return triplets_; }

    std::optional<EntityId> find_entity(std::string_view name) const;
    std::optional<RelationId> find_relation(std::string_view name) const;
    std::optional<TripletId> find_triplet(EntityId s, RelationId r, EntityId o) const;

    // Triplets touching an entity as subject or object, ascending by id.
    std::span<const TripletId> incident(EntityId e) const;
    // Undirected entity neighbours (self excluded), ascending by id.
    std::span<const EntityId> neighbors(EntityId e) const;
    // Distinct objects that occur with a relation, ascending by id.
    std::span<const EntityId> objects_of(RelationId r) const;

    std::size_t self_loop_count() const noexcept;

    // Subgraph holding the given triplets (in ascending original-id order).
    // Names are preserved; ids are re-indexed densely.
    KnowledgeGraph induced(std::span<const TripletId> ids) const;

private:
    friend class KnowledgeGraphBuilder;
    void index();

    std::vector<std::string> entity_names_;
    std::vector<std::string> relation_names_;
    std::vector<Triplet> triplets_;
    std::unordered_map<std::string, EntityId> entity_lookup_;
    std::unordered_map<std::string, RelationId> relation_lookup_;
    std::map<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>, TripletId> triplet_lookup_;

    // CSR adjacency.
    std::vector<std::size_t> incident_offsets_;
    std::vector<TripletId> incident_;
    std::vector<std::size_t> neighbor_offsets_;
    std::vector<EntityId> neighbors_;
    std::vector<std::vector<EntityId>> objects_by_relation_;
};

class KnowledgeGraphBuilder {
public:
    EntityId entity(std::string_view name);
    RelationId relation(std::string_view name);

    // Throws ConfigError on a duplicate (s, r, o).
    TripletId add(EntityId s, RelationId r, EntityId o);
    TripletId add(std::string_view s, std::string_view r, std::string_view o);

    bool contains(EntityId s, RelationId r, EntityId o) const;
    std::size_t triplet_count() const noexcept { return graph_.triplets_.size(); }

    KnowledgeGraph build() &&;

private:
    KnowledgeGraph graph_;
};

// ---- sampling ----------------------------------------------------------

// Triplets in BFS discovery order from a seed entity, at most `limit` of them.
// Entities are expanded in queue order; an expanded entity contributes its
// untaken incident triplets in ascending id order; newly reached entities are
// queued in that same order.
std::vector<TripletId> bfs_order(const KnowledgeGraph& kg, EntityId seed, std::size_t limit);

// Connected subgraph of min(budget, reachable) triplets around the seed.
// The frontier tie-break is fixed to entity/triplet index order, so the result
// does not depend on rng_seed; the parameter is kept so every sampler shares
// one signature.
KnowledgeGraph bfs_sample(const KnowledgeGraph& kg, EntityId seed, std::size_t triplet_budget,
                          std::uint64_t rng_seed);

std::vector<Triplet> random_sample_targets(const KnowledgeGraph& kg, std::size_t n,
                                           std::uint64_t rng_seed);

std::vector<Triplet> bfs_sample_targets(const KnowledgeGraph& kg, EntityId seed, std::size_t n,
                                        std::uint64_t rng_seed);

// Picks o' uniformly among the relation's other objects. Throws ConfigError
// ("no plausible counterfactual object") if the relation has only one object.
EditRequest make_edit_request(const KnowledgeGraph& kg, const Triplet& target,
                              std::uint64_t rng_seed);

bool is_editable(const KnowledgeGraph& kg, const Triplet& t);

// ---- hop distances -----------------------------------------------------

// Hop of a triplet = 1 + min undirected BFS distance from the source set to
// either endpoint; triplets touching a source are hop 1. nullopt = disconnected.
std::optional<int> hop_distance(const KnowledgeGraph& kg, std::span<const EntityId> sources,
                                const Triplet& to_triplet);

// Same convention for every triplet at once (one BFS).
std::vector<std::optional<int>> hop_distances(const KnowledgeGraph& kg,
                                              std::span<const EntityId> sources);

// ---- TSV i/o -----------------------------------------------------------

KnowledgeGraph read_tsv(std::istream& in, std::string_view source_name = "<stream>");
void write_tsv(const KnowledgeGraph& kg, std::ostream& out);
KnowledgeGraph load_tsv(const std::filesystem::path& path);
void save_tsv(const KnowledgeGraph& kg, const std::filesystem::path& path);

// ---- synthetic data ----------------------------------------------------

struct SyntheticSpec {
    std::size_t entities = 500;
    std::size_t relations = 30;
    std::size_t triplets = 2000;
    std::uint64_t seed = 42;
};

// Preferential-attachment KG with exactly the requested counts. The graph is
// connected, has no self-loops, and (subject, relation) pairs are unique so
// every fact is recoverable from its prompt.
KnowledgeGraph generate_synthetic_kg(const SyntheticSpec& spec);

}  // namespace ripple
