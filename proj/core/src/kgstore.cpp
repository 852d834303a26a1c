#include "ripple/kgstore.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "ripple/error.hpp"
#include "ripple/rng.hpp"

namespace ripple {

namespace {

auto triple_key(EntityId s, RelationId r, EntityId o) {
    return std::tuple{static_cast<std::uint32_t>(to_index(s)), static_cast<std::uint32_t>(to_index(r)),
                      static_cast<std::uint32_t>(to_index(o))};
}

void require_entity(const KnowledgeGraph& kg, EntityId e) {
    if (to_index(e) >= kg.entity_count()) {
        throw ConfigError("unknown entity id " + std::to_string(to_index(e)));
    }
}

}  // namespace

// ---- KnowledgeGraph --------------------------------------------------------

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view name) const {
    auto it = entity_lookup_.find(std::string(name));
    if (it == entity_lookup_.end()) return std::nullopt;
    return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view name) const {
    auto it = relation_lookup_.find(std::string(name));
    if (it == relation_lookup_.end()) return std::nullopt;
    return it->second;
}

std::optional<TripletId> KnowledgeGraph::find_triplet(EntityId s, RelationId r, EntityId o) const {
    auto it = triplet_lookup_.find(triple_key(s, r, o));
    if (it == triplet_lookup_.end()) return std::nullopt;
    return it->second;
}

std::span<const TripletId> KnowledgeGraph::incident(EntityId e) const {
    const auto i = to_index(e);
    if (i >= entity_count()) return {};
    return std::span(incident_).subspan(incident_offsets_[i], incident_offsets_[i + 1] - incident_offsets_[i]);
}

std::span<const EntityId> KnowledgeGraph::neighbors(EntityId e) const {
    const auto i = to_index(e);
    if (i >= entity_count()) return {};
    return std::span(neighbors_).subspan(neighbor_offsets_[i], neighbor_offsets_[i + 1] - neighbor_offsets_[i]);
}

std::span<const EntityId> KnowledgeGraph::objects_of(RelationId r) const {
    const auto i = to_index(r);
    if (i >= objects_by_relation_.size()) return {};
    return objects_by_relation_[i];
}

std::size_t KnowledgeGraph::self_loop_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(triplets_.begin(), triplets_.end(), [](const Triplet& t) { return t.is_self_loop(); }));
}

void KnowledgeGraph::index() {
    const std::size_t n = entity_count();

    std::vector<std::vector<TripletId>> inc(n);
    std::vector<std::vector<EntityId>> nbr(n);
    objects_by_relation_.assign(relation_count(), {});
    for (const auto& t : triplets_) {
        inc[to_index(t.subject)].push_back(t.id);
        if (!t.is_self_loop()) {
            inc[to_index(t.object)].push_back(t.id);
            nbr[to_index(t.subject)].push_back(t.object);
            nbr[to_index(t.object)].push_back(t.subject);
        }
        objects_by_relation_[to_index(t.relation)].push_back(t.object);
    }

    incident_offsets_.assign(n + 1, 0);
    neighbor_offsets_.assign(n + 1, 0);
    incident_.clear();
    neighbors_.clear();
    for (std::size_t i = 0; i < n; ++i) {
        // Triplets are appended in id order, so inc[i] is already sorted.
        incident_.insert(incident_.end(), inc[i].begin(), inc[i].end());
        incident_offsets_[i + 1] = incident_.size();

        auto& nb = nbr[i];
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
        neighbors_.insert(neighbors_.end(), nb.begin(), nb.end());
        neighbor_offsets_[i + 1] = neighbors_.size();
    }
    for (auto& objs : objects_by_relation_) {
        std::sort(objs.begin(), objs.end());
        objs.erase(std::unique(objs.begin(), objs.end()), objs.end());
    }
}

KnowledgeGraph KnowledgeGraph::induced(std::span<const TripletId> ids) const {
    std::vector<TripletId> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    KnowledgeGraphBuilder b;
    for (TripletId id : sorted) {
        const auto& t = triplet(id);
        b.add(entity_name(t.subject), relation_name(t.relation), entity_name(t.object));
    }
    return std::move(b).build();
}

// ---- builder ---------------------------------------------------------------

EntityId KnowledgeGraphBuilder::entity(std::string_view name) {
    if (name.empty()) throw ConfigError("entity name must be non-empty");
    auto [it, inserted] = graph_.entity_lookup_.try_emplace(std::string(name),
                                                            from_index<EntityId>(graph_.entity_names_.size()));
    if (inserted) graph_.entity_names_.emplace_back(name);
    return it->second;
}

RelationId KnowledgeGraphBuilder::relation(std::string_view name) {
    if (name.empty()) throw ConfigError("relation name must be non-empty");
    auto [it, inserted] = graph_.relation_lookup_.try_emplace(std::string(name),
                                                              from_index<RelationId>(graph_.relation_names_.size()));
    if (inserted) graph_.relation_names_.emplace_back(name);
    return it->second;
}

bool KnowledgeGraphBuilder::contains(EntityId s, RelationId r, EntityId o) const {
    return graph_.triplet_lookup_.contains(triple_key(s, r, o));
}

TripletId KnowledgeGraphBuilder::add(EntityId s, RelationId r, EntityId o) {
    if (to_index(s) >= graph_.entity_names_.size() || to_index(o) >= graph_.entity_names_.size() ||
        to_index(r) >= graph_.relation_names_.size()) {
        throw ConfigError("triplet references an unknown entity or relation");
    }
    const auto id = from_index<TripletId>(graph_.triplets_.size());
    auto [it, inserted] = graph_.triplet_lookup_.try_emplace(triple_key(s, r, o), id);
    if (!inserted) {
        throw ConfigError("duplicate triplet <" + graph_.entity_names_[to_index(s)] + ", " +
                          graph_.relation_names_[to_index(r)] + ", " + graph_.entity_names_[to_index(o)] + ">");
    }
    graph_.triplets_.push_back(Triplet{id, s, r, o});
    return id;
}

TripletId KnowledgeGraphBuilder::add(std::string_view s, std::string_view r, std::string_view o) {
    const EntityId se = entity(s);
    const RelationId re = relation(r);
    const EntityId oe = entity(o);
    return add(se, re, oe);
}

KnowledgeGraph KnowledgeGraphBuilder::build() && {
    graph_.index();
    return std::move(graph_);
}

// ---- sampling --------------------------------------------------------------

std::vector<TripletId> bfs_order(const KnowledgeGraph& kg, EntityId seed, std::size_t limit) {
    require_entity(kg, seed);
    std::vector<TripletId> order;
    std::vector<char> taken(kg.triplet_count(), 0);
    std::vector<char> seen(kg.entity_count(), 0);
    std::deque<EntityId> queue{seed};
    seen[to_index(seed)] = 1;

    while (!queue.empty() && order.size() < limit) {
        const EntityId u = queue.front();
        queue.pop_front();
        for (TripletId tid : kg.incident(u)) {
            if (order.size() >= limit) break;
            if (taken[to_index(tid)]) continue;
            taken[to_index(tid)] = 1;
            order.push_back(tid);
            const auto& t = kg.triplet(tid);
            const EntityId other = t.subject == u ? t.object : t.subject;
            if (!seen[to_index(other)]) {
                seen[to_index(other)] = 1;
                queue.push_back(other);
            }
        }
    }
    return order;
}

KnowledgeGraph bfs_sample(const KnowledgeGraph& kg, EntityId seed, std::size_t triplet_budget,
                          std::uint64_t /*rng_seed*/) {
    if (triplet_budget == 0) throw ConfigError("bfs_sample: triplet budget must be >= 1");
    const auto order = bfs_order(kg, seed, triplet_budget);
    return kg.induced(order);
}

std::vector<Triplet> random_sample_targets(const KnowledgeGraph& kg, std::size_t n, std::uint64_t rng_seed) {
    if (n > kg.triplet_count()) {
        throw ConfigError("random_sample_targets: requested " + std::to_string(n) + " of " +
                          std::to_string(kg.triplet_count()) + " triplets");
    }
    std::vector<Triplet> all(kg.triplets().begin(), kg.triplets().end());
    Rng rng(rng_seed);
    // Partial Fisher-Yates: the first n slots are a uniform sample without replacement.
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, all.size() - i));
        std::swap(all[i], all[j]);
    }
    all.resize(n);
    return all;
}

std::vector<Triplet> bfs_sample_targets(const KnowledgeGraph& kg, EntityId seed, std::size_t n,
                                        std::uint64_t /*rng_seed*/) {
    std::vector<Triplet> out;
    if (n == 0) {
        require_entity(kg, seed);
        return out;
    }
    for (TripletId id : bfs_order(kg, seed, n)) out.push_back(kg.triplet(id));
    return out;
}

bool is_editable(const KnowledgeGraph& kg, const Triplet& t) {
    return kg.objects_of(t.relation).size() >= 2;
}

EditRequest make_edit_request(const KnowledgeGraph& kg, const Triplet& target, std::uint64_t rng_seed) {
    std::vector<EntityId> candidates;
    for (EntityId o : kg.objects_of(target.relation)) {
        if (o != target.object) candidates.push_back(o);
    }
    if (candidates.empty()) {
        throw ConfigError("no plausible counterfactual object for relation '" + kg.relation_name(target.relation) +
                          "'");
    }
    Rng rng(rng_seed);
    return EditRequest{target, candidates[uniform_index(rng, candidates.size())]};
}

// ---- hop distances ---------------------------------------------------------

namespace {

std::vector<int> entity_distances(const KnowledgeGraph& kg, std::span<const EntityId> sources) {
    constexpr int kUnreached = std::numeric_limits<int>::max();
    std::vector<int> dist(kg.entity_count(), kUnreached);
    std::deque<EntityId> queue;
    for (EntityId s : sources) {
        if (to_index(s) >= kg.entity_count() || dist[to_index(s)] == 0) continue;
        dist[to_index(s)] = 0;
        queue.push_back(s);
    }
    while (!queue.empty()) {
        const EntityId u = queue.front();
        queue.pop_front();
        for (EntityId v : kg.neighbors(u)) {
            if (dist[to_index(v)] == kUnreached) {
                dist[to_index(v)] = dist[to_index(u)] + 1;
                queue.push_back(v);
            }
        }
    }
    return dist;
}

std::optional<int> triplet_hop(const std::vector<int>& dist, const Triplet& t) {
    const int d = std::min(dist[to_index(t.subject)], dist[to_index(t.object)]);
    if (d == std::numeric_limits<int>::max()) return std::nullopt;
    return d + 1;
}

}  // namespace

std::optional<int> hop_distance(const KnowledgeGraph& kg, std::span<const EntityId> sources,
                                const Triplet& to_triplet) {
    return triplet_hop(entity_distances(kg, sources), to_triplet);
}

std::vector<std::optional<int>> hop_distances(const KnowledgeGraph& kg, std::span<const EntityId> sources) {
    const auto dist = entity_distances(kg, sources);
    std::vector<std::optional<int>> hops;
    hops.reserve(kg.triplet_count());
    for (const auto& t : kg.triplets()) hops.push_back(triplet_hop(dist, t));
    return hops;
}

// ---- TSV -------------------------------------------------------------------

KnowledgeGraph read_tsv(std::istream& in, std::string_view source_name) {
    KnowledgeGraphBuilder b;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::vector<std::string> cols;
        std::size_t start = 0;
        for (;;) {
            const auto tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        const auto where = std::string(source_name) + ":" + std::to_string(line_no);
        if (cols.size() != 3) {
            throw ConfigError(where + ": expected 3 tab-separated columns, got " + std::to_string(cols.size()));
        }
        for (const auto& c : cols) {
            if (c.empty()) throw ConfigError(where + ": empty column");
        }
        try {
            b.add(cols[0], cols[1], cols[2]);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    return std::move(b).build();
}

void write_tsv(const KnowledgeGraph& kg, std::ostream& out) {
    for (const auto& t : kg.triplets()) {
        out << kg.entity_name(t.subject) << '\t' << kg.relation_name(t.relation) << '\t'
            << kg.entity_name(t.object) << '\n';
    }
}

KnowledgeGraph load_tsv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return read_tsv(in, path.string());
}

void save_tsv(const KnowledgeGraph& kg, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    write_tsv(kg, out);
}

}  // namespace ripple
