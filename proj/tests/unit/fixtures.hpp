#pragma once
// Small graphs and models shared by the unit tests.

#include <memory>
#include <string>
#include <vector>

#include "ripple/editors.hpp"
#include "ripple/kgstore.hpp"
#include "ripple/templates.hpp"
#include "ripple/tinylm.hpp"

namespace fixtures {

// a-b-c-d-e-f chained by relation "next" (5 triplets, ids in path order).
inline ripple::KnowledgeGraph path_graph(int nodes = 6) {
    ripple::KnowledgeGraphBuilder b;
    for (int i = 0; i + 1 < nodes; ++i) {
        b.add(std::string(1, static_cast<char>('a' + i)), "next", std::string(1, static_cast<char>('a' + i + 1)));
    }
    return std::move(b).build();
}

inline ripple::EntityId entity(const ripple::KnowledgeGraph& kg, const std::string& name) {
    return kg.find_entity(name).value();
}

inline ripple::LmConfig tiny_config(std::size_t d = 8, std::size_t h = 12, std::size_t c = 3) {
    ripple::LmConfig cfg;
    cfg.context = c;
    cfg.embed_dim = d;
    cfg.hidden_dim = h;
    cfg.batch_size = 8;
    return cfg;
}

// Vocabulary and training sentences from template 0 of every triplet.
struct Corpus {
    std::shared_ptr<const ripple::Vocab> vocab;
    std::vector<ripple::PromptedFact> facts;
    std::vector<ripple::Sequence> sequences;
};

inline Corpus corpus_for(const ripple::KnowledgeGraph& kg, const ripple::TemplateTable& templates) {
    Corpus c;
    c.facts = ripple::render_all(kg, templates, 0);
    std::vector<std::string> texts;
    for (const auto& f : c.facts) texts.push_back(f.sentence);
    c.vocab = std::make_shared<const ripple::Vocab>(ripple::Vocab::build(texts));
    for (const auto& f : c.facts) c.sequences.push_back(ripple::make_sequence(*c.vocab, f.sentence));
    return c;
}

// A briefly trained model over a KG; deterministic for a given seed.
inline ripple::ModelSnapshot trained_model(const ripple::KnowledgeGraph& kg, const ripple::TemplateTable& templates,
                                           std::size_t epochs, std::uint64_t seed = 5,
                                           ripple::LmConfig cfg = tiny_config(16, 24, 4)) {
    const auto corpus = corpus_for(kg, templates);
    cfg.max_epochs = epochs;
    cfg.seed = seed;
    auto result = ripple::train(ripple::LmParams::random(cfg, corpus.vocab->size(), seed), corpus.sequences, cfg);
    return ripple::ModelSnapshot(cfg, corpus.vocab, std::move(result.params), "fixture");
}

// A small connected KG where each relation has several objects, so every
// triplet is editable.
inline ripple::KnowledgeGraph small_kg(std::uint64_t seed = 3, std::size_t triplets = 40, std::size_t entities = 30) {
    ripple::SyntheticSpec spec;
    spec.entities = entities;
    spec.relations = 5;
    spec.triplets = triplets;
    spec.seed = seed;
    return ripple::generate_synthetic_kg(spec);
}

}  // namespace fixtures
