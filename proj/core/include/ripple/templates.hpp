#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ripple/kgstore.hpp"

namespace ripple {

// A rendered fact. `prefix` never contains the object; the full sentence is
// prefix + " " + object name.
struct PromptedFact {
    TripletId triplet{};
    std::string prefix;
    std::string sentence;
};

// relation name -> template strings with a "{s}" subject placeholder.
// Relations without an entry use generic fallback templates when allowed.
class TemplateTable {
public:
    static constexpr std::size_t kMinTemplates = 3;

    // Built-in English templates for a handful of common Wikidata relations,
    // fallback enabled.
    static TemplateTable builtin();

    explicit TemplateTable(bool allow_fallback = true) : allow_fallback_(allow_fallback) {}

    // Throws ConfigError if a template lacks "{s}" or fewer than kMinTemplates are given.
    void set(std::string relation, std::vector<std::string> templates);

    bool allow_fallback() const noexcept { return allow_fallback_; }
    bool has(std::string_view relation) const;
    std::size_t count(std::string_view relation) const;

    // Template text for a relation; throws ConfigError when the index is out of
    // range or the relation is unknown and fallback is disabled.
    std::string get(std::string_view relation, std::size_t index) const;

    const std::map<std::string, std::vector<std::string>, std::less<>>& entries() const noexcept {
        return entries_;
    }

    static TemplateTable from_json(const nlohmann::json& j, bool allow_fallback = true);
    nlohmann::json to_json() const;
    static TemplateTable load(const std::filesystem::path& path, bool allow_fallback = true);

private:
    std::map<std::string, std::vector<std::string>, std::less<>> entries_;
    bool allow_fallback_ = true;
};

// Generic templates for relations with no table entry.
std::vector<std::string> fallback_templates(std::string_view relation);

PromptedFact render_prompt(const KnowledgeGraph& kg, const TemplateTable& templates, const Triplet& triplet,
                           std::size_t template_index);

// The edited sentence: same prefix, new object.
PromptedFact render_counterfactual(const KnowledgeGraph& kg, const TemplateTable& templates,
                                   const EditRequest& edit, std::size_t template_index);

// Renders every triplet of the KG in id order.
std::vector<PromptedFact> render_all(const KnowledgeGraph& kg, const TemplateTable& templates,
                                     std::size_t template_index);

// Throws ConfigError naming the first relation with no usable template.
void check_template_coverage(const KnowledgeGraph& kg, const TemplateTable& templates);

}  // namespace ripple
