#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blend/pipeline.hpp"

namespace blend {

enum class Category { Same, Different, Compound, Style, Architecture };

inline constexpr std::array<Category, 5> kCategories = {
    Category::Same, Category::Different, Category::Compound, Category::Style, Category::Architecture,
};

std::string_view to_string(Category category) noexcept;
Category parse_category(std::string_view text);  // case-insensitive; throws on unknown names

struct ConceptPair {
    std::string id;
    std::string prompt_1;
    std::string prompt_2;
    Category category = Category::Same;

    friend bool operator==(const ConceptPair&, const ConceptPair&) = default;
};

// Pairs from the registry bundled at build time (data/concept_pairs.json).
std::vector<ConceptPair> load_pairs(std::optional<Category> filter = std::nullopt);
std::vector<ConceptPair> load_pairs_from(const std::filesystem::path& registry,
                                         std::optional<Category> filter = std::nullopt);
std::vector<ConceptPair> parse_pairs(std::string_view registry_json, std::optional<Category> filter = std::nullopt);

// Looks a pair up by id in the bundled registry.
ConceptPair find_pair(std::string_view id);

inline constexpr std::array<std::uint64_t, 10> kDefaultSeeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

// One generation inside a batch. Output goes to <root>/<pair_id>/<variant>/<seed>/.
struct RunSpec {
    std::string pair_id;
    std::string variant;
    BlendConfig config;

    std::filesystem::path relative_dir() const;
};

struct BatchPlan {
    std::string name;
    std::vector<ConceptPair> pairs;
    std::vector<std::string> variants;  // display order of the variants
    std::vector<std::uint64_t> seeds;
    std::vector<RunSpec> runs;
};

enum class RunStatus { Generated, Skipped, Failed };

std::string_view to_string(RunStatus status) noexcept;

struct RunRecord {
    RunSpec spec;
    RunStatus status = RunStatus::Failed;
    std::string error;
    std::filesystem::path manifest_path;  // relative to the batch root
    std::string latent_hash;
    std::string init_latent_hash;
    std::size_t trace_length = 0;
};

struct BatchManifest {
    std::string name;
    std::filesystem::path root;
    std::vector<ConceptPair> pairs;
    std::vector<std::string> variants;
    std::vector<std::uint64_t> seeds;
    std::vector<RunRecord> runs;

    std::size_t count(RunStatus status) const noexcept;
    nlohmann::json to_json() const;
    static BatchManifest from_json(const nlohmann::json& j, std::filesystem::path root);
    static BatchManifest load(const std::filesystem::path& root);  // reads <root>/batch.json
};

using BackendFactory = std::function<std::unique_ptr<DiffusionBackend>()>;

struct BatchOptions {
    // Worker threads, each with its own backend instance. 0 = hardware concurrency.
    unsigned jobs = 0;
};

// Cartesian product pairs x methods x seeds at the default ratio.
BatchPlan make_batch_plan(std::span<const ConceptPair> pairs, std::span<const BlendMethod> methods,
                          std::span<const std::uint64_t> seeds);

// Executes every run, skipping runs whose manifest already exists with a
// matching config hash. A failing run is recorded and does not stop the
// batch. Writes <out_dir>/batch.json.
BatchManifest run_batch(const BackendFactory& factory, const BatchPlan& plan, const std::filesystem::path& out_dir,
                        BatchOptions options = {});

BatchManifest run_batch(const BackendFactory& factory, std::span<const ConceptPair> pairs,
                        std::span<const BlendMethod> methods, std::span<const std::uint64_t> seeds,
                        const std::filesystem::path& out_dir, BatchOptions options = {});

// Both prompt orders for each of the four methods (variants "<method>" and
// "<method>-reversed"), all from one seed.
BatchPlan symmetry_preset(const ConceptPair& pair, std::uint64_t seed = 0);

// Three noise regimes, each with both single-prompt baselines and the four
// blends: (a) everything from `seed`; (b) baselines from distinct seeds,
// blends from the first prompt's seed; (c) baselines and blends all from
// distinct seeds. Variants are prefixed "a-", "b-", "c-".
BatchPlan seed_dependency_preset(const ConceptPair& pair, std::uint64_t seed = 0);

inline constexpr std::array<double, 3> kDefaultSweepRatios = {0.25, 0.5, 0.75};

// Every method at each ratio, variants "<method>-r<ratio>".
BatchPlan ratio_sweep_preset(const ConceptPair& pair, std::span<const double> ratios = kDefaultSweepRatios,
                             std::uint64_t seed = 0);

// UNET with n_first blocks on prompt 1, variants "unet-<n>-<7-n>".
BatchPlan unet_split_sweep(const ConceptPair& pair, int first = 1, int last = 6, std::uint64_t seed = 0);

std::string variant_name(BlendMethod method);

}  // namespace blend
