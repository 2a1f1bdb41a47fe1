#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "blend/backend.hpp"
#include "blend/schedule.hpp"
#include "blend/unet_routing.hpp"

namespace blend {

enum class BlendMethod { Textual, Switch, Alternate, Unet, Baseline };

// The four blending methods, in the column order used by manifests, datasets
// and summary tables.
inline constexpr std::array<BlendMethod, 4> kBlendMethods = {
    BlendMethod::Textual, BlendMethod::Switch, BlendMethod::Alternate, BlendMethod::Unet,
};

std::string_view to_string(BlendMethod method) noexcept;
BlendMethod parse_method(std::string_view text);  // case-insensitive
std::size_t method_index(BlendMethod method);      // position in kBlendMethods

struct BlendConfig {
    BlendMethod method = BlendMethod::Baseline;
    std::string prompt_1;
    std::string prompt_2;  // empty for BASELINE
    double ratio = kDefaultBlendRatio;
    std::uint64_t seed = 0;
    int steps = kDefaultSteps;
    double guidance = kDefaultGuidance;

    // Method-specific overrides. When absent they are derived from ratio.
    std::optional<int> switch_step;  // SWITCH
    std::optional<int> period;       // ALTERNATE
    std::optional<int> n_first;      // UNET

    friend bool operator==(const BlendConfig&, const BlendConfig&) = default;
};

nlohmann::json to_json(const BlendConfig& config);
BlendConfig config_from_json(const nlohmann::json& j);

// Throws ValidationError on an inconsistent config, e.g. a period override on
// a SWITCH run or UNET on a backend without the seven routable blocks.
void validate(const BlendConfig& config, const BackendDescriptor& backend);

// Per-iteration schedule and per-block split a config resolves to.
struct ConditioningPlan {
    std::optional<ConditioningSchedule> schedule;  // SWITCH, ALTERNATE
    std::optional<BlockSplit> split;               // UNET
};

ConditioningPlan resolve_plan(const BlendConfig& config);

struct GenerationResult {
    BlendConfig config;
    ConditioningPlan plan;
    Latent final_latent;
    Image image;
    // One 7-character string per iteration: which embedding each block saw on
    // the conditional pass ('1' = prompt 1, '2' = prompt 2, 'B' = blended).
    std::vector<std::string> trace;
    std::string config_hash;
    std::string init_latent_hash;
    std::string latent_hash;  // content hash of the run
    nlohmann::json manifest;
};

// Runs a complete blended generation. Deterministic per (backend, config).
GenerationResult generate(DiffusionBackend& backend, const BlendConfig& config);

GenerationResult generate_baseline(DiffusionBackend& backend, std::string prompt, std::uint64_t seed);

std::string config_hash(const BlendConfig& config);
std::string latent_hash(const Latent& latent);

struct WrittenRun {
    std::filesystem::path manifest;
    std::filesystem::path image;
};

// Writes <dir>/manifest.json and <dir>/image.png, creating dir if needed.
WrittenRun write_generation(const GenerationResult& result, const std::filesystem::path& dir);

nlohmann::json read_manifest(const std::filesystem::path& path);

nlohmann::json to_json(const BackendDescriptor& descriptor);

}  // namespace blend
