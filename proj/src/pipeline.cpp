#include "blend/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "blend/digest.hpp"
#include "blend/errors.hpp"
#include "blend/image_io.hpp"

namespace blend {

namespace {

constexpr std::string_view kManifestFormat = "blend-manifest/1";

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
    return out;
}

char slot_char(std::uint64_t fp, std::uint64_t fp1, std::uint64_t fp2, std::optional<std::uint64_t> fp_blend) {
    if (fp == fp1) return '1';
    if (fp == fp2) return '2';
    if (fp_blend && fp == *fp_blend) return 'B';
    return '?';
}

}  // namespace

std::string_view to_string(BlendMethod method) noexcept {
    switch (method) {
        case BlendMethod::Textual: return "TEXTUAL";
        case BlendMethod::Switch: return "SWITCH";
        case BlendMethod::Alternate: return "ALTERNATE";
        case BlendMethod::Unet: return "UNET";
        case BlendMethod::Baseline: return "BASELINE";
    }
    return "?";
}

BlendMethod parse_method(std::string_view text) {
    const std::string u = upper(text);
    for (auto m : {BlendMethod::Textual, BlendMethod::Switch, BlendMethod::Alternate, BlendMethod::Unet,
                   BlendMethod::Baseline}) {
        if (u == to_string(m)) {
            return m;
        }
    }
    throw ValidationError("unknown blend method '" + std::string(text) + "'");
}

std::size_t method_index(BlendMethod method) {
    const auto it = std::find(kBlendMethods.begin(), kBlendMethods.end(), method);
    if (it == kBlendMethods.end()) {
        throw ValidationError("BASELINE is not one of the blending methods");
    }
    return static_cast<std::size_t>(it - kBlendMethods.begin());
}

nlohmann::json to_json(const BlendConfig& c) {
    nlohmann::json j = {
        {"method", to_string(c.method)},
        {"prompt_1", c.prompt_1},
        {"prompt_2", c.prompt_2},
        {"ratio", c.ratio},
        {"seed", c.seed},
        {"steps", c.steps},
        {"guidance", c.guidance},
    };
    if (c.switch_step) j["switch_step"] = *c.switch_step;
    if (c.period) j["period"] = *c.period;
    if (c.n_first) j["n_first"] = *c.n_first;
    return j;
}

BlendConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ValidationError("blend config must be a JSON object");
    }
    try {
        BlendConfig c;
        c.method = parse_method(j.at("method").get<std::string>());
        c.prompt_1 = j.value("prompt_1", std::string{});
        c.prompt_2 = j.value("prompt_2", std::string{});
        c.ratio = j.value("ratio", kDefaultBlendRatio);
        c.seed = j.value("seed", std::uint64_t{0});
        c.steps = j.value("steps", kDefaultSteps);
        c.guidance = j.value("guidance", kDefaultGuidance);
        if (j.contains("switch_step") && !j["switch_step"].is_null()) c.switch_step = j["switch_step"].get<int>();
        if (j.contains("period") && !j["period"].is_null()) c.period = j["period"].get<int>();
        if (j.contains("n_first") && !j["n_first"].is_null()) c.n_first = j["n_first"].get<int>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed blend config: ") + e.what());
    }
}

void validate(const BlendConfig& c, const BackendDescriptor& backend) {
    if (c.prompt_1.empty()) {
        throw ValidationError("prompt_1 must not be empty");
    }
    if (c.method == BlendMethod::Baseline) {
        if (!c.prompt_2.empty()) {
            throw ValidationError("BASELINE takes a single prompt; prompt_2 must be empty");
        }
    } else if (c.prompt_2.empty()) {
        throw ValidationError(std::string(to_string(c.method)) + " needs prompt_2");
    }
    if (!(c.ratio >= 0.0 && c.ratio <= 1.0)) {
        throw ValidationError("blend ratio " + std::to_string(c.ratio) + " is outside [0, 1]");
    }
    if (c.steps < 1) {
        throw ValidationError("steps must be positive");
    }
    if (!std::isfinite(c.guidance)) {
        throw ValidationError("guidance scale must be finite");
    }
    if (c.switch_step && c.method != BlendMethod::Switch) {
        throw ValidationError("switch_step only applies to SWITCH");
    }
    if (c.period && c.method != BlendMethod::Alternate) {
        throw ValidationError("period only applies to ALTERNATE");
    }
    if (c.n_first && c.method != BlendMethod::Unet) {
        throw ValidationError("n_first only applies to UNET");
    }
    if (c.method == BlendMethod::Unet && !backend.supports_block_routing()) {
        throw ValidationError("backend '" + backend.name + "' does not expose the seven routable cross-attention blocks");
    }
    resolve_plan(c);  // range checks on the overrides
}

ConditioningPlan resolve_plan(const BlendConfig& c) {
    ConditioningPlan plan;
    switch (c.method) {
        case BlendMethod::Switch:
            plan.schedule = make_switch_schedule(c.steps, c.switch_step.value_or(switch_step_from_ratio(c.steps, c.ratio)));
            break;
        case BlendMethod::Alternate:
            plan.schedule = c.period ? make_alternate_schedule(c.steps, *c.period) : make_ratio_schedule(c.steps, c.ratio);
            break;
        case BlendMethod::Unet:
            plan.split = c.n_first ? BlockSplit(*c.n_first) : split_from_ratio(c.ratio);
            break;
        case BlendMethod::Textual:
        case BlendMethod::Baseline:
            break;
    }
    return plan;
}

std::string config_hash(const BlendConfig& config) { return sha256_hex(to_json(config).dump()); }

std::string latent_hash(const Latent& latent) { return sha256_hex(latent.bytes()); }

nlohmann::json to_json(const BackendDescriptor& d) {
    nlohmann::json blocks = nlohmann::json::array();
    for (BlockId b : d.block_ids) {
        blocks.push_back(to_string(b));
    }
    return {
        {"name", d.name},
        {"latent_shape", {d.latent_shape.channels, d.latent_shape.height, d.latent_shape.width}},
        {"embedding_shape", {d.tokens_length, d.embedding_dim}},
        {"block_ids", blocks},
        {"scheduler", d.scheduler_name},
        {"default_steps", d.default_steps},
        {"default_guidance", d.default_guidance},
    };
}

GenerationResult generate(DiffusionBackend& backend, const BlendConfig& config) {
    const BackendDescriptor& desc = backend.descriptor();
    validate(config, desc);

    GenerationResult result;
    result.config = config;
    result.plan = resolve_plan(config);
    result.config_hash = config_hash(config);

    const bool single = config.method == BlendMethod::Baseline;
    const PromptEmbedding e1 = backend.encode_prompt(config.prompt_1);
    const PromptEmbedding e2 = single ? e1 : backend.encode_prompt(config.prompt_2);
    const PromptEmbedding uncond = backend.encode_prompt("");
    std::optional<PromptEmbedding> blended;
    if (config.method == BlendMethod::Textual) {
        // Computed once and reused for every step and block.
        blended = interpolate(e1, e2, config.ratio);
    }

    Latent initial = backend.init_latent(config.seed);
    result.init_latent_hash = latent_hash(initial);
    NoiseTrajectoryState state = backend.start(std::move(initial), config.steps);

    for (int i = 0; i < config.steps; ++i) {
        BlockConditioning cond = BlockConditioning::uniform(e1);
        switch (config.method) {
            case BlendMethod::Textual:
                cond = BlockConditioning::uniform(*blended);
                break;
            case BlendMethod::Switch:
            case BlendMethod::Alternate:
                cond = BlockConditioning::uniform(result.plan.schedule->at(i) == PromptSelector::P1 ? e1 : e2);
                break;
            case BlendMethod::Unet:
                cond = BlockConditioning::routed(*result.plan.split, e1, e2);
                break;
            case BlendMethod::Baseline:
                break;
        }
        state = backend.denoise_step(std::move(state), cond, uncond, config.guidance);
    }

    const std::uint64_t fp1 = e1.fingerprint();
    const std::uint64_t fp2 = e2.fingerprint();
    const std::optional<std::uint64_t> fpb = blended ? std::optional(blended->fingerprint()) : std::nullopt;
    result.trace.assign(static_cast<std::size_t>(config.steps), std::string(kBlockCount, '?'));
    for (const auto& entry : state.log) {
        if (entry.step >= 1 && entry.step <= config.steps) {
            result.trace[static_cast<std::size_t>(entry.step - 1)][index_of(entry.block)] =
                slot_char(entry.embedding_fingerprint, fp1, fp2, fpb);
        }
    }

    result.final_latent = std::move(state.latent);
    result.latent_hash = latent_hash(result.final_latent);
    result.image = backend.decode(result.final_latent);

    nlohmann::json& m = result.manifest;
    m["format"] = kManifestFormat;
    m["config"] = to_json(config);
    m["method"] = to_string(config.method);
    m["seed"] = config.seed;
    m["schedule"] = result.plan.schedule ? nlohmann::json(result.plan.schedule->to_string()) : nlohmann::json(nullptr);
    m["split"] = result.plan.split ? nlohmann::json(result.plan.split->to_string()) : nlohmann::json(nullptr);
    m["backend"] = to_json(desc);
    m["trace"] = result.trace;
    m["config_hash"] = result.config_hash;
    m["init_latent_hash"] = result.init_latent_hash;
    m["hash"] = result.latent_hash;
    m["image"] = "image.png";
    return result;
}

GenerationResult generate_baseline(DiffusionBackend& backend, std::string prompt, std::uint64_t seed) {
    BlendConfig config;
    config.method = BlendMethod::Baseline;
    config.prompt_1 = std::move(prompt);
    config.seed = seed;
    return generate(backend, config);
}

WrittenRun write_generation(const GenerationResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    WrittenRun out{dir / "manifest.json", dir / "image.png"};
    write_png(out.image, result.image);
    // Manifest last: its presence marks the run as complete.
    const auto tmp = dir / "manifest.json.tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw BlendError("cannot write " + tmp.string());
        }
        f << result.manifest.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, out.manifest);
    return out;
}

nlohmann::json read_manifest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw NotFoundError("manifest not found: " + path.string());
    }
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
    }
}

}  // namespace blend
