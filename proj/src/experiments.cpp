#include "blend/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "blend/errors.hpp"
#include "blend/registry_data.hpp"

namespace blend {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string format_ratio(double r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", r);
    return buf;
}

nlohmann::json pair_json(const ConceptPair& p) {
    return {{"id", p.id}, {"prompt_1", p.prompt_1}, {"prompt_2", p.prompt_2}, {"category", to_string(p.category)}};
}

ConceptPair pair_from_json(const nlohmann::json& j) {
    ConceptPair p;
    p.id = j.at("id").get<std::string>();
    p.prompt_1 = j.at("prompt_1").get<std::string>();
    p.prompt_2 = j.at("prompt_2").get<std::string>();
    p.category = parse_category(j.at("category").get<std::string>());
    if (p.id.empty() || p.prompt_1.empty() || p.prompt_2.empty()) {
        throw ValidationError("concept pair entries need a non-empty id and two prompts");
    }
    return p;
}

BlendConfig blend_config(const ConceptPair& pair, BlendMethod method, std::uint64_t seed) {
    BlendConfig c;
    c.method = method;
    c.prompt_1 = pair.prompt_1;
    c.prompt_2 = method == BlendMethod::Baseline ? std::string{} : pair.prompt_2;
    c.seed = seed;
    return c;
}

BlendConfig baseline_config(std::string prompt, std::uint64_t seed) {
    BlendConfig c;
    c.method = BlendMethod::Baseline;
    c.prompt_1 = std::move(prompt);
    c.seed = seed;
    return c;
}

void add_variant(BatchPlan& plan, const std::string& v) {
    if (std::find(plan.variants.begin(), plan.variants.end(), v) == plan.variants.end()) {
        plan.variants.push_back(v);
    }
}

void add_seed(BatchPlan& plan, std::uint64_t s) {
    if (std::find(plan.seeds.begin(), plan.seeds.end(), s) == plan.seeds.end()) {
        plan.seeds.push_back(s);
    }
}

void add_run(BatchPlan& plan, std::string pair_id, std::string variant, BlendConfig config) {
    add_variant(plan, variant);
    add_seed(plan, config.seed);
    plan.runs.push_back({std::move(pair_id), std::move(variant), std::move(config)});
}

void write_json_atomically(const std::filesystem::path& path, const nlohmann::json& j) {
    const auto tmp = std::filesystem::path(path).concat(".tmp");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw BlendError("cannot write " + tmp.string());
        }
        f << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

RunRecord execute_run(DiffusionBackend* backend, const RunSpec& spec, const std::filesystem::path& root) {
    RunRecord rec;
    rec.spec = spec;
    rec.manifest_path = spec.relative_dir() / "manifest.json";
    const auto manifest_abs = root / rec.manifest_path;
    const std::string expected_hash = config_hash(spec.config);
    try {
        if (std::filesystem::exists(manifest_abs) && std::filesystem::exists(manifest_abs.parent_path() / "image.png")) {
            const auto existing = read_manifest(manifest_abs);
            if (existing.value("config_hash", std::string{}) == expected_hash) {
                rec.status = RunStatus::Skipped;
                rec.latent_hash = existing.value("hash", std::string{});
                rec.init_latent_hash = existing.value("init_latent_hash", std::string{});
                rec.trace_length = existing.contains("trace") ? existing["trace"].size() : 0;
                return rec;
            }
        }
        if (backend == nullptr) {
            throw BlendError("no backend available for this worker");
        }
        const GenerationResult result = generate(*backend, spec.config);
        write_generation(result, manifest_abs.parent_path());
        rec.status = RunStatus::Generated;
        rec.latent_hash = result.latent_hash;
        rec.init_latent_hash = result.init_latent_hash;
        rec.trace_length = result.trace.size();
    } catch (const std::exception& e) {
        rec.status = RunStatus::Failed;
        rec.error = e.what();
    }
    return rec;
}

}  // namespace

std::string_view to_string(Category category) noexcept {
    switch (category) {
        case Category::Same: return "SAME";
        case Category::Different: return "DIFFERENT";
        case Category::Compound: return "COMPOUND";
        case Category::Style: return "STYLE";
        case Category::Architecture: return "ARCHITECTURE";
    }
    return "?";
}

Category parse_category(std::string_view text) {
    const std::string l = lower(text);
    for (Category c : kCategories) {
        if (l == lower(to_string(c))) {
            return c;
        }
    }
    throw ValidationError("unknown category '" + std::string(text) +
                          "' (expected SAME, DIFFERENT, COMPOUND, STYLE or ARCHITECTURE)");
}

std::vector<ConceptPair> parse_pairs(std::string_view registry_json, std::optional<Category> filter) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(registry_json);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed pair registry: ") + e.what());
    }
    std::vector<ConceptPair> out;
    std::set<std::string> ids;
    for (const auto& entry : j.at("pairs")) {
        ConceptPair p = pair_from_json(entry);
        if (!ids.insert(p.id).second) {
            throw ValidationError("duplicate pair id '" + p.id + "' in registry");
        }
        if (!filter || p.category == *filter) {
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::vector<ConceptPair> load_pairs(std::optional<Category> filter) {
    return parse_pairs(detail::kBundledRegistry, filter);
}

std::vector<ConceptPair> load_pairs_from(const std::filesystem::path& registry, std::optional<Category> filter) {
    std::ifstream f(registry, std::ios::binary);
    if (!f) {
        throw NotFoundError("pair registry not found: " + registry.string());
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_pairs(ss.str(), filter);
}

ConceptPair find_pair(std::string_view id) {
    for (auto& p : load_pairs()) {
        if (p.id == id) {
            return p;
        }
    }
    throw NotFoundError("no concept pair with id '" + std::string(id) + "'");
}

std::filesystem::path RunSpec::relative_dir() const {
    return std::filesystem::path(pair_id) / variant / std::to_string(config.seed);
}

std::string_view to_string(RunStatus status) noexcept {
    switch (status) {
        case RunStatus::Generated: return "generated";
        case RunStatus::Skipped: return "skipped";
        case RunStatus::Failed: return "failed";
    }
    return "?";
}

std::string variant_name(BlendMethod method) { return lower(to_string(method)); }

std::size_t BatchManifest::count(RunStatus status) const noexcept {
    return static_cast<std::size_t>(
        std::count_if(runs.begin(), runs.end(), [status](const RunRecord& r) { return r.status == status; }));
}

nlohmann::json BatchManifest::to_json() const {
    nlohmann::json j;
    j["format"] = "blend-batch/1";
    j["name"] = name;
    j["pairs"] = nlohmann::json::array();
    for (const auto& p : pairs) {
        j["pairs"].push_back(pair_json(p));
    }
    j["variants"] = variants;
    j["seeds"] = seeds;
    j["runs"] = nlohmann::json::array();
    for (const auto& r : runs) {
        nlohmann::json run = {
            {"pair_id", r.spec.pair_id},
            {"variant", r.spec.variant},
            {"config", blend::to_json(r.spec.config)},
            {"status", to_string(r.status)},
            {"manifest", r.manifest_path.generic_string()},
            {"hash", r.latent_hash},
            {"init_latent_hash", r.init_latent_hash},
            {"trace_length", r.trace_length},
        };
        if (!r.error.empty()) {
            run["error"] = r.error;
        }
        j["runs"].push_back(std::move(run));
    }
    return j;
}

BatchManifest BatchManifest::from_json(const nlohmann::json& j, std::filesystem::path root) {
    try {
        BatchManifest m;
        m.root = std::move(root);
        m.name = j.at("name").get<std::string>();
        for (const auto& p : j.at("pairs")) {
            m.pairs.push_back(pair_from_json(p));
        }
        m.variants = j.at("variants").get<std::vector<std::string>>();
        m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        for (const auto& r : j.at("runs")) {
            RunRecord rec;
            rec.spec.pair_id = r.at("pair_id").get<std::string>();
            rec.spec.variant = r.at("variant").get<std::string>();
            rec.spec.config = config_from_json(r.at("config"));
            const auto status = r.at("status").get<std::string>();
            rec.status = status == "generated" ? RunStatus::Generated
                         : status == "skipped"  ? RunStatus::Skipped
                                                : RunStatus::Failed;
            rec.manifest_path = r.at("manifest").get<std::string>();
            rec.latent_hash = r.value("hash", std::string{});
            rec.init_latent_hash = r.value("init_latent_hash", std::string{});
            rec.trace_length = r.value("trace_length", std::size_t{0});
            rec.error = r.value("error", std::string{});
            m.runs.push_back(std::move(rec));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed batch manifest: ") + e.what());
    }
}

BatchManifest BatchManifest::load(const std::filesystem::path& root) {
    const auto path = root / "batch.json";
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw NotFoundError("no batch manifest at " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed " + path.string() + ": " + e.what());
    }
    return from_json(j, root);
}

BatchPlan make_batch_plan(std::span<const ConceptPair> pairs, std::span<const BlendMethod> methods,
                          std::span<const std::uint64_t> seeds) {
    if (pairs.empty() || methods.empty() || seeds.empty()) {
        throw ValidationError("a batch needs at least one pair, method and seed");
    }
    BatchPlan plan;
    plan.name = "batch";
    plan.pairs.assign(pairs.begin(), pairs.end());
    for (const auto& pair : pairs) {
        for (BlendMethod m : methods) {
            for (std::uint64_t s : seeds) {
                add_run(plan, pair.id, variant_name(m), blend_config(pair, m, s));
            }
        }
    }
    return plan;
}

BatchManifest run_batch(const BackendFactory& factory, const BatchPlan& plan, const std::filesystem::path& out_dir,
                        BatchOptions options) {
    std::filesystem::create_directories(out_dir);
    BatchManifest manifest;
    manifest.name = plan.name;
    manifest.root = out_dir;
    manifest.pairs = plan.pairs;
    manifest.variants = plan.variants;
    manifest.seeds = plan.seeds;
    manifest.runs.resize(plan.runs.size());

    unsigned jobs = options.jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.jobs;
    jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(1, plan.runs.size())));

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        std::unique_ptr<DiffusionBackend> backend;
        std::string factory_error;
        try {
            backend = factory();
        } catch (const std::exception& e) {
            factory_error = e.what();
        }
        for (std::size_t i = next++; i < plan.runs.size(); i = next++) {
            manifest.runs[i] = execute_run(backend.get(), plan.runs[i], out_dir);
            if (!backend && manifest.runs[i].status == RunStatus::Failed && !factory_error.empty()) {
                manifest.runs[i].error = "backend construction failed: " + factory_error;
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(jobs);
        for (unsigned t = 0; t < jobs; ++t) {
            threads.emplace_back(worker);
        }
    }
    write_json_atomically(out_dir / "batch.json", manifest.to_json());
    return manifest;
}

BatchManifest run_batch(const BackendFactory& factory, std::span<const ConceptPair> pairs,
                        std::span<const BlendMethod> methods, std::span<const std::uint64_t> seeds,
                        const std::filesystem::path& out_dir, BatchOptions options) {
    return run_batch(factory, make_batch_plan(pairs, methods, seeds), out_dir, options);
}

BatchPlan symmetry_preset(const ConceptPair& pair, std::uint64_t seed) {
    BatchPlan plan;
    plan.name = "symmetry";
    plan.pairs = {pair};
    ConceptPair reversed = pair;
    std::swap(reversed.prompt_1, reversed.prompt_2);
    for (BlendMethod m : kBlendMethods) {
        add_run(plan, pair.id, variant_name(m), blend_config(pair, m, seed));
    }
    for (BlendMethod m : kBlendMethods) {
        add_run(plan, pair.id, variant_name(m) + "-reversed", blend_config(reversed, m, seed));
    }
    return plan;
}

BatchPlan seed_dependency_preset(const ConceptPair& pair, std::uint64_t seed) {
    BatchPlan plan;
    plan.name = "seed-dependency";
    plan.pairs = {pair};
    struct Regime {
        std::string prefix;
        std::uint64_t p1_seed, p2_seed, blend_seed;
    };
    const Regime regimes[] = {
        {"a-", seed, seed, seed},
        {"b-", seed, seed + 1, seed},
        {"c-", seed, seed + 1, seed + 2},
    };
    for (const auto& r : regimes) {
        add_run(plan, pair.id, r.prefix + "baseline-p1", baseline_config(pair.prompt_1, r.p1_seed));
        add_run(plan, pair.id, r.prefix + "baseline-p2", baseline_config(pair.prompt_2, r.p2_seed));
        for (BlendMethod m : kBlendMethods) {
            add_run(plan, pair.id, r.prefix + variant_name(m), blend_config(pair, m, r.blend_seed));
        }
    }
    return plan;
}

BatchPlan ratio_sweep_preset(const ConceptPair& pair, std::span<const double> ratios, std::uint64_t seed) {
    BatchPlan plan;
    plan.name = "ratio-sweep";
    plan.pairs = {pair};
    for (double r : ratios) {
        for (BlendMethod m : kBlendMethods) {
            BlendConfig c = blend_config(pair, m, seed);
            c.ratio = r;
            add_run(plan, pair.id, variant_name(m) + "-r" + format_ratio(r), std::move(c));
        }
    }
    return plan;
}

BatchPlan unet_split_sweep(const ConceptPair& pair, int first, int last, std::uint64_t seed) {
    if (first < 0 || last > static_cast<int>(kBlockCount) || first > last) {
        throw ValidationError("split sweep range must satisfy 0 <= first <= last <= 7");
    }
    BatchPlan plan;
    plan.name = "unet-split-sweep";
    plan.pairs = {pair};
    for (int n = first; n <= last; ++n) {
        BlendConfig c = blend_config(pair, BlendMethod::Unet, seed);
        c.n_first = n;
        add_run(plan, pair.id, "unet-" + BlockSplit(n).to_string(), std::move(c));
    }
    return plan;
}

}  // namespace blend
