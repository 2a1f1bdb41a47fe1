#include "blend/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "blend/errors.hpp"
#include "blend/experiments.hpp"
#include "blend/grid.hpp"
#include "blend/pipeline.hpp"
#include "blend/study_http.hpp"
#include "blend/study_stats.hpp"
#include "blend/study_store.hpp"
#include "blend/toy_backend.hpp"

namespace blend::cli {

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (!path.parent_path().empty()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
    if (!f) {
        throw BlendError("cannot write " + path.string());
    }
}

struct GenerationFlags {
    std::string method;
    std::string p1;
    std::string p2;
    std::optional<double> alpha;
    std::optional<int> switch_step;
    std::optional<int> period;
    std::optional<std::string> split;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::optional<double> guidance;
    std::string backend;
    std::optional<std::string> out;
};

// Unset flags keep the BlendConfig defaults.
BlendConfig config_from_flags(const GenerationFlags& f, BlendMethod method) {
    const int overrides = (f.switch_step ? 1 : 0) + (f.period ? 1 : 0) + (f.split ? 1 : 0);
    if (overrides > 1) {
        throw ValidationError("--switch-step, --period and --split are mutually exclusive");
    }
    if (f.alpha && overrides > 0) {
        throw ValidationError("--alpha conflicts with an explicit --switch-step, --period or --split");
    }
    if (f.switch_step && method != BlendMethod::Switch) {
        throw ValidationError("--switch-step only applies to --method switch");
    }
    if (f.period && method != BlendMethod::Alternate) {
        throw ValidationError("--period only applies to --method alternate");
    }
    if (f.split && method != BlendMethod::Unet) {
        throw ValidationError("--split only applies to --method unet");
    }
    BlendConfig c;
    c.method = method;
    c.prompt_1 = f.p1;
    c.prompt_2 = f.p2;
    if (f.alpha) c.ratio = *f.alpha;
    if (f.seed) c.seed = *f.seed;
    if (f.steps) c.steps = *f.steps;
    if (f.guidance) c.guidance = *f.guidance;
    c.switch_step = f.switch_step;
    c.period = f.period;
    if (f.split) c.n_first = BlockSplit::parse(*f.split).n_first();
    return c;
}

std::filesystem::path default_run_dir(const BlendConfig& c) {
    std::string method(to_string(c.method));
    for (auto& ch : method) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return std::filesystem::path("runs") / (method + "-" + config_hash(c).substr(0, 12));
}

int run_generation(const GenerationFlags& f, BlendMethod method, std::ostream& out) {
    const BlendConfig config = config_from_flags(f, method);
    auto backend = make_backend(f.backend);
    const GenerationResult result = generate(*backend, config);
    const auto dir = f.out ? std::filesystem::path(*f.out) : default_run_dir(config);
    const WrittenRun written = write_generation(result, dir);
    out << written.manifest.string() << '\n';
    return kOk;
}

void add_generation_flags(CLI::App* cmd, GenerationFlags& f) {
    cmd->add_option("--seed", f.seed, "Noise seed (default 0)");
    cmd->add_option("--steps", f.steps, "Denoising iterations (default 25)");
    cmd->add_option("--guidance", f.guidance, "Classifier-free guidance scale (default 7.5)");
    cmd->add_option("--backend", f.backend, "Backend: toy or sd (default $BLEND_BACKEND or toy)");
    cmd->add_option("--out", f.out, "Run directory for manifest.json and image.png");
}

BackendFactory factory_for(const std::string& name) {
    make_backend(name);  // fail early on an unusable backend
    return [name] { return make_backend(name); };
}

void print_batch(const BatchManifest& m, const std::filesystem::path& root, std::ostream& out, std::ostream& err) {
    for (const auto& r : m.runs) {
        if (r.status == RunStatus::Failed) {
            err << "error: run " << r.spec.relative_dir().generic_string() << " failed: " << r.error << '\n';
        }
    }
    out << (root / "batch.json").string() << '\n';
    err << m.runs.size() << " runs: " << m.count(RunStatus::Generated) << " generated, "
        << m.count(RunStatus::Skipped) << " skipped, " << m.count(RunStatus::Failed) << " failed\n";
}

std::atomic<study::StudyServer*> g_server{nullptr};

extern "C" void on_signal(int) {
    if (auto* s = g_server.load()) {
        s->stop();
    }
}

}  // namespace

std::unique_ptr<DiffusionBackend> make_backend(std::string_view name) {
    if (name == "toy") {
        return std::make_unique<ToyBackend>();
    }
    if (name == "sd") {
        throw ValidationError(
            "backend 'sd' needs Stable Diffusion v1.4 components (text encoder, U-Net, scheduler, VAE) "
            "supplied through StableDiffusionAdapter; none are bundled with this build");
    }
    throw ValidationError("unknown backend '" + std::string(name) + "' (expected toy or sd)");
}

std::string default_backend_name() {
    const char* env = std::getenv("BLEND_BACKEND");
    return env && *env ? env : "toy";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Concept blending for latent diffusion", "blend"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // blend
    GenerationFlags blend_flags;
    blend_flags.backend = default_backend_name();
    auto* blend_cmd = app.add_subcommand("blend", "Blend two prompts into one image");
    blend_cmd->add_option("--method", blend_flags.method, "textual, switch, alternate or unet")->required();
    blend_cmd->add_option("--p1", blend_flags.p1, "First prompt")->required();
    blend_cmd->add_option("--p2", blend_flags.p2, "Second prompt")->required();
    blend_cmd->add_option("--alpha", blend_flags.alpha, "Blend ratio in [0, 1] (default 0.5)");
    blend_cmd->add_option("--switch-step", blend_flags.switch_step, "SWITCH: iterations conditioned on --p1");
    blend_cmd->add_option("--period", blend_flags.period, "ALTERNATE: --p1 on every period-th iteration");
    blend_cmd->add_option("--split", blend_flags.split, "UNET: block split n-m, n blocks on --p1 (default 4-3)");
    add_generation_flags(blend_cmd, blend_flags);

    // baseline
    GenerationFlags base_flags;
    base_flags.backend = default_backend_name();
    auto* base_cmd = app.add_subcommand("baseline", "Generate from a single prompt");
    base_cmd->add_option("--p1,--prompt", base_flags.p1, "Prompt")->required();
    add_generation_flags(base_cmd, base_flags);

    // batch
    std::string batch_pairs = "all";
    std::optional<std::string> batch_category;
    std::string batch_methods = "textual,switch,alternate,unet";
    std::optional<std::string> batch_seeds;
    std::string batch_out;
    unsigned batch_jobs = 0;
    std::string batch_backend = default_backend_name();
    auto* batch_cmd = app.add_subcommand("batch", "Run pairs x methods x seeds");
    batch_cmd->add_option("--pairs", batch_pairs, "Comma-separated pair ids, or all");
    batch_cmd->add_option("--category", batch_category, "Restrict to one category");
    batch_cmd->add_option("--methods", batch_methods, "Comma-separated methods");
    batch_cmd->add_option("--seeds", batch_seeds, "Comma-separated seeds (default 0..9)");
    batch_cmd->add_option("--out", batch_out, "Batch directory")->required();
    batch_cmd->add_option("--jobs", batch_jobs, "Worker threads (0 = all cores)");
    batch_cmd->add_option("--backend", batch_backend, "Backend: toy or sd");

    // preset
    std::string preset_name;
    std::string preset_pair;
    std::uint64_t preset_seed = 0;
    std::string preset_out;
    std::optional<std::string> preset_ratios;
    unsigned preset_jobs = 0;
    std::string preset_backend = default_backend_name();
    auto* preset_cmd = app.add_subcommand("preset", "Run an experiment preset for one pair");
    preset_cmd->add_option("name", preset_name, "symmetry, seed-dependency, ratio-sweep or unet-split-sweep")
        ->required()
        ->check(CLI::IsMember({"symmetry", "seed-dependency", "ratio-sweep", "unet-split-sweep"}));
    preset_cmd->add_option("--pair", preset_pair, "Pair id from the registry")->required();
    preset_cmd->add_option("--seed", preset_seed, "Base seed");
    preset_cmd->add_option("--ratios", preset_ratios, "ratio-sweep: comma-separated ratios");
    preset_cmd->add_option("--out", preset_out, "Batch directory")->required();
    preset_cmd->add_option("--jobs", preset_jobs, "Worker threads (0 = all cores)");
    preset_cmd->add_option("--backend", preset_backend, "Backend: toy or sd");

    // grid
    std::optional<std::string> grid_batch;
    std::optional<std::string> grid_pair;
    std::vector<std::string> grid_manifests;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::string grid_out;
    auto* grid_cmd = app.add_subcommand("grid", "Tile run images into one PNG");
    grid_cmd->add_option("--batch", grid_batch, "Batch directory (rows = variants, columns = seeds)");
    grid_cmd->add_option("--pair", grid_pair, "Pair id within --batch");
    grid_cmd->add_option("--manifests", grid_manifests, "Explicit manifest paths, row-major");
    grid_cmd->add_option("--rows", grid_rows, "Rows for --manifests");
    grid_cmd->add_option("--cols", grid_cols, "Columns for --manifests");
    grid_cmd->add_option("--out", grid_out, "Output PNG")->required();

    // stats
    std::string stats_input;
    std::string stats_group = "all";
    std::optional<std::string> stats_out;
    auto* stats_cmd = app.add_subcommand("stats", "Preference tests, Hasse diagram and rank summary");
    stats_cmd->add_option("--input", stats_input, "Ranking dataset")->required();
    stats_cmd->add_option("--group", stats_group, "all, category or pair")
        ->check(CLI::IsMember({"all", "category", "pair"}));
    stats_cmd->add_option("--out", stats_out, "Output prefix (default: the input path without extension)");

    // serve
    std::vector<std::string> serve_batches;
    std::string serve_data = "study-data";
    std::optional<std::string> serve_secret;
    std::string serve_host = "127.0.0.1";
    int serve_port = 8080;
    std::optional<std::string> serve_static;
    std::string serve_backend = default_backend_name();
    auto* serve_cmd = app.add_subcommand("serve", "Run the ranking study service");
    serve_cmd->add_option("--batch", serve_batches, "id=dir of a generated batch (repeatable)")->required();
    serve_cmd->add_option("--data", serve_data, "Directory for the event log and snapshots");
    serve_cmd->add_option("--secret", serve_secret, "Permutation key (default $BLEND_STUDY_SECRET)");
    serve_cmd->add_option("--host", serve_host, "Listen address");
    serve_cmd->add_option("--port", serve_port, "Listen port (0 = any free port)");
    serve_cmd->add_option("--static", serve_static, "Static asset directory mounted at /");
    serve_cmd->add_option("--backend", serve_backend, "Backend for POST /generate");

    // export
    std::string export_data = "study-data";
    std::string export_batch;
    std::optional<std::string> export_out;
    auto* export_cmd = app.add_subcommand("export", "Export a batch's rankings as a dataset");
    export_cmd->add_option("--data", export_data, "Study data directory");
    export_cmd->add_option("--batch", export_batch, "Batch id")->required();
    export_cmd->add_option("--out", export_out, "Output file (default stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kUsage;
    }

    try {
        if (*blend_cmd) {
            const BlendMethod method = parse_method(blend_flags.method);
            if (method == BlendMethod::Baseline) {
                throw ValidationError("use the baseline subcommand for single-prompt generation");
            }
            return run_generation(blend_flags, method, out);
        }
        if (*base_cmd) {
            return run_generation(base_flags, BlendMethod::Baseline, out);
        }
        if (*batch_cmd) {
            std::vector<ConceptPair> pairs;
            const std::optional<Category> cat =
                batch_category ? std::optional(parse_category(*batch_category)) : std::nullopt;
            if (batch_pairs == "all") {
                pairs = load_pairs(cat);
            } else {
                for (const auto& id : split_list(batch_pairs)) {
                    auto p = find_pair(id);
                    if (!cat || p.category == *cat) pairs.push_back(std::move(p));
                }
            }
            std::vector<BlendMethod> methods;
            for (const auto& m : split_list(batch_methods)) methods.push_back(parse_method(m));
            std::vector<std::uint64_t> seeds(kDefaultSeeds.begin(), kDefaultSeeds.end());
            if (batch_seeds) {
                seeds.clear();
                for (const auto& s : split_list(*batch_seeds)) seeds.push_back(std::stoull(s));
            }
            const auto m = run_batch(factory_for(batch_backend), pairs, methods, seeds, batch_out, {batch_jobs});
            print_batch(m, batch_out, out, err);
            return m.count(RunStatus::Failed) == 0 ? kOk : kFailure;
        }
        if (*preset_cmd) {
            const ConceptPair pair = find_pair(preset_pair);
            BatchPlan plan;
            if (preset_name == "symmetry") {
                plan = symmetry_preset(pair, preset_seed);
            } else if (preset_name == "seed-dependency") {
                plan = seed_dependency_preset(pair, preset_seed);
            } else if (preset_name == "ratio-sweep") {
                std::vector<double> ratios(kDefaultSweepRatios.begin(), kDefaultSweepRatios.end());
                if (preset_ratios) {
                    ratios.clear();
                    for (const auto& r : split_list(*preset_ratios)) ratios.push_back(std::stod(r));
                }
                plan = ratio_sweep_preset(pair, ratios, preset_seed);
            } else {
                plan = unet_split_sweep(pair, 1, 6, preset_seed);
            }
            const auto m = run_batch(factory_for(preset_backend), plan, preset_out, {preset_jobs});
            print_batch(m, preset_out, out, err);
            return m.count(RunStatus::Failed) == 0 ? kOk : kFailure;
        }
        if (*grid_cmd) {
            if (grid_batch) {
                const auto batch = BatchManifest::load(*grid_batch);
                std::string pair = grid_pair.value_or(batch.pairs.empty() ? "" : batch.pairs.front().id);
                compose_batch_grid(batch, pair, grid_out);
            } else {
                std::vector<std::filesystem::path> paths(grid_manifests.begin(), grid_manifests.end());
                GridLayout layout;
                layout.rows = grid_rows;
                layout.cols = grid_cols;
                if (layout.rows == 0 && layout.cols == 0) {
                    layout.rows = 1;
                    layout.cols = paths.size();
                }
                compose_grid(paths, layout, grid_out);
            }
            out << grid_out << '\n';
            return kOk;
        }
        if (*stats_cmd) {
            const auto records = stats::load_dataset(stats_input);
            if (records.empty()) {
                throw EmptyDatasetError("dataset " + stats_input + " contains no records");
            }
            const auto group_by = stats::parse_group_by(stats_group);
            const auto pairs = load_pairs();
            const auto grouped = stats::grouped_pairwise(records, group_by, pairs);
            const auto summary = stats::rank_summary(records, group_by, pairs);
            for (const auto& w : grouped.warnings) err << "warning: " << w << '\n';

            std::string dot;
            for (const auto& g : grouped.groups) {
                const auto order = stats::preference_order(g.results);
                if (!order.acyclic()) {
                    err << "warning: group " << g.group << " has cyclic significant preferences\n";
                }
                dot += stats::to_dot(order, g.group);
            }
            std::ostringstream sum;
            sum << "group,method,records,mean,mean_3sig,median,mode,mode_tied\n";
            for (const auto& g : summary.groups) {
                for (std::size_t m = 0; m < kBlendMethods.size(); ++m) {
                    const auto& s = g.methods[m];
                    sum << g.group << ',' << to_string(kBlendMethods[m]) << ',' << g.records << ',' << s.mean << ','
                        << s.mean_rounded << ',' << s.median << ',' << s.mode << ',' << (s.mode_tied ? "yes" : "no")
                        << '\n';
                }
            }
            std::filesystem::path prefix = stats_out ? std::filesystem::path(*stats_out)
                                                     : std::filesystem::path(stats_input).replace_extension();
            const auto csv_path = std::filesystem::path(prefix).concat(".csv");
            const auto dot_path = std::filesystem::path(prefix).concat(".dot");
            const auto sum_path = std::filesystem::path(prefix).concat("-ranks.csv");
            write_text(csv_path, stats::to_csv(grouped));
            write_text(dot_path, dot);
            write_text(sum_path, sum.str());
            out << csv_path.string() << '\n' << dot_path.string() << '\n' << sum_path.string() << '\n';
            return kOk;
        }
        if (*serve_cmd) {
            std::string secret = serve_secret.value_or("");
            if (secret.empty()) {
                const char* env = std::getenv("BLEND_STUDY_SECRET");
                secret = env ? env : "";
            }
            if (secret.empty()) {
                throw ValidationError("serve needs --secret or BLEND_STUDY_SECRET");
            }
            study::StudyStore store({serve_data, secret});
            for (const auto& spec : serve_batches) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos || eq == 0) {
                    throw ValidationError("--batch expects id=dir, got '" + spec + "'");
                }
                store.add_batch(study::StudyBatch::load(spec.substr(0, eq), spec.substr(eq + 1)));
            }
            study::ServerOptions opts;
            opts.host = serve_host;
            opts.port = serve_port;
            if (serve_static) opts.static_dir = *serve_static;
            opts.generated_dir = std::filesystem::path(serve_data) / "generated";
            opts.backend = factory_for(serve_backend);
            study::StudyServer server(store, opts);
            const int port = server.bind();
            out << "listening on http://" << serve_host << ':' << port << std::endl;
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.listen();
            g_server = nullptr;
            store.write_snapshot();
            return kOk;
        }
        if (*export_cmd) {
            // Export only replays the log; the key is not used.
            study::StudyStore store({export_data, "export"});
            const std::string dataset = store.export_dataset(export_batch);
            if (export_out) {
                write_text(*export_out, dataset);
                out << *export_out << '\n';
            } else {
                out << dataset;
            }
            return kOk;
        }
    } catch (const ValidationError& e) {
        err << "error: invalid: " << e.what() << '\n';
        return kInvalid;
    } catch (const NotFoundError& e) {
        err << "error: not found: " << e.what() << '\n';
        return kNotFound;
    } catch (const ConflictError& e) {
        err << "error: conflict: " << e.what() << '\n';
        return kConflict;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}

}  // namespace blend::cli
