#include "blend/study_http.hpp"

#include <fstream>
#include <mutex>
#include <sstream>

#include <httplib.h>

#include "blend/errors.hpp"

namespace blend::study {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}, {"status", status}});
}

nlohmann::json parse_body(const httplib::Request& req) {
    try {
        auto j = nlohmann::json::parse(req.body);
        if (!j.is_object()) {
            throw ValidationError("request body must be a JSON object");
        }
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed JSON body: ") + e.what());
    }
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) {
        throw NotFoundError("file not found");
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Maps library exceptions onto HTTP statuses.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const ValidationError& e) {
            send_error(res, 400, e.what());
        } catch (const NotFoundError& e) {
            send_error(res, 404, e.what());
        } catch (const ConflictError& e) {
            send_error(res, 409, e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    };
}

bool is_hex(const std::string& s) {
    return !s.empty() && s.find_first_not_of("0123456789abcdef") == std::string::npos;
}

}  // namespace

struct StudyServer::Impl {
    StudyStore& store;
    ServerOptions options;
    httplib::Server server;
    int port = -1;
    std::mutex generate_mutex;
    std::unique_ptr<DiffusionBackend> backend;

    Impl(StudyStore& s, ServerOptions o) : store(s), options(std::move(o)) { routes(); }

    nlohmann::json session_view(const Session& s) const {
        return {
            {"session_id", s.id},
            {"participant", s.participant},
            {"batch", s.batch_id},
            {"created_at", s.created_at},
            {"task_count", s.tasks.size()},
            {"completed", s.submitted.size()},
            {"cursor", s.cursor()},
        };
    }

    void routes() {
        server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            if (!body.contains("participant") || !body["participant"].is_string() || !body.contains("batch") ||
                !body["batch"].is_string()) {
                throw ValidationError("expected string fields 'participant' and 'batch'");
            }
            const Session s = store.create_session(body["participant"], body["batch"]);
            send_json(res, 201, session_view(s));
        }));

        server.Get("/sessions/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, session_view(store.session(req.path_params.at("id"))));
        }));

        server.Get("/sessions/:id/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.path_params.at("id");
            const Session s = store.session(id);
            const auto task = store.next_task(id);
            if (!task) {
                send_json(res, 200, {{"done", true}, {"completed", s.submitted.size()}, {"total", s.tasks.size()}});
                return;
            }
            nlohmann::json images = nlohmann::json::array();
            for (std::size_t pos = 0; pos < kPositions; ++pos) {
                images.push_back({{"position", pos},
                                  {"url", "/sessions/" + id + "/images/" + task->pair_id + "/" + std::to_string(pos)}});
            }
            nlohmann::json view = {
                {"done", false},
                {"pair_id", task->pair_id},
                {"index", s.cursor()},
                {"total", s.tasks.size()},
                {"images", images},
            };
            if (store.has_batch(s.batch_id)) {
                for (const auto& p : store.batch(s.batch_id).pairs) {
                    if (p.id == task->pair_id) {
                        view["prompt_1"] = p.prompt_1;
                        view["prompt_2"] = p.prompt_2;
                    }
                }
            }
            send_json(res, 200, view);
        }));

        server.Get("/sessions/:id/images/:pair/:pos",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const std::string pos_text = req.path_params.at("pos");
                       if (pos_text.size() != 1 || pos_text[0] < '0' || pos_text[0] > '9') {
                           throw NotFoundError("image position '" + pos_text + "' does not exist");
                       }
                       const auto& path = store.image_for(req.path_params.at("id"), req.path_params.at("pair"),
                                                          static_cast<std::size_t>(pos_text[0] - '0'));
                       res.set_content(read_file(path), "image/png");
                   }));

        server.Post("/sessions/:id/rankings", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            if (!body.contains("pair_id") || !body["pair_id"].is_string() || !body.contains("ranks") ||
                !body["ranks"].is_array() || body["ranks"].size() != kPositions) {
                throw ValidationError("expected 'pair_id' and 'ranks' (four ranks, one per displayed position)");
            }
            std::array<int, kPositions> ranks{};
            for (std::size_t i = 0; i < kPositions; ++i) {
                if (!body["ranks"][i].is_number_integer()) {
                    throw ValidationError("ranks must be integers");
                }
                ranks[i] = body["ranks"][i].get<int>();
            }
            const std::string id = req.path_params.at("id");
            const auto outcome = store.submit_ranking(id, body["pair_id"], ranks);
            const Session s = store.session(id);
            // Method ranks stay server-side: echoing them would reveal the presentation order.
            send_json(res, outcome.duplicate ? 200 : 201,
                      {{"pair_id", outcome.record.pair},
                       {"duplicate", outcome.duplicate},
                       {"remaining", s.tasks.size() - s.submitted.size()}});
        }));

        server.Get("/export/:batch", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string batch = req.path_params.at("batch");
            const std::string dataset = store.export_dataset(batch);
            send_json(res, 200, {{"batch_id", batch}, {"record_count", store.records(batch).size()}, {"dataset", dataset}});
        }));

        server.Post("/generate", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!options.backend) {
                throw NotFoundError("generation is not enabled on this server");
            }
            const BlendConfig config = config_from_json(parse_body(req));
            const std::string hash = config_hash(config);
            const auto dir = options.generated_dir / hash;
            std::lock_guard lock(generate_mutex);
            bool cached = std::filesystem::exists(dir / "manifest.json") && std::filesystem::exists(dir / "image.png");
            nlohmann::json manifest;
            if (cached) {
                manifest = read_manifest(dir / "manifest.json");
            } else {
                if (!backend) {
                    backend = options.backend();
                }
                const GenerationResult result = generate(*backend, config);
                write_generation(result, dir);
                manifest = result.manifest;
            }
            send_json(res, 200, {{"config_hash", hash},
                                 {"cached", cached},
                                 {"image_url", "/generated/" + hash + ".png"},
                                 {"manifest", manifest}});
        }));

        server.Get("/generated/:file", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string file = req.path_params.at("file");
            const std::string hash = file.size() > 4 && file.ends_with(".png") ? file.substr(0, file.size() - 4) : "";
            if (!is_hex(hash)) {
                throw NotFoundError("no generated image '" + file + "'");
            }
            res.set_content(read_file(options.generated_dir / hash / "image.png"), "image/png");
        }));

        if (options.static_dir) {
            if (!server.set_mount_point("/", options.static_dir->string())) {
                throw NotFoundError("static directory not found: " + options.static_dir->string());
            }
        }

        // Unmatched routes and requests rejected before routing get a JSON body too.
        server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (res.body.empty()) {
                send_error(res, res.status, httplib::status_message(res.status) + std::string(": ") + req.path);
            }
        });
    }
};

StudyServer::StudyServer(StudyStore& store, ServerOptions options)
    : m_impl(std::make_unique<Impl>(store, std::move(options))) {}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind() {
    if (m_impl->port >= 0) {
        return m_impl->port;
    }
    const auto& o = m_impl->options;
    m_impl->port = o.port == 0 ? m_impl->server.bind_to_any_port(o.host)
                               : (m_impl->server.bind_to_port(o.host, o.port) ? o.port : -1);
    if (m_impl->port < 0) {
        throw BlendError("cannot bind " + o.host + ":" + std::to_string(o.port));
    }
    return m_impl->port;
}

void StudyServer::listen() {
    bind();
    m_impl->server.listen_after_bind();
}

void StudyServer::stop() {
    if (m_impl) {
        m_impl->server.stop();
    }
}

bool StudyServer::running() const { return m_impl->server.is_running(); }

}  // namespace blend::study
