#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "blend/experiments.hpp"
#include "blend/study_store.hpp"

namespace blend::study {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::optional<std::filesystem::path> static_dir;  // mounted at "/"
    std::filesystem::path generated_dir;              // cache for POST /generate
    BackendFactory backend;                           // empty disables POST /generate
};

// JSON API over a StudyStore:
//   POST /sessions                          {"participant", "batch"}
//   GET  /sessions/{id}
//   GET  /sessions/{id}/next                images by opaque position
//   GET  /sessions/{id}/images/{pair}/{pos}
//   POST /sessions/{id}/rankings            {"pair_id", "ranks": [r0, r1, r2, r3]}
//   GET  /export/{batch}
//   POST /generate                          BlendConfig JSON
//   GET  /generated/{hash}.png
class StudyServer {
public:
    StudyServer(StudyStore& store, ServerOptions options);
    ~StudyServer();

    StudyServer(const StudyServer&) = delete;
    StudyServer& operator=(const StudyServer&) = delete;

    // Binds the socket; returns the bound port.
    int bind();
    // Serves until stop(). bind() is called first if needed.
    void listen();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> m_impl;
};

}  // namespace blend::study
