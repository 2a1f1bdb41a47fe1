#include <gtest/gtest.h>

#include <random>
#include <thread>

#include <httplib.h>

#include "blend/study_http.hpp"
#include "blend/study_stats.hpp"
#include "blend/toy_backend.hpp"
#include "study_fixture.hpp"
#include "temp_dir.hpp"

namespace blend::study {
namespace {

using testing::TempDir;

class StudyHttp : public ::testing::Test {
protected:
    void SetUp() override {
        store = std::make_unique<StudyStore>(StudyOptions{data.path(), "http-secret", 50});
        store->add_batch(StudyBatch::load("main", blend::testing::study_batch_dir()));
        ServerOptions opts;
        opts.port = 0;
        opts.generated_dir = data / "generated";
        opts.backend = [] { return std::make_unique<ToyBackend>(); };
        server = std::make_unique<StudyServer>(*store, opts);
        port = server->bind();
        thread = std::jthread([this] { server->listen(); });
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
        for (int i = 0; i < 100 && !server->running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }

    void TearDown() override {
        server->stop();
        thread = {};
    }

    nlohmann::json post(const std::string& path, const nlohmann::json& body, int expected_status) {
        auto res = client->Post(path, body.dump(), "application/json");
        EXPECT_TRUE(res) << path;
        if (!res) return {};
        EXPECT_EQ(res->status, expected_status) << path << ": " << res->body;
        payloads.push_back(res->body);
        return nlohmann::json::parse(res->body);
    }

    nlohmann::json get(const std::string& path, int expected_status = 200) {
        auto res = client->Get(path);
        EXPECT_TRUE(res) << path;
        if (!res) return {};
        EXPECT_EQ(res->status, expected_status) << path << ": " << res->body;
        payloads.push_back(res->body);
        return nlohmann::json::parse(res->body);
    }

    TempDir data{"http"};
    std::unique_ptr<StudyStore> store;
    std::unique_ptr<StudyServer> server;
    std::jthread thread;
    std::unique_ptr<httplib::Client> client;
    int port = 0;
    std::vector<std::string> payloads;
};

TEST_F(StudyHttp, RoundTripOverRandomSessions) {
    std::mt19937_64 rng(2024);
    std::map<std::pair<std::string, std::string>, std::array<int, 4>> expected;
    for (int p = 0; p < 100; ++p) {
        const std::string participant = "participant-" + std::to_string(p);
        const auto session = post("/sessions", {{"participant", participant}, {"batch", "main"}}, 201);
        const std::string id = session["session_id"];
        ASSERT_EQ(session["task_count"], 22);
        const Session server_side = store->session(id);
        for (int t = 0; t < 22; ++t) {
            const auto next = get("/sessions/" + id + "/next");
            ASSERT_FALSE(next["done"].get<bool>());
            ASSERT_EQ(next["images"].size(), 4u);
            const std::string pair = next["pair_id"];
            std::array<int, 4> ranks{1, 2, 3, 4};
            std::shuffle(ranks.begin(), ranks.end(), rng);
            post("/sessions/" + id + "/rankings", {{"pair_id", pair}, {"ranks", ranks}}, 201);
            const auto& task = *std::find_if(server_side.tasks.begin(), server_side.tasks.end(),
                                             [&](const Task& x) { return x.pair_id == pair; });
            std::array<int, 4> method_ranks{};
            for (std::size_t pos = 0; pos < 4; ++pos) method_ranks[static_cast<std::size_t>(task.order[pos])] = ranks[pos];
            expected[{participant, pair}] = method_ranks;
        }
        EXPECT_TRUE(get("/sessions/" + id + "/next")["done"].get<bool>());
    }
    const auto exported = get("/export/main");
    EXPECT_EQ(exported["batch_id"], "main");
    EXPECT_EQ(exported["record_count"], 2200);
    const auto records = stats::parse_dataset(exported["dataset"].get<std::string>());
    ASSERT_EQ(records.size(), 2200u);
    for (const auto& r : records) {
        EXPECT_EQ(r.ranks, (expected.at({r.participant, r.pair}))) << r.participant << " " << r.pair;
    }
    EXPECT_EQ(get("/export/main")["dataset"], exported["dataset"]);
}

TEST_F(StudyHttp, RankingPayloadsNeverNameMethods) {
    const auto s = post("/sessions", {{"participant", "eve"}, {"batch", "main"}}, 201);
    const std::string id = s["session_id"];
    for (int t = 0; t < 22; ++t) {
        const auto next = get("/sessions/" + id + "/next");
        for (const auto& img : next["images"]) {
            auto res = client->Get(img["url"].get<std::string>());
            ASSERT_TRUE(res);
            EXPECT_EQ(res->status, 200);
            EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
            payloads.push_back(res->body);
        }
        post("/sessions/" + id + "/rankings", {{"pair_id", next["pair_id"]}, {"ranks", {4, 3, 2, 1}}}, 201);
    }
    get("/sessions/" + id);
    for (const auto& body : payloads) {
        for (const char* name : {"TEXTUAL", "SWITCH", "ALTERNATE", "UNET", "textual", "switch", "alternate", "unet"}) {
            EXPECT_EQ(body.find(name), std::string::npos) << name;
        }
    }
}

TEST_F(StudyHttp, ErrorStatuses) {
    get("/sessions/nope/next", 404);
    post("/sessions", {{"participant", "x"}, {"batch", "ghost"}}, 404);
    post("/sessions", {{"participant", 3}}, 400);
    auto bad = client->Post("/sessions", "{", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
    const auto s = post("/sessions", {{"participant", "mallory"}, {"batch", "main"}}, 201);
    const std::string id = s["session_id"];
    const std::string pair = get("/sessions/" + id + "/next")["pair_id"];
    post("/sessions/" + id + "/rankings", {{"pair_id", pair}, {"ranks", {1, 1, 2, 3}}}, 400);
    post("/sessions/" + id + "/rankings", {{"pair_id", pair}, {"ranks", {1, 2, 3}}}, 400);
    post("/sessions/" + id + "/rankings", {{"pair_id", "ghost"}, {"ranks", {1, 2, 3, 4}}}, 404);
    post("/sessions/" + id + "/rankings", {{"pair_id", pair}, {"ranks", {1, 2, 3, 4}}}, 201);
    EXPECT_TRUE(post("/sessions/" + id + "/rankings", {{"pair_id", pair}, {"ranks", {1, 2, 3, 4}}}, 200)["duplicate"]);
    const auto conflict = post("/sessions/" + id + "/rankings", {{"pair_id", pair}, {"ranks", {2, 1, 3, 4}}}, 409);
    EXPECT_EQ(conflict["status"], 409);
    get("/sessions/" + id + "/images/" + pair + "/7", 404);
    get("/export/ghost", 404);
    EXPECT_EQ(post("/sessions", {{"participant", "mallory"}, {"batch", "main"}}, 201)["session_id"], id);
}

TEST_F(StudyHttp, ExportWithoutRecordsIs404) { get("/export/main", 404); }

TEST_F(StudyHttp, GenerateEchoesParametersAndCaches) {
    BlendConfig c;
    c.method = BlendMethod::Textual;
    c.prompt_1 = "lion";
    c.prompt_2 = "cat";
    c.ratio = 0.25;
    const auto first = post("/generate", to_json(c), 200);
    EXPECT_FALSE(first["cached"].get<bool>());
    EXPECT_EQ(first["manifest"]["config"]["ratio"], 0.25);
    const auto second = post("/generate", to_json(c), 200);
    EXPECT_TRUE(second["cached"].get<bool>());
    EXPECT_EQ(second["manifest"]["hash"], first["manifest"]["hash"]);
    auto img = client->Get(first["image_url"].get<std::string>());
    ASSERT_TRUE(img);
    EXPECT_EQ(img->status, 200);
    EXPECT_EQ(img->body.substr(1, 3), "PNG");

    c.prompt_1.swap(c.prompt_2);
    const auto swapped = post("/generate", to_json(c), 200);
    EXPECT_EQ(swapped["manifest"]["config"]["prompt_1"], "cat");
    c.ratio = 1.5;
    post("/generate", to_json(c), 400);
    get("/generated/../../etc/passwd.png", 404);
    get("/generated/abc.png", 404);
}

}  // namespace
}  // namespace blend::study
