#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "blend/errors.hpp"
#include "blend/study_store.hpp"
#include "study_fixture.hpp"
#include "temp_dir.hpp"

namespace blend::study {
namespace {

using testing::TempDir;

StudyOptions options(const TempDir& dir, std::size_t snapshot_every = 200) {
    return {dir.path(), "test-secret", snapshot_every};
}

std::unique_ptr<StudyStore> make_store(const TempDir& dir, std::size_t snapshot_every = 200) {
    auto store = std::make_unique<StudyStore>(options(dir, snapshot_every));
    store->add_batch(StudyBatch::load("main", testing::study_batch_dir()));
    return store;
}

bool is_permutation(const Permutation& p) {
    std::set<int> s(p.begin(), p.end());
    return s == std::set<int>{0, 1, 2, 3};
}

TEST(PresentationOrder, DeterministicAndKeyed) {
    const auto a = presentation_order("k", "alice", "main", "lion-cat");
    EXPECT_TRUE(is_permutation(a));
    EXPECT_EQ(a, presentation_order("k", "alice", "main", "lion-cat"));
    int same_key = 0;
    int same_participant = 0;
    for (int i = 0; i < 240; ++i) {
        const std::string p = "p" + std::to_string(i);
        same_key += presentation_order("k", p, "main", "lion-cat") == presentation_order("k2", p, "main", "lion-cat");
        same_participant +=
            presentation_order("k", p, "main", "lion-cat") == presentation_order("k", p + "x", "main", "lion-cat");
    }
    // Independent draws agree with probability 1/24.
    EXPECT_LT(same_key, 40);
    EXPECT_LT(same_participant, 40);
}

TEST(PresentationOrder, RoughlyUniform) {
    std::map<Permutation, int> counts;
    for (int i = 0; i < 24000; ++i) ++counts[presentation_order("k", "p" + std::to_string(i), "b", "x")];
    EXPECT_EQ(counts.size(), 24u);
    for (const auto& [perm, n] : counts) {
        EXPECT_GT(n, 800);
        EXPECT_LT(n, 1200);
    }
}

TEST(ToMethodRanks, InversePermutation) {
    EXPECT_EQ(to_method_ranks({0, 1, 2, 3}, {1, 2, 3, 4}), (std::array<int, 4>{1, 2, 3, 4}));
    // Positions show (B, A, D, C); ranks [2, 1, 4, 3] give A=1, B=2, C=3, D=4.
    EXPECT_EQ(to_method_ranks({1, 0, 3, 2}, {2, 1, 4, 3}), (std::array<int, 4>{1, 2, 3, 4}));
}

TEST(StudyBatch, LoadsAllPairs) {
    const auto b = StudyBatch::load("main", testing::study_batch_dir());
    EXPECT_EQ(b.pairs.size(), 22u);
    EXPECT_EQ(b.images.size(), 22u);
    for (const auto& [pair, imgs] : b.images)
        for (const auto& p : imgs) EXPECT_TRUE(std::filesystem::exists(p)) << p;
    EXPECT_THROW(StudyBatch::load("x", "/nonexistent"), NotFoundError);
}

TEST(StudyStore, SessionHasTwentyTwoTasks) {
    const TempDir dir("store");
    auto store = make_store(dir);
    const auto s = store->create_session("alice", "main");
    EXPECT_EQ(s.tasks.size(), 22u);
    EXPECT_EQ(s.cursor(), 0u);
    for (const auto& t : s.tasks) EXPECT_TRUE(is_permutation(t.order));
    EXPECT_EQ(store->create_session("alice", "main").id, s.id);
    EXPECT_NE(store->create_session("bob", "main").id, s.id);
    EXPECT_THROW(store->create_session("alice", "nope"), NotFoundError);
    EXPECT_THROW(store->create_session("", "main"), ValidationError);
}

TEST(StudyStore, SubmitTranslatesAndAdvances) {
    const TempDir dir("store-submit");
    auto store = make_store(dir);
    const auto s = store->create_session("alice", "main");
    const auto task = *store->next_task(s.id);
    const auto out = store->submit_ranking(s.id, task.pair_id, {2, 1, 4, 3});
    EXPECT_FALSE(out.duplicate);
    EXPECT_EQ(out.record.ranks, to_method_ranks(task.order, {2, 1, 4, 3}));
    EXPECT_NE(store->next_task(s.id)->pair_id, task.pair_id);
    EXPECT_EQ(store->session(s.id).cursor(), 1u);
}

TEST(StudyStore, SubmitValidation) {
    const TempDir dir("store-validate");
    auto store = make_store(dir);
    const auto s = store->create_session("alice", "main");
    const std::string pair = s.tasks[0].pair_id;
    EXPECT_THROW(store->submit_ranking(s.id, pair, {1, 2, 2, 4}), ValidationError);
    EXPECT_THROW(store->submit_ranking(s.id, pair, {0, 1, 2, 3}), ValidationError);
    EXPECT_THROW(store->submit_ranking(s.id, "ghost", {1, 2, 3, 4}), NotFoundError);
    EXPECT_THROW(store->submit_ranking("nope", pair, {1, 2, 3, 4}), NotFoundError);
    store->submit_ranking(s.id, pair, {1, 2, 3, 4});
    EXPECT_TRUE(store->submit_ranking(s.id, pair, {1, 2, 3, 4}).duplicate);
    EXPECT_THROW(store->submit_ranking(s.id, pair, {4, 3, 2, 1}), ConflictError);
}

TEST(StudyStore, ImagesFollowThePermutation) {
    const TempDir dir("store-images");
    auto store = make_store(dir);
    const auto s = store->create_session("carol", "main");
    const auto& batch = store->batch("main");
    for (const auto& t : s.tasks) {
        for (std::size_t pos = 0; pos < kPositions; ++pos) {
            EXPECT_EQ(store->image_for(s.id, t.pair_id, pos), batch.images.at(t.pair_id)[t.order[pos]]);
        }
    }
    EXPECT_THROW(store->image_for(s.id, s.tasks[0].pair_id, 4), NotFoundError);
}

TEST(StudyStore, ExportSortedIdempotentAndEmptyError) {
    const TempDir dir("store-export");
    auto store = make_store(dir);
    EXPECT_THROW(store->export_dataset("main"), EmptyDatasetError);
    EXPECT_THROW(store->export_dataset("other"), NotFoundError);
    for (const std::string p : {"zed", "amy"}) {
        const auto s = store->create_session(p, "main");
        for (std::size_t i = 0; i < 3; ++i) store->submit_ranking(s.id, s.tasks[i].pair_id, {1, 2, 3, 4});
    }
    const auto text = store->export_dataset("main");
    EXPECT_EQ(text, store->export_dataset("main"));
    const auto records = stats::parse_dataset(text);
    ASSERT_EQ(records.size(), 6u);
    EXPECT_EQ(records.front().participant, "amy");
    EXPECT_EQ(records.back().participant, "zed");
}

TEST(StudyStore, ReplaysLogAndSnapshot) {
    const TempDir dir("store-replay");
    std::string exported;
    std::string session_id;
    {
        auto store = make_store(dir, 5);  // several snapshots along the way
        for (int p = 0; p < 4; ++p) {
            const auto s = store->create_session("p" + std::to_string(p), "main");
            session_id = s.id;
            for (std::size_t i = 0; i < 4; ++i) store->submit_ranking(s.id, s.tasks[i].pair_id, {4, 3, 2, 1});
        }
        exported = store->export_dataset("main");
    }
    EXPECT_TRUE(std::filesystem::exists(dir / "snapshot.json"));
    auto reopened = make_store(dir, 5);
    EXPECT_EQ(reopened->export_dataset("main"), exported);
    EXPECT_EQ(reopened->session(session_id).cursor(), 4u);
    // The log only grows.
    const auto before = std::filesystem::file_size(dir / "events.jsonl");
    const auto s = reopened->create_session("p9", "main");
    reopened->submit_ranking(s.id, s.tasks[0].pair_id, {1, 2, 3, 4});
    EXPECT_GT(std::filesystem::file_size(dir / "events.jsonl"), before);
}

TEST(StudyStore, ConcurrentSubmissions) {
    const TempDir dir("store-concurrent");
    auto store = make_store(dir, 7);
    std::vector<std::jthread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&store, t] {
            const auto s = store->create_session("t" + std::to_string(t), "main");
            for (const auto& task : s.tasks) store->submit_ranking(s.id, task.pair_id, {1, 2, 3, 4});
        });
    }
    threads.clear();
    EXPECT_EQ(store->records("main").size(), 88u);
    auto reopened = make_store(dir, 7);
    EXPECT_EQ(reopened->records("main").size(), 88u);
}

TEST(StudyStore, RequiresSecret) { EXPECT_THROW(StudyStore({"/tmp", ""}), ValidationError); }

}  // namespace
}  // namespace blend::study
