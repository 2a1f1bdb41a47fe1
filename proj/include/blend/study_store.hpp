#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "blend/experiments.hpp"
#include "blend/study_stats.hpp"

namespace blend::study {

inline constexpr std::size_t kPositions = 4;

// The study images of one batch: for every pair, one image per method.
struct StudyBatch {
    std::string id;
    std::filesystem::path root;
    std::vector<ConceptPair> pairs;
    std::map<std::string, std::array<std::filesystem::path, kPositions>> images;  // kBlendMethods order

    // Reads <root>/batch.json. The shown seed per pair comes from the optional
    // <root>/selection.json ({"<pair_id>": seed}); otherwise the lowest seed
    // with all four method images is used. Throws when a pair lacks an image.
    static StudyBatch load(std::string id, const std::filesystem::path& root);
};

// order[position] is the index into kBlendMethods of the image shown there.
using Permutation = std::array<int, kPositions>;

struct Task {
    std::string pair_id;
    Permutation order{};
};

struct Session {
    std::string id;
    std::string participant;
    std::string batch_id;
    std::string created_at;  // UTC, ISO 8601
    std::vector<Task> tasks;
    std::map<std::string, stats::RankingRecord> submitted;  // by pair id

    // Index of the first task without a submission; tasks.size() when done.
    std::size_t cursor() const noexcept;
};

struct StudyOptions {
    std::filesystem::path data_dir;  // events.jsonl and snapshot.json live here
    std::string secret;              // keys the permutations and session ids
    std::size_t snapshot_every = 200;  // events between snapshots
};

struct SubmitOutcome {
    stats::RankingRecord record;
    bool duplicate = false;  // identical resubmission, nothing was written
};

// Deterministic, secret-keyed presentation order for one pair.
Permutation presentation_order(std::string_view secret, std::string_view participant, std::string_view batch_id,
                               std::string_view pair_id);

// Maps ranks given to the displayed positions back to ranks per method.
std::array<int, 4> to_method_ranks(const Permutation& order, const std::array<int, kPositions>& position_ranks);

// Ranking study state with an append-only event log. Thread-safe.
class StudyStore {
public:
    explicit StudyStore(StudyOptions options);

    void add_batch(StudyBatch batch);
    bool has_batch(std::string_view batch_id) const;
    const StudyBatch& batch(std::string_view batch_id) const;

    // Creating a session again for the same participant and batch returns the
    // existing one.
    Session create_session(const std::string& participant, const std::string& batch_id);
    Session session(const std::string& session_id) const;

    std::optional<Task> next_task(const std::string& session_id) const;

    const std::filesystem::path& image_for(const std::string& session_id, const std::string& pair_id,
                                           std::size_t position) const;

    // Rejects non-permutations, unknown pairs, and a second ranking for a pair
    // that differs from the first (ConflictError).
    SubmitOutcome submit_ranking(const std::string& session_id, const std::string& pair_id,
                                 const std::array<int, kPositions>& position_ranks);

    std::vector<stats::RankingRecord> records(std::string_view batch_id) const;

    // Dataset text sorted by participant, then pair. Throws EmptyDatasetError
    // when the batch has no records.
    std::string export_dataset(std::string_view batch_id) const;

    void write_snapshot();

private:
    void replay();
    void append_event(const nlohmann::json& event);
    void maybe_snapshot();
    void apply_event(const nlohmann::json& event);
    Session& find_session(const std::string& id);
    const Session& find_session(const std::string& id) const;

    StudyOptions m_options;
    mutable std::shared_mutex m_mutex;
    std::map<std::string, StudyBatch, std::less<>> m_batches;
    std::map<std::string, Session> m_sessions;
    std::ofstream m_log;
    std::uint64_t m_seq = 0;
    std::size_t m_since_snapshot = 0;
};

}  // namespace blend::study
