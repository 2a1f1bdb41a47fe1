#include "blend/study_store.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <mutex>
#include <set>
#include <sstream>

#include "blend/digest.hpp"
#include "blend/errors.hpp"
#include "blend/rng.hpp"

namespace blend::study {

namespace {

constexpr char kSep = '\x1f';

std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::uint64_t seed_from(const Sha256& mac) {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < 8; ++i) {
        s = (s << 8) | mac[i];
    }
    return s;
}

// Unbiased draw from [0, bound) by rejection.
std::uint64_t below(SplitMix64& rng, std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = rng.next();
    while (x >= limit) {
        x = rng.next();
    }
    return x % bound;
}

nlohmann::json record_json(const stats::RankingRecord& r) {
    return {{"participant", r.participant}, {"pair", r.pair}, {"ranks", r.ranks}};
}

stats::RankingRecord record_from_json(const nlohmann::json& j) {
    stats::RankingRecord r;
    r.participant = j.at("participant").get<std::string>();
    r.pair = j.at("pair").get<std::string>();
    r.ranks = j.at("ranks").get<std::array<int, 4>>();
    return r;
}

nlohmann::json session_json(const Session& s) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : s.tasks) {
        tasks.push_back({{"pair", t.pair_id}, {"order", t.order}});
    }
    nlohmann::json submitted = nlohmann::json::array();
    for (const auto& [pair, rec] : s.submitted) {
        submitted.push_back(record_json(rec));
    }
    return {
        {"id", s.id},
        {"participant", s.participant},
        {"batch", s.batch_id},
        {"created_at", s.created_at},
        {"tasks", tasks},
        {"submitted", submitted},
    };
}

Session session_from_json(const nlohmann::json& j) {
    Session s;
    s.id = j.at("id").get<std::string>();
    s.participant = j.at("participant").get<std::string>();
    s.batch_id = j.at("batch").get<std::string>();
    s.created_at = j.value("created_at", std::string{});
    for (const auto& t : j.at("tasks")) {
        s.tasks.push_back({t.at("pair").get<std::string>(), t.at("order").get<Permutation>()});
    }
    for (const auto& r : j.value("submitted", nlohmann::json::array())) {
        auto rec = record_from_json(r);
        s.submitted.emplace(rec.pair, std::move(rec));
    }
    return s;
}

const Task& task_for(const Session& s, const std::string& pair_id) {
    const auto it = std::find_if(s.tasks.begin(), s.tasks.end(), [&](const Task& t) { return t.pair_id == pair_id; });
    if (it == s.tasks.end()) {
        throw NotFoundError("pair '" + pair_id + "' is not part of session " + s.id);
    }
    return *it;
}

}  // namespace

StudyBatch StudyBatch::load(std::string id, const std::filesystem::path& root) {
    const BatchManifest manifest = BatchManifest::load(root);
    std::map<std::string, std::uint64_t> selection;
    const auto selection_path = root / "selection.json";
    if (std::filesystem::exists(selection_path)) {
        selection = read_manifest(selection_path).get<std::map<std::string, std::uint64_t>>();
    }

    StudyBatch batch;
    batch.id = std::move(id);
    batch.root = root;
    batch.pairs = manifest.pairs;

    auto image_of = [&](const std::string& pair, BlendMethod m, std::uint64_t seed) -> std::optional<std::filesystem::path> {
        for (const auto& r : manifest.runs) {
            if (r.spec.pair_id == pair && r.spec.variant == variant_name(m) && r.spec.config.seed == seed &&
                r.status != RunStatus::Failed) {
                auto p = root / r.manifest_path.parent_path() / "image.png";
                if (std::filesystem::exists(p)) {
                    return p;
                }
            }
        }
        return std::nullopt;
    };

    for (const auto& pair : manifest.pairs) {
        std::vector<std::uint64_t> candidates;
        if (auto it = selection.find(pair.id); it != selection.end()) {
            candidates = {it->second};
        } else {
            candidates = manifest.seeds;
            std::sort(candidates.begin(), candidates.end());
        }
        bool found = false;
        for (auto seed : candidates) {
            std::array<std::filesystem::path, kPositions> imgs;
            bool complete = true;
            for (std::size_t m = 0; m < kBlendMethods.size() && complete; ++m) {
                auto p = image_of(pair.id, kBlendMethods[m], seed);
                complete = p.has_value();
                if (p) imgs[m] = std::move(*p);
            }
            if (complete) {
                batch.images.emplace(pair.id, std::move(imgs));
                found = true;
                break;
            }
        }
        if (!found) {
            throw NotFoundError("batch '" + batch.id + "' lacks images of all four methods for pair '" + pair.id + "'");
        }
    }
    return batch;
}

std::size_t Session::cursor() const noexcept {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!submitted.contains(tasks[i].pair_id)) {
            return i;
        }
    }
    return tasks.size();
}

Permutation presentation_order(std::string_view secret, std::string_view participant, std::string_view batch_id,
                               std::string_view pair_id) {
    std::string msg = "order";
    msg += kSep;
    msg += participant;
    msg += kSep;
    msg += batch_id;
    msg += kSep;
    msg += pair_id;
    SplitMix64 rng(seed_from(hmac_sha256(secret, msg)));
    Permutation p{0, 1, 2, 3};
    for (std::size_t i = p.size() - 1; i > 0; --i) {
        std::swap(p[i], p[below(rng, i + 1)]);
    }
    return p;
}

std::array<int, 4> to_method_ranks(const Permutation& order, const std::array<int, kPositions>& position_ranks) {
    std::array<int, 4> ranks{};
    std::array<bool, kPositions> seen{};
    for (std::size_t pos = 0; pos < kPositions; ++pos) {
        const int m = order[pos];
        if (m < 0 || m >= 4 || seen[static_cast<std::size_t>(m)]) {
            throw ValidationError("presentation order is not a permutation");
        }
        seen[static_cast<std::size_t>(m)] = true;
        ranks[static_cast<std::size_t>(m)] = position_ranks[pos];
    }
    return ranks;
}

StudyStore::StudyStore(StudyOptions options) : m_options(std::move(options)) {
    if (m_options.secret.empty()) {
        throw ValidationError("study service needs a non-empty secret");
    }
    std::filesystem::create_directories(m_options.data_dir);
    replay();
    m_log.open(m_options.data_dir / "events.jsonl", std::ios::binary | std::ios::app);
    if (!m_log) {
        throw BlendError("cannot open event log in " + m_options.data_dir.string());
    }
}

void StudyStore::replay() {
    std::uint64_t snapshot_seq = 0;
    const auto snap = m_options.data_dir / "snapshot.json";
    if (std::filesystem::exists(snap)) {
        const auto j = read_manifest(snap);
        snapshot_seq = j.at("seq").get<std::uint64_t>();
        for (const auto& s : j.at("sessions")) {
            Session session = session_from_json(s);
            m_sessions.emplace(session.id, std::move(session));
        }
        m_seq = snapshot_seq;
    }
    std::ifstream log(m_options.data_dir / "events.jsonl", std::ios::binary);
    std::string line;
    while (std::getline(log, line)) {
        if (line.empty()) continue;
        nlohmann::json event;
        try {
            event = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            // A torn final line from an interrupted write carries no committed event.
            if (log.peek() == std::char_traits<char>::eof()) break;
            throw ValidationError("corrupt event log line in " + m_options.data_dir.string());
        }
        const auto seq = event.at("seq").get<std::uint64_t>();
        if (seq <= snapshot_seq) continue;
        apply_event(event);
        m_seq = seq;
        ++m_since_snapshot;
    }
}

void StudyStore::apply_event(const nlohmann::json& event) {
    const auto type = event.at("type").get<std::string>();
    if (type == "session") {
        Session s = session_from_json(event.at("session"));
        m_sessions.emplace(s.id, std::move(s));
    } else if (type == "ranking") {
        Session& s = find_session(event.at("session_id").get<std::string>());
        auto rec = record_from_json(event.at("record"));
        s.submitted.emplace(rec.pair, std::move(rec));
    } else {
        throw ValidationError("unknown event type '" + type + "' in study log");
    }
}

void StudyStore::append_event(const nlohmann::json& event) {
    m_log << event.dump() << '\n';
    m_log.flush();
    if (!m_log) {
        throw BlendError("failed to append to the study event log");
    }
    ++m_since_snapshot;
}

void StudyStore::maybe_snapshot() {
    if (m_since_snapshot < m_options.snapshot_every) {
        return;
    }
    nlohmann::json sessions = nlohmann::json::array();
    for (const auto& [id, s] : m_sessions) sessions.push_back(session_json(s));
    const auto tmp = m_options.data_dir / "snapshot.json.tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f << nlohmann::json{{"seq", m_seq}, {"sessions", sessions}}.dump() << '\n';
        if (!f) {
            throw BlendError("cannot write " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, m_options.data_dir / "snapshot.json");
    m_since_snapshot = 0;
}

void StudyStore::write_snapshot() {
    std::unique_lock lock(m_mutex);
    m_since_snapshot = m_options.snapshot_every;
    maybe_snapshot();
}

void StudyStore::add_batch(StudyBatch batch) {
    std::unique_lock lock(m_mutex);
    const std::string id = batch.id;
    m_batches.insert_or_assign(id, std::move(batch));
}

bool StudyStore::has_batch(std::string_view batch_id) const {
    std::shared_lock lock(m_mutex);
    return m_batches.find(batch_id) != m_batches.end();
}

const StudyBatch& StudyStore::batch(std::string_view batch_id) const {
    std::shared_lock lock(m_mutex);
    const auto it = m_batches.find(batch_id);
    if (it == m_batches.end()) {
        throw NotFoundError("unknown batch '" + std::string(batch_id) + "'");
    }
    return it->second;
}

Session& StudyStore::find_session(const std::string& id) {
    const auto it = m_sessions.find(id);
    if (it == m_sessions.end()) {
        throw NotFoundError("unknown session '" + id + "'");
    }
    return it->second;
}

const Session& StudyStore::find_session(const std::string& id) const {
    const auto it = m_sessions.find(id);
    if (it == m_sessions.end()) {
        throw NotFoundError("unknown session '" + id + "'");
    }
    return it->second;
}

Session StudyStore::create_session(const std::string& participant, const std::string& batch_id) {
    if (participant.empty() || participant.find_first_of("\t\r\n") != std::string::npos) {
        throw ValidationError("participant id must be non-empty and free of tabs and newlines");
    }
    std::unique_lock lock(m_mutex);
    const auto b = m_batches.find(batch_id);
    if (b == m_batches.end()) {
        throw NotFoundError("unknown batch '" + batch_id + "'");
    }
    std::string msg = "session";
    msg += kSep;
    msg += participant;
    msg += kSep;
    msg += batch_id;
    const Sha256 mac = hmac_sha256(m_options.secret, msg);
    const std::string id = to_hex(std::span(mac).first(16));
    if (const auto it = m_sessions.find(id); it != m_sessions.end()) {
        return it->second;
    }
    Session s;
    s.id = id;
    s.participant = participant;
    s.batch_id = batch_id;
    s.created_at = now_utc();
    for (const auto& pair : b->second.pairs) {
        s.tasks.push_back({pair.id, presentation_order(m_options.secret, participant, batch_id, pair.id)});
    }
    ++m_seq;
    append_event({{"seq", m_seq}, {"type", "session"}, {"session", session_json(s)}});
    const Session& stored = m_sessions.emplace(id, std::move(s)).first->second;
    maybe_snapshot();
    return stored;
}

Session StudyStore::session(const std::string& session_id) const {
    std::shared_lock lock(m_mutex);
    return find_session(session_id);
}

std::optional<Task> StudyStore::next_task(const std::string& session_id) const {
    std::shared_lock lock(m_mutex);
    const Session& s = find_session(session_id);
    const std::size_t c = s.cursor();
    if (c == s.tasks.size()) {
        return std::nullopt;
    }
    return s.tasks[c];
}

const std::filesystem::path& StudyStore::image_for(const std::string& session_id, const std::string& pair_id,
                                                   std::size_t position) const {
    std::shared_lock lock(m_mutex);
    const Session& s = find_session(session_id);
    const Task& task = task_for(s, pair_id);
    if (position >= kPositions) {
        throw NotFoundError("image position " + std::to_string(position) + " does not exist");
    }
    const auto b = m_batches.find(s.batch_id);
    if (b == m_batches.end()) {
        throw NotFoundError("batch '" + s.batch_id + "' is not loaded");
    }
    return b->second.images.at(pair_id)[static_cast<std::size_t>(task.order[position])];
}

SubmitOutcome StudyStore::submit_ranking(const std::string& session_id, const std::string& pair_id,
                                         const std::array<int, kPositions>& position_ranks) {
    std::unique_lock lock(m_mutex);
    Session& s = find_session(session_id);
    const Task& task = task_for(s, pair_id);
    stats::RankingRecord rec{s.participant, pair_id, to_method_ranks(task.order, position_ranks)};
    stats::validate(rec);
    if (const auto it = s.submitted.find(pair_id); it != s.submitted.end()) {
        if (it->second == rec) {
            return {rec, true};
        }
        throw ConflictError("pair '" + pair_id + "' was already ranked in session " + session_id +
                            "; rankings cannot be revised");
    }
    ++m_seq;
    append_event({{"seq", m_seq},
                  {"type", "ranking"},
                  {"session_id", session_id},
                  {"position_ranks", position_ranks},
                  {"record", record_json(rec)}});
    s.submitted.emplace(pair_id, rec);
    maybe_snapshot();
    return {rec, false};
}

std::vector<stats::RankingRecord> StudyStore::records(std::string_view batch_id) const {
    std::shared_lock lock(m_mutex);
    std::vector<stats::RankingRecord> out;
    for (const auto& [id, s] : m_sessions) {
        if (s.batch_id != batch_id) continue;
        for (const auto& [pair, rec] : s.submitted) {
            out.push_back(rec);
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.participant, a.pair) < std::tie(b.participant, b.pair);
    });
    return out;
}

std::string StudyStore::export_dataset(std::string_view batch_id) const {
    if (!has_batch(batch_id)) {
        bool known = false;
        std::shared_lock lock(m_mutex);
        for (const auto& [id, s] : m_sessions) known = known || s.batch_id == batch_id;
        if (!known) {
            throw NotFoundError("unknown batch '" + std::string(batch_id) + "'");
        }
    }
    const auto recs = records(batch_id);
    if (recs.empty()) {
        throw EmptyDatasetError("batch '" + std::string(batch_id) + "' has no rankings to export");
    }
    return "# batch " + std::string(batch_id) + "\n" + stats::format_dataset(recs);
}

}  // namespace blend::study
