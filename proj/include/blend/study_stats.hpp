#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blend/experiments.hpp"
#include "blend/pipeline.hpp"

namespace blend::stats {

// One participant's full ranking of the four methods for one concept pair.
// ranks[i] is the rank (1 = best) of kBlendMethods[i].
struct RankingRecord {
    std::string participant;
    std::string pair;
    std::array<int, 4> ranks{};

    int rank_of(BlendMethod method) const { return ranks[method_index(method)]; }
    friend bool operator==(const RankingRecord&, const RankingRecord&) = default;
};

// Throws ValidationError unless ranks is a permutation of {1,2,3,4} and both
// ids are non-empty and free of tabs and newlines.
void validate(const RankingRecord& record);

// Dataset format, one record per line:
//   participant<TAB>pair<TAB>TEXTUAL:r<TAB>SWITCH:r<TAB>ALTERNATE:r<TAB>UNET:r
// Method entries may appear in any order. Blank lines and lines starting
// with '#' are ignored.
std::string format_record(const RankingRecord& record);
RankingRecord parse_record(std::string_view line);
std::vector<RankingRecord> parse_dataset(std::string_view text);
std::vector<RankingRecord> load_dataset(const std::filesystem::path& path);
std::string format_dataset(std::span<const RankingRecord> records);

enum class Tier { None, Significant, Very, Extreme };

std::string_view to_string(Tier tier) noexcept;

inline constexpr double kSignificantBelow = 0.05;
inline constexpr double kVeryBelow = 0.01;
inline constexpr double kExtremeBelow = 0.001;

Tier significance_tier(double p);

// P(X >= k) for X ~ Binomial(n, 1/2), summed in log-space.
double binomial_tail(std::uint64_t k, std::uint64_t n);

struct PreferenceResult {
    BlendMethod a = BlendMethod::Textual;  // the method tested as preferred
    BlendMethod b = BlendMethod::Textual;
    std::size_t k = 0;  // records ranking a better than b
    std::size_t n = 0;
    double proportion = 0.0;
    double p_value = 1.0;
    Tier tier = Tier::None;

    std::string label() const;  // "A < B", read as "A preferred over B"
};

PreferenceResult pairwise_preference(std::span<const RankingRecord> records, BlendMethod a, BlendMethod b);

// All six unordered pairs, each oriented so that proportion >= 0.5.
std::vector<PreferenceResult> all_pairwise(std::span<const RankingRecord> records);

struct PreferenceEdge {
    BlendMethod preferred;
    BlendMethod over;
    Tier tier;
    double p_value;

    friend bool operator==(const PreferenceEdge&, const PreferenceEdge&) = default;
};

struct PreferenceOrder {
    // Hasse edges when acyclic; every qualifying edge when a cycle exists.
    std::vector<PreferenceEdge> edges;
    std::vector<std::vector<BlendMethod>> cycles;

    bool acyclic() const noexcept { return cycles.empty(); }
    bool has_edge(BlendMethod preferred, BlendMethod over) const noexcept;
};

// Needs one result per unordered method pair. Keeps edges at or above
// tier_min, then applies the transitive reduction.
PreferenceOrder preference_order(std::span<const PreferenceResult> results, Tier tier_min = Tier::Significant);

std::string to_dot(const PreferenceOrder& order, std::string_view title = "preferences");

enum class GroupBy { All, Category, Pair };

GroupBy parse_group_by(std::string_view text);

double round_significant(double value, int digits);

struct MethodRankSummary {
    double mean = 0.0;
    double mean_rounded = 0.0;  // three significant digits
    double median = 0.0;
    int mode = 0;               // smallest among the modal ranks
    bool mode_tied = false;
};

struct GroupRankSummary {
    std::string group;
    std::size_t records = 0;
    std::array<MethodRankSummary, 4> methods{};  // kBlendMethods order
};

struct RankSummaryReport {
    std::vector<GroupRankSummary> groups;
    std::vector<std::string> warnings;  // empty or unknown groups
};

// Category grouping looks pairs up in `pairs`.
RankSummaryReport rank_summary(std::span<const RankingRecord> records, GroupBy group_by,
                               std::span<const ConceptPair> pairs);

struct GroupPreferences {
    std::string group;
    std::vector<PreferenceResult> results;
};

struct GroupedPreferences {
    std::vector<GroupPreferences> groups;
    std::vector<std::string> warnings;
};

GroupedPreferences grouped_pairwise(std::span<const RankingRecord> records, GroupBy group_by,
                                    std::span<const ConceptPair> pairs);

// "~0" below 0.001, otherwise three decimals.
std::string format_p_value(double p);

// Columns: group,preference,proportion,p_value,p_display,k,n,tier
std::string to_csv(const GroupedPreferences& grouped);

}  // namespace blend::stats
