#include "blend/study_stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "blend/errors.hpp"

namespace blend::stats {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) {
            return out;
        }
        start = pos + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string category_of(std::string_view pair, std::span<const ConceptPair> pairs) {
    for (const auto& p : pairs) {
        if (p.id == pair) {
            return std::string(to_string(p.category));
        }
    }
    return {};
}

// Groups in presentation order: registry order for categories and pairs,
// then pairs unknown to the registry in order of first appearance.
template <typename Fn>
void for_each_group(std::span<const RankingRecord> records, GroupBy group_by, std::span<const ConceptPair> pairs,
                    std::vector<std::string>& warnings, Fn&& fn) {
    std::vector<std::string> names;
    std::map<std::string, std::vector<RankingRecord>> members;
    auto ensure = [&](const std::string& name) {
        if (members.emplace(name, std::vector<RankingRecord>{}).second) {
            names.push_back(name);
        }
    };
    switch (group_by) {
        case GroupBy::All:
            ensure("ALL");
            members["ALL"].assign(records.begin(), records.end());
            break;
        case GroupBy::Category:
            for (Category c : kCategories) {
                ensure(std::string(to_string(c)));
            }
            for (const auto& r : records) {
                const std::string c = category_of(r.pair, pairs);
                if (c.empty()) {
                    warnings.push_back("record for pair '" + r.pair + "' (participant '" + r.participant +
                                       "') has no known category; skipped");
                    continue;
                }
                members[c].push_back(r);
            }
            break;
        case GroupBy::Pair:
            for (const auto& p : pairs) {
                ensure(p.id);
            }
            for (const auto& r : records) {
                ensure(r.pair);
                members[r.pair].push_back(r);
            }
            break;
    }
    for (const auto& name : names) {
        const auto& group = members[name];
        if (group.empty()) {
            warnings.push_back("group '" + name + "' has no records; omitted");
            continue;
        }
        fn(name, std::span<const RankingRecord>(group));
    }
}

}  // namespace

void validate(const RankingRecord& r) {
    auto bad_id = [](const std::string& s) { return s.empty() || s.find_first_of("\t\r\n") != std::string::npos; };
    if (bad_id(r.participant) || bad_id(r.pair)) {
        throw ValidationError("ranking record needs non-empty participant and pair ids without tabs or newlines");
    }
    std::array<bool, 5> seen{};
    for (int rank : r.ranks) {
        if (rank < 1 || rank > 4 || seen[static_cast<std::size_t>(rank)]) {
            throw ValidationError("ranking for participant '" + r.participant + "', pair '" + r.pair +
                                  "' is not a permutation of 1..4");
        }
        seen[static_cast<std::size_t>(rank)] = true;
    }
}

std::string format_record(const RankingRecord& r) {
    validate(r);
    std::string line = r.participant + '\t' + r.pair;
    for (std::size_t i = 0; i < kBlendMethods.size(); ++i) {
        line += '\t';
        line += to_string(kBlendMethods[i]);
        line += ':';
        line += std::to_string(r.ranks[i]);
    }
    return line;
}

RankingRecord parse_record(std::string_view line) {
    const auto fields = split(trim(line), '\t');
    if (fields.size() != 6) {
        throw ValidationError("malformed ranking line (expected 6 tab-separated fields): '" + std::string(line) + "'");
    }
    RankingRecord r;
    r.participant = std::string(trim(fields[0]));
    r.pair = std::string(trim(fields[1]));
    std::array<bool, 4> given{};
    for (std::size_t f = 2; f < 6; ++f) {
        const auto entry = trim(fields[f]);
        const auto colon = entry.find(':');
        if (colon == std::string_view::npos) {
            throw ValidationError("malformed method entry '" + std::string(entry) + "' in line '" +
                                  std::string(line) + "'");
        }
        const std::size_t idx = method_index(parse_method(entry.substr(0, colon)));
        const auto digits = entry.substr(colon + 1);
        int rank = 0;
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), rank);
        if (ec != std::errc{} || ptr != digits.data() + digits.size() || given[idx]) {
            throw ValidationError("malformed or repeated method entry '" + std::string(entry) + "' in line '" +
                                  std::string(line) + "'");
        }
        given[idx] = true;
        r.ranks[idx] = rank;
    }
    validate(r);
    return r;
}

std::vector<RankingRecord> parse_dataset(std::string_view text) {
    std::vector<RankingRecord> out;
    std::size_t line_no = 0;
    for (auto line : split(text, '\n')) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        try {
            out.push_back(parse_record(line));
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<RankingRecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw NotFoundError("ranking dataset not found: " + path.string());
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_dataset(ss.str());
}

std::string format_dataset(std::span<const RankingRecord> records) {
    std::string out;
    for (const auto& r : records) {
        out += format_record(r);
        out += '\n';
    }
    return out;
}

std::string_view to_string(Tier tier) noexcept {
    switch (tier) {
        case Tier::None: return "NONE";
        case Tier::Significant: return "SIGNIFICANT";
        case Tier::Very: return "VERY";
        case Tier::Extreme: return "EXTREME";
    }
    return "?";
}

Tier significance_tier(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ValidationError("p-value " + std::to_string(p) + " is outside [0, 1]");
    }
    if (p < kExtremeBelow) return Tier::Extreme;
    if (p < kVeryBelow) return Tier::Very;
    if (p < kSignificantBelow) return Tier::Significant;
    return Tier::None;
}

double binomial_tail(std::uint64_t k, std::uint64_t n) {
    if (n == 0 || k > n) {
        throw ValidationError("binomial_tail needs 0 <= k <= n and n >= 1 (got k=" + std::to_string(k) +
                              ", n=" + std::to_string(n) + ")");
    }
    if (k == 0) {
        return 1.0;
    }
    const double dn = static_cast<double>(n);
    const double log_nfact = std::lgamma(dn + 1.0);
    auto log_term = [&](std::uint64_t i) {
        const double di = static_cast<double>(i);
        return log_nfact - std::lgamma(di + 1.0) - std::lgamma(dn - di + 1.0);
    };
    // The largest term is at the mode n/2, or at k when k is past it.
    const std::uint64_t peak = std::max(k, n / 2);
    const double log_max = log_term(peak);
    double sum = 0.0;
    for (std::uint64_t i = n; i >= k; --i) {
        sum += std::exp(log_term(i) - log_max);
        if (i == k) break;
    }
    const double p = std::exp(log_max + std::log(sum) - dn * std::log(2.0));
    return std::min(p, 1.0);
}

std::string PreferenceResult::label() const {
    return std::string(to_string(a)) + " < " + std::string(to_string(b));
}

PreferenceResult pairwise_preference(std::span<const RankingRecord> records, BlendMethod a, BlendMethod b) {
    if (records.empty()) {
        throw ValidationError("pairwise_preference needs at least one record");
    }
    if (a == b) {
        throw ValidationError("pairwise_preference needs two distinct methods");
    }
    PreferenceResult res;
    res.a = a;
    res.b = b;
    for (const auto& r : records) {
        validate(r);
        if (r.rank_of(a) < r.rank_of(b)) {
            ++res.k;
        }
    }
    res.n = records.size();
    res.proportion = static_cast<double>(res.k) / static_cast<double>(res.n);
    res.p_value = binomial_tail(res.k, res.n);
    res.tier = significance_tier(res.p_value);
    return res;
}

std::vector<PreferenceResult> all_pairwise(std::span<const RankingRecord> records) {
    std::vector<PreferenceResult> out;
    for (std::size_t i = 0; i < kBlendMethods.size(); ++i) {
        for (std::size_t j = i + 1; j < kBlendMethods.size(); ++j) {
            PreferenceResult r = pairwise_preference(records, kBlendMethods[i], kBlendMethods[j]);
            if (2 * r.k < r.n) {
                r = pairwise_preference(records, kBlendMethods[j], kBlendMethods[i]);
            }
            out.push_back(r);
        }
    }
    return out;
}

bool PreferenceOrder::has_edge(BlendMethod preferred, BlendMethod over) const noexcept {
    return std::any_of(edges.begin(), edges.end(),
                       [&](const PreferenceEdge& e) { return e.preferred == preferred && e.over == over; });
}

PreferenceOrder preference_order(std::span<const PreferenceResult> results, Tier tier_min) {
    constexpr std::size_t N = kBlendMethods.size();
    std::array<std::array<bool, N>, N> covered{};
    std::array<std::array<std::optional<PreferenceEdge>, N>, N> adj{};
    for (const auto& r : results) {
        const std::size_t a = method_index(r.a);
        const std::size_t b = method_index(r.b);
        if (a == b) {
            throw ValidationError("preference result compares a method with itself");
        }
        if (covered[a][b]) {
            throw ValidationError("duplicate preference result for " + r.label());
        }
        covered[a][b] = covered[b][a] = true;
        if (r.tier != Tier::None && r.tier >= tier_min && 2 * r.k > r.n) {
            adj[a][b] = PreferenceEdge{r.a, r.b, r.tier, r.p_value};
        }
    }
    for (std::size_t a = 0; a < N; ++a) {
        for (std::size_t b = a + 1; b < N; ++b) {
            if (!covered[a][b]) {
                throw ValidationError(std::string("missing preference result for ") +
                                      std::string(to_string(kBlendMethods[a])) + " vs " +
                                      std::string(to_string(kBlendMethods[b])));
            }
        }
    }

    PreferenceOrder order;

    // Elementary cycles, each reported once starting from its smallest index.
    std::vector<std::size_t> path;
    std::array<bool, N> on_path{};
    std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t start, std::size_t v) {
        for (std::size_t w = start; w < N; ++w) {
            if (!adj[v][w]) continue;
            if (w == start) {
                std::vector<BlendMethod> cycle;
                for (auto i : path) cycle.push_back(kBlendMethods[i]);
                order.cycles.push_back(std::move(cycle));
            } else if (!on_path[w]) {
                on_path[w] = true;
                path.push_back(w);
                dfs(start, w);
                path.pop_back();
                on_path[w] = false;
            }
        }
    };
    for (std::size_t s = 0; s < N; ++s) {
        path = {s};
        on_path = {};
        on_path[s] = true;
        dfs(s, s);
    }

    std::array<std::array<bool, N>, N> reach{};
    for (std::size_t a = 0; a < N; ++a)
        for (std::size_t b = 0; b < N; ++b) reach[a][b] = adj[a][b].has_value();
    for (std::size_t m = 0; m < N; ++m)
        for (std::size_t a = 0; a < N; ++a)
            for (std::size_t b = 0; b < N; ++b)
                if (reach[a][m] && reach[m][b]) reach[a][b] = true;

    for (std::size_t a = 0; a < N; ++a) {
        for (std::size_t b = 0; b < N; ++b) {
            if (!adj[a][b]) continue;
            bool implied = false;
            if (order.acyclic()) {
                for (std::size_t m = 0; m < N && !implied; ++m) {
                    implied = m != a && m != b && reach[a][m] && reach[m][b];
                }
            }
            if (!implied) {
                order.edges.push_back(*adj[a][b]);
            }
        }
    }
    return order;
}

std::string to_dot(const PreferenceOrder& order, std::string_view title) {
    std::ostringstream os;
    os << "digraph \"" << title << "\" {\n";
    os << "  rankdir=TB;\n";
    os << "  node [shape=box, fontname=\"Courier\"];\n";
    for (BlendMethod m : kBlendMethods) {
        os << "  \"" << to_string(m) << "\";\n";
    }
    for (const auto& e : order.edges) {
        const char* style = e.tier == Tier::Extreme ? "bold" : e.tier == Tier::Very ? "solid" : "dashed";
        os << "  \"" << to_string(e.preferred) << "\" -> \"" << to_string(e.over) << "\" [style=" << style
           << ", label=\"" << format_p_value(e.p_value) << "\"];\n";
    }
    for (const auto& cycle : order.cycles) {
        os << "  // cycle:";
        for (BlendMethod m : cycle) os << ' ' << to_string(m);
        os << '\n';
    }
    os << "}\n";
    return os.str();
}

GroupBy parse_group_by(std::string_view text) {
    if (text == "all") return GroupBy::All;
    if (text == "category") return GroupBy::Category;
    if (text == "pair") return GroupBy::Pair;
    throw ValidationError("unknown grouping '" + std::string(text) + "' (expected all, category or pair)");
}

double round_significant(double value, int digits) {
    if (value == 0.0 || !std::isfinite(value)) {
        return value;
    }
    const int magnitude = static_cast<int>(std::floor(std::log10(std::fabs(value))));
    const double scale = std::pow(10.0, digits - 1 - magnitude);
    return std::round(value * scale) / scale;
}

RankSummaryReport rank_summary(std::span<const RankingRecord> records, GroupBy group_by,
                               std::span<const ConceptPair> pairs) {
    RankSummaryReport report;
    for_each_group(records, group_by, pairs, report.warnings,
                   [&](const std::string& name, std::span<const RankingRecord> group) {
                       GroupRankSummary s;
                       s.group = name;
                       s.records = group.size();
                       for (std::size_t m = 0; m < kBlendMethods.size(); ++m) {
                           std::vector<int> ranks;
                           std::array<std::size_t, 5> counts{};
                           long long total = 0;
                           for (const auto& r : group) {
                               validate(r);
                               ranks.push_back(r.ranks[m]);
                               ++counts[static_cast<std::size_t>(r.ranks[m])];
                               total += r.ranks[m];
                           }
                           std::sort(ranks.begin(), ranks.end());
                           auto& out = s.methods[m];
                           out.mean = static_cast<double>(total) / static_cast<double>(ranks.size());
                           out.mean_rounded = round_significant(out.mean, 3);
                           const std::size_t h = ranks.size() / 2;
                           out.median = ranks.size() % 2 == 1 ? ranks[h] : 0.5 * (ranks[h - 1] + ranks[h]);
                           const auto best = *std::max_element(counts.begin() + 1, counts.end());
                           out.mode = static_cast<int>(std::find(counts.begin() + 1, counts.end(), best) - counts.begin());
                           out.mode_tied = std::count(counts.begin() + 1, counts.end(), best) > 1;
                       }
                       report.groups.push_back(std::move(s));
                   });
    return report;
}

GroupedPreferences grouped_pairwise(std::span<const RankingRecord> records, GroupBy group_by,
                                    std::span<const ConceptPair> pairs) {
    GroupedPreferences out;
    for_each_group(records, group_by, pairs, out.warnings,
                   [&](const std::string& name, std::span<const RankingRecord> group) {
                       out.groups.push_back({name, all_pairwise(group)});
                   });
    return out;
}

std::string format_p_value(double p) {
    if (p < kExtremeBelow) {
        return "~0";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", p);
    return buf;
}

std::string to_csv(const GroupedPreferences& grouped) {
    std::ostringstream os;
    os << "group,preference,proportion,p_value,p_display,k,n,tier\n";
    char prop[32];
    char pval[32];
    for (const auto& g : grouped.groups) {
        for (const auto& r : g.results) {
            std::snprintf(prop, sizeof prop, "%.2f", r.proportion);
            std::snprintf(pval, sizeof pval, "%.6g", r.p_value);
            os << g.group << ',' << r.label() << ',' << prop << ',' << pval << ',' << format_p_value(r.p_value)
               << ',' << r.k << ',' << r.n << ',' << to_string(r.tier) << '\n';
        }
    }
    return os.str();
}

}  // namespace blend::stats
