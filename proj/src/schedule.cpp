#include "blend/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "blend/errors.hpp"

namespace blend {

namespace {

void require_positive_steps(int total_steps) {
    if (total_steps < 1) {
        throw ValidationError("total steps must be positive, got " + std::to_string(total_steps));
    }
}

void require_ratio(double ratio) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw ValidationError("ratio " + std::to_string(ratio) + " is outside [0, 1]");
    }
}

bool is_monotone(const std::vector<PromptSelector>& s) {
    return std::is_sorted(s.begin(), s.end(), [](PromptSelector a, PromptSelector b) {
        return a == PromptSelector::P1 && b == PromptSelector::P2;
    });
}

}  // namespace

std::string_view to_string(ScheduleKind kind) noexcept {
    switch (kind) {
        case ScheduleKind::Switch: return "SWITCH";
        case ScheduleKind::Alternate: return "ALTERNATE";
        case ScheduleKind::Constant: return "CONSTANT";
    }
    return "?";
}

ConditioningSchedule ConditioningSchedule::constant(int total_steps, PromptSelector selector) {
    require_positive_steps(total_steps);
    ConditioningSchedule s(ScheduleKind::Constant,
                           std::vector<PromptSelector>(static_cast<std::size_t>(total_steps), selector));
    s.m_ratio = selector == PromptSelector::P1 ? 1.0 : 0.0;
    return s;
}

ConditioningSchedule ConditioningSchedule::parse(std::string_view selectors) {
    if (selectors.empty()) {
        throw ValidationError("empty schedule string");
    }
    std::vector<PromptSelector> out;
    out.reserve(selectors.size());
    for (char c : selectors) {
        if (c == '1') {
            out.push_back(PromptSelector::P1);
        } else if (c == '2') {
            out.push_back(PromptSelector::P2);
        } else {
            throw ValidationError(std::string("invalid schedule character '") + c + "'");
        }
    }
    const auto kind = is_monotone(out) ? ScheduleKind::Switch : ScheduleKind::Alternate;
    ConditioningSchedule s(kind, std::move(out));
    if (kind == ScheduleKind::Switch) {
        s.m_switch_step = s.count(PromptSelector::P1);
    }
    return s;
}

int ConditioningSchedule::count(PromptSelector selector) const noexcept {
    return static_cast<int>(std::count(m_selections.begin(), m_selections.end(), selector));
}

std::string ConditioningSchedule::to_string() const {
    std::string out;
    out.reserve(m_selections.size());
    for (auto s : m_selections) {
        out.push_back(s == PromptSelector::P1 ? '1' : '2');
    }
    return out;
}

ConditioningSchedule make_switch_schedule(int total_steps, int switch_step) {
    require_positive_steps(total_steps);
    if (switch_step < 0 || switch_step > total_steps) {
        throw ValidationError("switch step " + std::to_string(switch_step) + " is outside [0, " +
                              std::to_string(total_steps) + "]");
    }
    std::vector<PromptSelector> sel(static_cast<std::size_t>(total_steps), PromptSelector::P2);
    std::fill_n(sel.begin(), switch_step, PromptSelector::P1);
    ConditioningSchedule s(ScheduleKind::Switch, std::move(sel));
    s.m_switch_step = switch_step;
    s.m_ratio = static_cast<double>(switch_step) / total_steps;
    return s;
}

ConditioningSchedule make_alternate_schedule(int total_steps, int period) {
    require_positive_steps(total_steps);
    if (period < 2) {
        throw ValidationError("alternation period must be at least 2, got " + std::to_string(period));
    }
    std::vector<PromptSelector> sel(static_cast<std::size_t>(total_steps));
    for (int i = 0; i < total_steps; ++i) {
        sel[static_cast<std::size_t>(i)] = i % period == 0 ? PromptSelector::P1 : PromptSelector::P2;
    }
    ConditioningSchedule s(ScheduleKind::Alternate, std::move(sel));
    s.m_period = period;
    return s;
}

ConditioningSchedule make_ratio_schedule(int total_steps, double ratio_p1) {
    require_positive_steps(total_steps);
    require_ratio(ratio_p1);
    const long long t = total_steps;
    const long long k = std::llround(ratio_p1 * static_cast<double>(total_steps));
    // P1 lands on iterations ceil(j*T/k), j = 0..k-1.
    std::vector<PromptSelector> sel(static_cast<std::size_t>(total_steps), PromptSelector::P2);
    for (long long j = 0; j < k; ++j) {
        sel[static_cast<std::size_t>((j * t + k - 1) / k)] = PromptSelector::P1;
    }
    ConditioningSchedule s(ScheduleKind::Alternate, std::move(sel));
    s.m_ratio = ratio_p1;
    return s;
}

double ratio_of(const ConditioningSchedule& schedule) noexcept {
    if (schedule.total_steps() == 0) {
        return 0.0;
    }
    return static_cast<double>(schedule.count(PromptSelector::P1)) / schedule.total_steps();
}

int switch_step_from_ratio(int total_steps, double ratio_p1) {
    require_positive_steps(total_steps);
    require_ratio(ratio_p1);
    return static_cast<int>(std::llround(ratio_p1 * static_cast<double>(total_steps)));
}

}  // namespace blend
