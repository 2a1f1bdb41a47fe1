#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace blend {

enum class PromptSelector { P1, P2 };

enum class ScheduleKind { Switch, Alternate, Constant };

std::string_view to_string(ScheduleKind kind) noexcept;

// Which prompt conditions each denoising iteration, in execution order.
// Index 0 is the first iteration run by the sampler (the noisiest timestep).
class ConditioningSchedule {
public:
    static ConditioningSchedule constant(int total_steps, PromptSelector selector);

    // Parses the manifest form, e.g. "1112222". kind defaults to Alternate
    // unless the string is a P1 prefix followed by a P2 suffix.
    static ConditioningSchedule parse(std::string_view selectors);

    int total_steps() const noexcept { return static_cast<int>(m_selections.size()); }
    ScheduleKind kind() const noexcept { return m_kind; }
    const std::vector<PromptSelector>& selections() const noexcept { return m_selections; }
    PromptSelector at(int step_index) const { return m_selections.at(static_cast<std::size_t>(step_index)); }

    // Generating parameters, when the schedule came from one of the factories.
    std::optional<int> switch_step() const noexcept { return m_switch_step; }
    std::optional<int> period() const noexcept { return m_period; }
    std::optional<double> ratio() const noexcept { return m_ratio; }

    int count(PromptSelector selector) const noexcept;

    // "1" for P1, "2" for P2, one character per iteration.
    std::string to_string() const;

    friend bool operator==(const ConditioningSchedule& a, const ConditioningSchedule& b) noexcept {
        return a.m_selections == b.m_selections;
    }

private:
    friend ConditioningSchedule make_switch_schedule(int, int);
    friend ConditioningSchedule make_alternate_schedule(int, int);
    friend ConditioningSchedule make_ratio_schedule(int, double);

    ConditioningSchedule(ScheduleKind kind, std::vector<PromptSelector> selections)
        : m_kind(kind), m_selections(std::move(selections)) {}

    ScheduleKind m_kind = ScheduleKind::Constant;
    std::vector<PromptSelector> m_selections;
    std::optional<int> m_switch_step;
    std::optional<int> m_period;
    std::optional<double> m_ratio;
};

// First m iterations on P1, the remaining total_steps - m on P2. The change
// happens on an iteration boundary, never inside a step.
ConditioningSchedule make_switch_schedule(int total_steps, int switch_step);

// Iteration i (0-based) uses P1 iff i % period == 0. period = 2 puts P1 on
// the even iterations and P2 on the odd ones.
ConditioningSchedule make_alternate_schedule(int total_steps, int period);

// Exactly round(ratio_p1 * total_steps) P1 iterations, spread as evenly as
// possible: iteration i is P1 iff ceil((i+1)k/T) > ceil(ik/T).
ConditioningSchedule make_ratio_schedule(int total_steps, double ratio_p1);

// Fraction of iterations conditioned on P1.
double ratio_of(const ConditioningSchedule& schedule) noexcept;

// Switch step implied by a blend ratio: round(ratio_p1 * total_steps).
int switch_step_from_ratio(int total_steps, double ratio_p1);

}  // namespace blend
