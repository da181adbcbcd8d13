#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "qguitar/control.hpp"

using namespace qguitar::control;
using qguitar::midi::MidiEvent;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<MappedAction> cc(const ControlMapping& m, PedalState& s, int controller, int value) {
    return map_event(MidiEvent::control_change(0, controller, value), m, s);
}

int count_measurements(const std::vector<MappedAction>& actions) {
    int n = 0;
    for (const auto& a : actions) {
        n += std::holds_alternative<TriggerMeasurement>(a) ? 1 : 0;
    }
    return n;
}

// Oracle for edge counting: crossings from below the threshold (or unseen) to
// at-or-above it.
int count_crossings(const std::vector<int>& values, int threshold) {
    int n = 0;
    bool below = true;
    for (int v : values) {
        if (below && v >= threshold) {
            ++n;
        }
        below = v < threshold;
    }
    return n;
}

}  // namespace

TEST_CASE("incremental rotation examples") {
    ControlMapping m;
    PedalState s;
    CHECK(cc(m, s, 21, 64).empty());  // first reading sets the position
    const auto out = cc(m, s, 21, 96);
    REQUIRE(out.size() == 1);
    const auto& r = std::get<RotateBy>(out[0]);
    CHECK(r.axis == Axis::Y);
    CHECK(r.angle == doctest::Approx(32.0 / 127.0 * kTwoPi).epsilon(1e-15));
    CHECK(r.angle == doctest::Approx(1.583).epsilon(1e-3));
    CHECK(cc(m, s, 21, 96).empty());

    const auto back = cc(m, s, 21, 90);
    CHECK(std::get<RotateBy>(back[0]).angle == doctest::Approx(-6.0 / 127.0 * kTwoPi));
    CHECK(s.last_value.at(21) == 90);
}

TEST_CASE("pedal A drives X by default") {
    ControlMapping m;
    PedalState s;
    cc(m, s, 20, 0);
    const auto out = cc(m, s, 20, 127);
    CHECK(std::get<RotateBy>(out.at(0)) == RotateBy{Axis::X, kTwoPi});
}

TEST_CASE("momentary press is one trigger, release is inert") {
    ControlMapping m;
    PedalState s;
    const auto press = cc(m, s, 23, 127);
    REQUIRE(press.size() == 1);
    CHECK(std::get<TriggerMeasurement>(press[0]).basis == Basis::Z);
    CHECK(cc(m, s, 23, 0).empty());
    CHECK(std::get<TriggerMeasurement>(cc(m, s, 24, 127).at(0)).basis == Basis::X);
}

TEST_CASE("detect_rising_edge") {
    CHECK(detect_rising_edge(0, 127, 64));
    CHECK_FALSE(detect_rising_edge(127, 0, 64));
    CHECK(detect_rising_edge(std::nullopt, 64, 64));
    CHECK_FALSE(detect_rising_edge(64, 127, 64));
    CHECK_FALSE(detect_rising_edge(63, 63, 64));

    // Latch pedal: 0->127, 127->127, 127->0, 0->127.
    const std::vector<std::pair<int, int>> latch = {{0, 127}, {127, 127}, {127, 0}, {0, 127}};
    std::vector<int> fired;
    for (std::size_t i = 0; i < latch.size(); ++i) {
        if (detect_rising_edge(latch[i].first, latch[i].second, 64)) {
            fired.push_back(static_cast<int>(i) + 1);
        }
    }
    CHECK(fired == std::vector<int>{1, 4});
}

TEST_CASE("momentary vs latch press counts") {
    ControlMapping m;
    for (int n = 1; n <= 25; ++n) {
        PedalState momentary;
        int got = 0;
        for (int p = 0; p < n; ++p) {
            got += count_measurements(cc(m, momentary, 23, 127));
            got += count_measurements(cc(m, momentary, 23, 0));
        }
        CHECK(got == n);

        // A latch pedal toggles on each press: on, off, on, ...
        PedalState latch;
        int latched = 0;
        bool on = false;
        for (int p = 0; p < n; ++p) {
            on = !on;
            latched += count_measurements(cc(m, latch, 23, on ? 127 : 0));
        }
        CHECK(latched == (n + 1) / 2);
    }
}

TEST_CASE("edge counting matches crossings for random sequences") {
    std::mt19937_64 gen(9);
    for (int round = 0; round < 200; ++round) {
        ControlMapping m;
        m.threshold = 1 + static_cast<int>(gen() % 127);
        PedalState s;
        std::vector<int> values;
        int triggers = 0;
        for (int i = 0; i < 100; ++i) {
            values.push_back(static_cast<int>(gen() % 128));
            triggers += count_measurements(cc(m, s, 23, values.back()));
        }
        CHECK(triggers == count_crossings(values, m.threshold));
    }
}

TEST_CASE("gain_from_cc") {
    CHECK(gain_from_cc(0, Taper::Audio) == 0.0);
    CHECK(gain_from_cc(127, Taper::Linear) == 1.0);
    CHECK(gain_from_cc(127, Taper::Audio) == 1.0);
    CHECK(gain_from_cc(0, Taper::Linear) == 0.0);
    CHECK(gain_from_cc(64, Taper::Audio) == doctest::Approx((64.0 / 127.0) * (64.0 / 127.0)).epsilon(1e-15));
    CHECK(gain_from_cc(64, Taper::Audio) == doctest::Approx(0.2539).epsilon(1e-3));
    CHECK(gain_from_cc(64, Taper::Linear) == doctest::Approx(64.0 / 127.0));
    CHECK_THROWS_AS(gain_from_cc(128, Taper::Linear), std::invalid_argument);
    CHECK_THROWS_AS(gain_from_cc(-1, Taper::Audio), std::invalid_argument);
}

TEST_CASE("gain controllers emit SetBusGain") {
    ControlMapping m;
    PedalState s;
    const auto c = cc(m, s, 25, 64);
    CHECK(std::get<SetBusGain>(c.at(0)).bus == Bus::Classical);
    CHECK(std::get<SetBusGain>(c.at(0)).gain == doctest::Approx(gain_from_cc(64, Taper::Audio)));
    CHECK(cc(m, s, 25, 64).empty());
    const auto q = cc(m, s, 26, 0);
    CHECK(std::get<SetBusGain>(q.at(0)) == SetBusGain{Bus::Quantum, 0.0});
}

TEST_CASE("unchanged rotation value emits nothing") {
    ControlMapping m;
    PedalState s;
    cc(m, s, 20, 40);
    CHECK(cc(m, s, 20, 40).empty());
}

TEST_CASE("incremental completeness over random partitions") {
    std::mt19937_64 gen(123);
    for (int round = 0; round < 500; ++round) {
        ControlMapping m;
        m.sensitivity = 0.1 + static_cast<double>(gen() % 1000) / 50.0;
        PedalState s;
        cc(m, s, 20, 0);
        std::vector<int> cuts;
        const int steps = 1 + static_cast<int>(gen() % 40);
        for (int i = 0; i < steps; ++i) {
            cuts.push_back(1 + static_cast<int>(gen() % 126));
        }
        cuts.push_back(127);
        std::sort(cuts.begin(), cuts.end());
        double total = 0.0;
        for (int v : cuts) {
            for (const auto& a : cc(m, s, 20, v)) {
                total += std::get<RotateBy>(a).angle;
            }
        }
        CHECK(std::abs(total - m.sensitivity) <= 1e-9);
    }
}

TEST_CASE("axis switch flips pedal B between Y and Z") {
    ControlMapping m;
    PedalState s;
    CHECK(current_axis(m, s, 21) == Axis::Y);
    CHECK(std::get<SelectAxis>(cc(m, s, 22, 127).at(0)).axis == Axis::Z);
    CHECK(current_axis(m, s, 21) == Axis::Z);
    CHECK(cc(m, s, 22, 0).empty());
    cc(m, s, 21, 10);
    CHECK(std::get<RotateBy>(cc(m, s, 21, 20).at(0)).axis == Axis::Z);
    CHECK(std::get<SelectAxis>(cc(m, s, 22, 100).at(0)).axis == Axis::Y);
    CHECK(current_axis(m, s, 20) == Axis::X);
}

TEST_CASE("every axis is reachable from two pedals") {
    // Exhaustive search over the mapper's state machine: switch presses,
    // releases, and one nudge of each pedal from any reached state.
    ControlMapping m;
    std::set<Axis> reached;
    std::vector<PedalState> frontier{PedalState{}};
    std::set<std::optional<Axis>> visited;
    while (!frontier.empty()) {
        PedalState st = frontier.back();
        frontier.pop_back();
        if (!visited.insert(st.switchable_axis).second) {
            continue;
        }
        for (int pedal : {20, 21}) {
            PedalState probe = st;
            cc(m, probe, pedal, 0);
            for (const auto& a : cc(m, probe, pedal, 1)) {
                reached.insert(std::get<RotateBy>(a).axis);
            }
        }
        for (int v : {0, 127}) {
            PedalState next = st;
            cc(m, next, 22, v);
            frontier.push_back(next);
        }
    }
    CHECK(reached == std::set<Axis>{Axis::X, Axis::Y, Axis::Z});
}

TEST_CASE("absolute mode") {
    ControlMapping m;
    m.mode = PedalMode::Absolute;
    PedalState s;
    const auto first = cc(m, s, 20, 64);
    CHECK(std::get<SetAbsoluteAngle>(first.at(0)) == SetAbsoluteAngle{Axis::X, 64.0 / 127.0 * kTwoPi});
    CHECK(cc(m, s, 20, 64).empty());
    CHECK(std::get<SetAbsoluteAngle>(cc(m, s, 20, 127).at(0)).angle == doctest::Approx(kTwoPi));
}

TEST_CASE("unmapped controllers and non-CC events leave state alone") {
    ControlMapping m;
    PedalState s;
    CHECK(cc(m, s, 7, 100).empty());
    CHECK(s.last_value.empty());
    CHECK(map_event(MidiEvent::note_on(0, 60, 100), m, s).empty());
    CHECK(map_event(MidiEvent::pitch_bend(0, 0), m, s).empty());
    CHECK(s == PedalState{});
    cc(m, s, 23, 0);
    CHECK(s.last_value.size() == 1);
}

TEST_CASE("map_event is deterministic") {
    std::mt19937_64 gen(77);
    ControlMapping m;
    PedalState a;
    PedalState b;
    for (int i = 0; i < 2000; ++i) {
        const int controller = 20 + static_cast<int>(gen() % 8);
        const int value = static_cast<int>(gen() % 128);
        CHECK(cc(m, a, controller, value) == cc(m, b, controller, value));
        CHECK(a == b);
    }
}

TEST_CASE("mapping validation") {
    CHECK_NOTHROW(ControlMapping{}.validate());
    {
        ControlMapping m;
        m.measure_cc = 20;
        CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    }
    {
        ControlMapping m;
        m.sensitivity = 0.0;
        CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    }
    {
        ControlMapping m;
        m.threshold = 0;
        CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    }
    {
        ControlMapping m;
        m.threshold = 128;
        CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    }
    {
        ControlMapping m;
        m.alternate_axis = Axis::Y;
        CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    }
    {
        ControlMapping m;
        m.switchable_cc = 30;
        CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    }
    {
        ControlMapping m;
        m.measure_x_cc = 25;
        CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    }
}
