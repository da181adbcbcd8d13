#include "qguitar/control.hpp"

#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace qguitar::control {

void ControlMapping::validate() const {
    auto check_cc = [](int cc, const char* name) {
        if (cc < 0 || cc > 127) {
            throw std::invalid_argument(std::string(name) + " must be a controller number 0..127");
        }
    };
    std::set<int> seen;
    auto claim = [&](int cc, const char* name) {
        check_cc(cc, name);
        if (!seen.insert(cc).second) {
            throw std::invalid_argument(std::string(name) + " reuses controller " + std::to_string(cc));
        }
    };
    if (rotation_cc.empty()) {
        throw std::invalid_argument("at least one rotation controller is required");
    }
    for (const auto& [cc, axis] : rotation_cc) {
        claim(cc, "rotation controller");
    }
    claim(axis_switch_cc, "axis_switch_cc");
    claim(measure_cc, "measure_cc");
    if (measure_x_cc) {
        claim(*measure_x_cc, "measure_x_cc");
    }
    claim(classical_gain_cc, "classical_gain_cc");
    claim(quantum_gain_cc, "quantum_gain_cc");

    const auto switchable = rotation_cc.find(switchable_cc);
    if (switchable == rotation_cc.end()) {
        throw std::invalid_argument("switchable_cc " + std::to_string(switchable_cc) +
                                    " is not a rotation controller");
    }
    if (switchable->second == alternate_axis) {
        throw std::invalid_argument("alternate_axis must differ from the switchable pedal's axis");
    }
    if (!(sensitivity > 0.0) || !std::isfinite(sensitivity)) {
        throw std::invalid_argument("sensitivity must be positive");
    }
    if (threshold < 1 || threshold > 127) {
        throw std::invalid_argument("threshold must be in 1..127");
    }
}

bool detect_rising_edge(std::optional<int> prev, int value, int threshold) {
    return (!prev || *prev < threshold) && value >= threshold;
}

double gain_from_cc(int value, Taper taper) {
    if (value < 0 || value > 127) {
        throw std::invalid_argument("control value " + std::to_string(value) + " outside 0..127");
    }
    const double x = value / 127.0;
    return taper == Taper::Linear ? x : x * x;
}

Axis current_axis(const ControlMapping& mapping, const PedalState& state, int controller) {
    const Axis mapped = mapping.rotation_cc.at(controller);
    if (controller == mapping.switchable_cc && state.switchable_axis) {
        return *state.switchable_axis;
    }
    return mapped;
}

std::vector<MappedAction> map_event(const midi::MidiEvent& event, const ControlMapping& mapping, PedalState& state) {
    std::vector<MappedAction> actions;
    if (event.kind() != midi::EventKind::ControlChange) {
        return actions;
    }
    const int cc = event.controller();
    const int value = event.value();
    if (value < 0 || value > 127) {
        throw std::invalid_argument("control value " + std::to_string(value) + " outside 0..127");
    }

    std::optional<int> prev;
    if (auto it = state.last_value.find(cc); it != state.last_value.end()) {
        prev = it->second;
    }
    bool mapped = true;

    if (mapping.rotation_cc.contains(cc)) {
        const Axis axis = current_axis(mapping, state, cc);
        if (mapping.mode == PedalMode::Incremental) {
            // The first reading only establishes the pedal position.
            if (prev && *prev != value) {
                actions.push_back(RotateBy{axis, (value - *prev) / 127.0 * mapping.sensitivity});
            }
        } else if (!prev || *prev != value) {
            actions.push_back(SetAbsoluteAngle{axis, value / 127.0 * mapping.sensitivity});
        }
    } else if (cc == mapping.axis_switch_cc) {
        if (detect_rising_edge(prev, value, mapping.threshold)) {
            const Axis primary = mapping.rotation_cc.at(mapping.switchable_cc);
            const Axis now = current_axis(mapping, state, mapping.switchable_cc);
            const Axis next = now == primary ? mapping.alternate_axis : primary;
            state.switchable_axis = next;
            actions.push_back(SelectAxis{next});
        }
    } else if (cc == mapping.measure_cc) {
        if (detect_rising_edge(prev, value, mapping.threshold)) {
            actions.push_back(TriggerMeasurement{mapping.measure_basis});
        }
    } else if (mapping.measure_x_cc && cc == *mapping.measure_x_cc) {
        if (detect_rising_edge(prev, value, mapping.threshold)) {
            actions.push_back(TriggerMeasurement{Basis::X});
        }
    } else if (cc == mapping.classical_gain_cc || cc == mapping.quantum_gain_cc) {
        if (!prev || *prev != value) {
            const Bus bus = cc == mapping.classical_gain_cc ? Bus::Classical : Bus::Quantum;
            actions.push_back(SetBusGain{bus, gain_from_cc(value, mapping.taper)});
        }
    } else {
        mapped = false;
    }

    if (mapped) {
        state.last_value[cc] = value;
    }
    return actions;
}

}  // namespace qguitar::control
