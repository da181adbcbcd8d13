// Pedal and foot-switch control changes to semantic engine actions.
#pragma once

#include <map>
#include <optional>
#include <variant>
#include <vector>

#include "qguitar/midi.hpp"
#include "qguitar/quantum.hpp"

namespace qguitar::control {

using quantum::Axis;
using quantum::Basis;

enum class PedalMode { Incremental, Absolute };
enum class Taper { Linear, Audio };
enum class Bus { Classical, Quantum };

struct RotateBy {
    Axis axis;
    double angle;  // radians
    bool operator==(const RotateBy&) const = default;
};

struct SetAbsoluteAngle {
    Axis axis;
    double angle;  // radians
    bool operator==(const SetAbsoluteAngle&) const = default;
};

struct TriggerMeasurement {
    Basis basis;
    bool operator==(const TriggerMeasurement&) const = default;
};

struct SetBusGain {
    Bus bus;
    double gain;  // linear, 0..1
    bool operator==(const SetBusGain&) const = default;
};

struct SelectAxis {
    Axis axis;
    bool operator==(const SelectAxis&) const = default;
};

using MappedAction = std::variant<RotateBy, SetAbsoluteAngle, TriggerMeasurement, SetBusGain, SelectAxis>;

/// Controller assignments and response laws.
///
/// Two rotation pedals by default: CC 20 drives X, CC 21 drives Y. The pedal
/// named by switchable_cc flips between its mapped axis and alternate_axis on
/// each press of axis_switch_cc, which is how two pedals reach all three axes.
struct ControlMapping {
    std::map<int, Axis> rotation_cc{{20, Axis::X}, {21, Axis::Y}};
    int switchable_cc = 21;
    Axis alternate_axis = Axis::Z;
    int axis_switch_cc = 22;
    int measure_cc = 23;
    Basis measure_basis = Basis::Z;
    std::optional<int> measure_x_cc = 24;
    int classical_gain_cc = 25;
    int quantum_gain_cc = 26;
    PedalMode mode = PedalMode::Incremental;
    double sensitivity = 6.283185307179586;  // radians per full 0..127 sweep
    int threshold = 64;
    Taper taper = Taper::Audio;

    /// Throws std::invalid_argument naming the first broken constraint.
    void validate() const;
};

// Last seen value of every mapped controller, plus the switchable pedal's
// current axis. Controllers that have not been seen are absent.
struct PedalState {
    std::map<int, int> last_value;
    std::optional<Axis> switchable_axis;  // unset means the pedal's mapped axis

    bool operator==(const PedalState&) const = default;
};

bool detect_rising_edge(std::optional<int> prev, int value, int threshold);

// Linear: v/127. Audio: (v/127)^2.
double gain_from_cc(int value, Taper taper);

// Axis the pedal on `controller` currently drives.
Axis current_axis(const ControlMapping& mapping, const PedalState& state, int controller);

/// Pure translation of one event. Non-CC events and unmapped controllers
/// produce no actions and leave the state unchanged.
std::vector<MappedAction> map_event(const midi::MidiEvent& event, const ControlMapping& mapping, PedalState& state);

}  // namespace qguitar::control
