// Single-qubit state machine: rotations about X/Y/Z, Born-rule measurement
// in the Z or X basis, and Bloch-sphere coordinates.
#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

namespace qguitar::quantum {

using Amplitude = std::complex<double>;

enum class Axis : std::uint8_t { X, Y, Z };
enum class Basis : std::uint8_t { Z, X };

std::string_view to_string(Axis axis);
std::string_view to_string(Basis basis);
// Case-insensitive "x"/"y"/"z". Throws std::invalid_argument otherwise.
Axis parse_axis(std::string_view text);
Basis parse_basis(std::string_view text);

// Normalized pair of amplitudes. Global phase is left alone, so compare
// states with fidelity() or bloch_coordinates(), never with ==.
struct QubitState {
    Amplitude alpha{1.0, 0.0};
    Amplitude beta{0.0, 0.0};

    double norm_squared() const { return std::norm(alpha) + std::norm(beta); }
};

struct BlochVector {
    double x = 0.0;
    double y = 0.0;
    double z = 1.0;

    bool operator==(const BlochVector&) const = default;
};

struct MeasurementOutcome {
    int bit = 0;
    Basis basis = Basis::Z;
    double pre_probability = 1.0;

    bool operator==(const MeasurementOutcome&) const = default;
};

struct Probabilities {
    double p0 = 1.0;
    double p1 = 0.0;
};

/// Seeded uniform source used for measurement.
///
/// The generator is std::mt19937_64 seeded directly with the 64-bit seed;
/// each uniform draw takes one 64-bit output and keeps its top 53 bits, so
/// u = (word >> 11) * 2^-53 lies in [0, 1). Both steps are fully specified by
/// the standard, which makes measurement sequences reproducible across
/// platforms for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

QubitState new_qubit();

// Pure basis states.
QubitState zero_state();
QubitState one_state();
QubitState plus_state();
QubitState minus_state();

/// Applies exp(-i * angle/2 * sigma_axis) and renormalizes.
/// Throws std::invalid_argument when angle is not finite.
QubitState rotate(const QubitState& state, Axis axis, double angle);

Probabilities born_probabilities(const QubitState& state, Basis basis);

/// Samples one outcome with exactly one rng.uniform() draw and returns the
/// collapsed eigenstate of the chosen basis. Outcome 0 is |0> for Z and |+>
/// for X. The X basis is evaluated directly on the amplitudes.
std::pair<MeasurementOutcome, QubitState> measure(const QubitState& state, Basis basis, Rng& rng);

BlochVector bloch_coordinates(const QubitState& state);

// |<a|b>|^2
double fidelity(const QubitState& a, const QubitState& b);

QubitState normalized(const QubitState& state);

}  // namespace qguitar::quantum
