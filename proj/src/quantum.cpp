#include "qguitar/quantum.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qguitar::quantum {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

char lower_single(std::string_view text) {
    if (text.size() != 1) {
        return '\0';
    }
    return static_cast<char>(std::tolower(static_cast<unsigned char>(text.front())));
}

}  // namespace

std::string_view to_string(Axis axis) {
    switch (axis) {
        case Axis::X: return "X";
        case Axis::Y: return "Y";
        case Axis::Z: return "Z";
    }
    return "?";
}

std::string_view to_string(Basis basis) {
    return basis == Basis::Z ? "Z" : "X";
}

Axis parse_axis(std::string_view text) {
    switch (lower_single(text)) {
        case 'x': return Axis::X;
        case 'y': return Axis::Y;
        case 'z': return Axis::Z;
        default: throw std::invalid_argument("unknown rotation axis '" + std::string(text) + "'");
    }
}

Basis parse_basis(std::string_view text) {
    switch (lower_single(text)) {
        case 'z': return Basis::Z;
        case 'x': return Basis::X;
        default: throw std::invalid_argument("unknown measurement basis '" + std::string(text) + "'");
    }
}

QubitState new_qubit() { return QubitState{}; }

QubitState zero_state() { return {{1.0, 0.0}, {0.0, 0.0}}; }
QubitState one_state() { return {{0.0, 0.0}, {1.0, 0.0}}; }
QubitState plus_state() { return {{kInvSqrt2, 0.0}, {kInvSqrt2, 0.0}}; }
QubitState minus_state() { return {{kInvSqrt2, 0.0}, {-kInvSqrt2, 0.0}}; }

QubitState normalized(const QubitState& state) {
    const double n = std::sqrt(state.norm_squared());
    if (!(n > 0.0) || !std::isfinite(n)) {
        return new_qubit();
    }
    return {state.alpha / n, state.beta / n};
}

QubitState rotate(const QubitState& state, Axis axis, double angle) {
    if (!std::isfinite(angle)) {
        throw std::invalid_argument("rotation angle must be finite");
    }
    const double c = std::cos(angle / 2.0);
    const double s = std::sin(angle / 2.0);
    const Amplitude a = state.alpha;
    const Amplitude b = state.beta;
    QubitState out;
    switch (axis) {
        case Axis::X: {
            // [[c, -is], [-is, c]]
            const Amplitude mis{0.0, -s};
            out.alpha = c * a + mis * b;
            out.beta = mis * a + c * b;
            break;
        }
        case Axis::Y:
            // [[c, -s], [s, c]]
            out.alpha = c * a - s * b;
            out.beta = s * a + c * b;
            break;
        case Axis::Z: {
            // diag(e^{-i angle/2}, e^{+i angle/2})
            const Amplitude down{c, -s};
            const Amplitude up{c, s};
            out.alpha = down * a;
            out.beta = up * b;
            break;
        }
    }
    return normalized(out);
}

Probabilities born_probabilities(const QubitState& state, Basis basis) {
    double p0 = 0.0;
    double p1 = 0.0;
    if (basis == Basis::Z) {
        p0 = std::norm(state.alpha);
        p1 = std::norm(state.beta);
    } else {
        p0 = std::norm(state.alpha + state.beta) / 2.0;
        p1 = std::norm(state.alpha - state.beta) / 2.0;
    }
    const double total = p0 + p1;
    if (total > 0.0) {
        p0 /= total;
        p1 = 1.0 - p0;
    }
    return {p0, p1};
}

std::pair<MeasurementOutcome, QubitState> measure(const QubitState& state, Basis basis, Rng& rng) {
    const Probabilities p = born_probabilities(state, basis);
    const double u = rng.uniform();
    const int bit = u < p.p0 ? 0 : 1;
    MeasurementOutcome outcome{bit, basis, bit == 0 ? p.p0 : p.p1};
    QubitState collapsed;
    if (basis == Basis::Z) {
        collapsed = bit == 0 ? zero_state() : one_state();
    } else {
        collapsed = bit == 0 ? plus_state() : minus_state();
    }
    return {outcome, collapsed};
}

BlochVector bloch_coordinates(const QubitState& state) {
    const Amplitude cross = std::conj(state.alpha) * state.beta;
    return {2.0 * cross.real(), 2.0 * cross.imag(), std::norm(state.alpha) - std::norm(state.beta)};
}

double fidelity(const QubitState& a, const QubitState& b) {
    return std::norm(std::conj(a.alpha) * b.alpha + std::conj(a.beta) * b.beta);
}

}  // namespace qguitar::quantum
