#pragma once

#include "iondfs/qstate.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace iondfs {

// Four-stage fluorescence readout that distinguishes |0>, |1>, a leaked ion
// and an ion lost before readout. Stage order: direct check, |0> probe,
// leak probe, |1> probe. B = bright, D = dark.
enum class ReadoutSymbol { Zero, One, Leak, EarlyLoss };

using StagePattern = std::array<bool, 4>;  // true = bright

inline ReadoutSymbol decode_stages(const StagePattern& p) {
    if (p[0]) return ReadoutSymbol::EarlyLoss;
    if (p[1]) return ReadoutSymbol::Zero;
    if (p[2]) return ReadoutSymbol::Leak;
    if (p[3]) return ReadoutSymbol::One;
    return ReadoutSymbol::Leak;  // dark everywhere: ion left the qubit manifold
}

// Stage-level error model. f0/f1 are the probabilities that a true |0> / |1>
// lights up at its own stage; a miss falls through to the next compatible
// stage. A true leaked ion is bright at stage three with probability
// leak_stage3; otherwise it stays dark to the end (also decoded Leak).
struct AssignmentModel {
    double f0 = 0.996;
    double f1 = 0.981;
    double leak_stage3 = 0.5;
};

struct IonReadout {
    ReadoutSymbol truth;
    StagePattern pattern;
    ReadoutSymbol decoded;
};

inline IonReadout simulate_readout(ReadoutSymbol truth, const AssignmentModel& m, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    StagePattern p{false, false, false, false};
    switch (truth) {
        case ReadoutSymbol::EarlyLoss:
            p[0] = true;
            break;
        case ReadoutSymbol::Zero:
            if (u(rng) < m.f0) p[1] = true;
            else p[3] = true;  // misread as |1>
            break;
        case ReadoutSymbol::One:
            if (u(rng) < m.f1) p[3] = true;  // else dark everywhere -> Leak
            break;
        case ReadoutSymbol::Leak:
            if (u(rng) < m.leak_stage3) p[2] = true;
            break;
    }
    return {truth, p, decode_stages(p)};
}

inline char symbol_char(ReadoutSymbol s) {
    switch (s) {
        case ReadoutSymbol::Zero: return '0';
        case ReadoutSymbol::One: return '1';
        case ReadoutSymbol::Leak: return 'L';
        default: return 'X';
    }
}

inline ReadoutSymbol symbol_from_char(char c) {
    switch (c) {
        case '0': return ReadoutSymbol::Zero;
        case '1': return ReadoutSymbol::One;
        case 'L': return ReadoutSymbol::Leak;
        case 'X': return ReadoutSymbol::EarlyLoss;
        default: throw std::invalid_argument("unknown readout symbol");
    }
}

struct ShotRecord {
    std::vector<IonReadout> ions;

    bool postselected() const {
        for (const auto& ion : ions) {
            if (ion.decoded == ReadoutSymbol::Leak || ion.decoded == ReadoutSymbol::EarlyLoss)
                return false;
        }
        return true;
    }

    std::string decoded_string() const {
        std::string s;
        for (const auto& ion : ions) s.push_back(symbol_char(ion.decoded));
        return s;
    }
};

// Full readout of one shot; `truth` holds per-ion true symbols ('0','1','L','X').
inline ShotRecord readout_shot(const std::string& truth, const AssignmentModel& m, Rng& rng) {
    ShotRecord rec;
    for (char c : truth) rec.ions.push_back(simulate_readout(symbol_from_char(c), m, rng));
    return rec;
}

struct PostselectionSummary {
    int total = 0;
    int kept = 0;
    double survival() const { return total > 0 ? static_cast<double>(kept) / total : 0.0; }
};

inline PostselectionSummary postselect(const std::vector<ShotRecord>& shots) {
    PostselectionSummary s;
    s.total = static_cast<int>(shots.size());
    for (const auto& rec : shots) s.kept += rec.postselected();
    return s;
}

// Expected fraction of shots in which none of n_ions has leaked after time T
// at per-ion leakage rate lambda.
inline double survival_probability(double lambda, double T, int n_ions) {
    if (lambda < 0.0 || T < 0.0 || n_ions < 0) throw std::invalid_argument("survival: negative input");
    return std::exp(-lambda * T * n_ions);
}

inline std::vector<double> survival_curve(double lambda, const std::vector<double>& times, int n_ions) {
    std::vector<double> out;
    out.reserve(times.size());
    for (double t : times) out.push_back(survival_probability(lambda, t, n_ions));
    return out;
}

// Leakage rate matching a given single-ion survival fraction after time T.
inline double leakage_rate_from_survival(double survival, double T) {
    if (!(survival > 0.0 && survival <= 1.0) || T <= 0.0)
        throw std::invalid_argument("leakage_rate_from_survival: bad input");
    return -std::log(survival) / T;
}

inline std::string readout_csv(const std::vector<ShotRecord>& shots) {
    std::ostringstream os;
    os << "shot,ion,truth,stage1,stage2,stage3,stage4,decoded,shot_kept\n";
    for (std::size_t s = 0; s < shots.size(); ++s) {
        const bool kept = shots[s].postselected();
        for (std::size_t i = 0; i < shots[s].ions.size(); ++i) {
            const auto& ion = shots[s].ions[i];
            os << s << "," << i << "," << symbol_char(ion.truth);
            for (bool b : ion.pattern) os << "," << (b ? "B" : "D");
            os << "," << symbol_char(ion.decoded) << "," << (kept ? 1 : 0) << "\n";
        }
    }
    return os.str();
}

}  // namespace iondfs
