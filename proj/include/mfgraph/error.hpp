#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mfgraph {

/// Failure categories raised by the solvers. The CLI maps them onto exit codes.
enum class Errc {
    NonConservativeRates,
    NegativeRate,
    Irreducibility,
    DetailedBalanceViolation,
    AsymmetricWeights,
    NonPositiveMeasure,
    DimensionMismatch,
    UnknownKind,
    NonConvexGenerator,
    DegenerateDissipation,
    NotAnEdge,
    BadExponent,
    PositivityLoss,
    InconsistentTriple,
    NoPotentialStructure,
    NotConcave,
    NonConvergence,
    NonConstantHamiltonian,
    WrongStateCount,
    OutOfDomain,
    MidpointDivergence,
    QuadratureFailure,
    NoMonotonePath,
    NewtonFailure,
    InvalidArgument,
};

inline constexpr std::string_view errc_name(Errc c) {
    switch (c) {
        case Errc::NonConservativeRates: return "NonConservativeRates";
        case Errc::NegativeRate: return "NegativeRate";
        case Errc::Irreducibility: return "Irreducibility";
        case Errc::DetailedBalanceViolation: return "DetailedBalanceViolation";
        case Errc::AsymmetricWeights: return "AsymmetricWeights";
        case Errc::NonPositiveMeasure: return "NonPositiveMeasure";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::UnknownKind: return "UnknownKind";
        case Errc::NonConvexGenerator: return "NonConvexGenerator";
        case Errc::DegenerateDissipation: return "DegenerateDissipation";
        case Errc::NotAnEdge: return "NotAnEdge";
        case Errc::BadExponent: return "BadExponent";
        case Errc::PositivityLoss: return "PositivityLoss";
        case Errc::InconsistentTriple: return "InconsistentTriple";
        case Errc::NoPotentialStructure: return "NoPotentialStructure";
        case Errc::NotConcave: return "NotConcave";
        case Errc::NonConvergence: return "NonConvergence";
        case Errc::NonConstantHamiltonian: return "NonConstantHamiltonian";
        case Errc::WrongStateCount: return "WrongStateCount";
        case Errc::OutOfDomain: return "OutOfDomain";
        case Errc::MidpointDivergence: return "MidpointDivergence";
        case Errc::QuadratureFailure: return "QuadratureFailure";
        case Errc::NoMonotonePath: return "NoMonotonePath";
        case Errc::NewtonFailure: return "NewtonFailure";
        case Errc::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Iterative solvers that stop without meeting their tolerance report
/// NonConvergence / NewtonFailure; everything else is a domain error.
inline constexpr bool is_convergence_failure(Errc c) {
    return c == Errc::NonConvergence || c == Errc::NewtonFailure;
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

namespace detail {

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
    if (!ok) fail(code, what);
}

}  // namespace detail
}  // namespace mfgraph
