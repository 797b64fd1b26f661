#pragma once

#include <stdexcept>
#include <string>

namespace mstcar {

// Base type for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define MSTCAR_ERROR(Name)                            \
  struct Name : Error {                               \
    explicit Name(const std::string& what)            \
        : Error(std::string(#Name) + ": " + what) {}  \
  }

MSTCAR_ERROR(InvalidEdge);
MSTCAR_ERROR(IsolatedSite);
MSTCAR_ERROR(DisconnectedGraph);
MSTCAR_ERROR(DimensionMismatch);
MSTCAR_ERROR(EigenFailure);
MSTCAR_ERROR(InvalidRho);
MSTCAR_ERROR(NotPositiveDefinite);
MSTCAR_ERROR(SingularDesign);
MSTCAR_ERROR(FactorizationFailure);
MSTCAR_ERROR(InsufficientData);
MSTCAR_ERROR(DegenerateResiduals);
MSTCAR_ERROR(RankDeficiency);
MSTCAR_ERROR(ZeroTotalPopulation);
MSTCAR_ERROR(InsufficientDraws);
MSTCAR_ERROR(ConfigError);
MSTCAR_ERROR(IoError);

#undef MSTCAR_ERROR

}  // namespace mstcar
