#pragma once

#include <string>

#include "rabi/errors.hpp"

namespace rabi::detail {

/// Inside a catch block: rethrows the active numerical error with `where`
/// prepended to its message, keeping its type.
[[noreturn]] inline void rethrow_with_context(const std::string& where) {
    try {
        throw;
    } catch (const StepFailure& e) {
        throw StepFailure(where + e.what());
    } catch (const InvariantBreach& e) {
        throw InvariantBreach(where + e.what());
    } catch (const NonConvergedQuadrature& e) {
        throw NonConvergedQuadrature(where + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(where + e.what());
    }
}

}  // namespace rabi::detail
