#pragma once

#include <iosfwd>

namespace insp::cli {

/// Command-line entry point: serve, run-scripted, optimize, replay, metrics.
/// Returns the process exit code; diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace insp::cli
