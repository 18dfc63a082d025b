#pragma once

namespace ppfm {

/// Entry point for the `ppfm` command-line tool (estimate / tune / simulate /
/// backtest). Returns a process exit code; never throws.
int run_cli(int argc, const char* const* argv);

}  // namespace ppfm
