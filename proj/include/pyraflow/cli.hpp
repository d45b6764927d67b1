#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pyraflow {

/// Exit codes: 0 success, 1 I/O failure, 2 validation/config/shape failure,
/// 3 self-check failure. Results go to `out`, diagnostics to `err`.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace pyraflow
