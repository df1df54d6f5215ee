#pragma once

#include <iosfwd>

namespace depthmup {

/// Entry point of the command line tool. Returns the process exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace depthmup
