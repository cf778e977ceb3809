#pragma once

#include <iosfwd>

namespace gcsm {

// Entry point behind the gcsm binary, callable in-process by tests. Returns
// the exit status: 0 success, 1 when every experiment cell failed, 2 on usage
// or runtime errors (reported as one `error <CODE>: <message>` line on err).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gcsm
