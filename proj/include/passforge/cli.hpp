#pragma once

#include <iosfwd>

namespace passforge {

// Entry point of the passforge tool. Returns 0 on success, 2 on usage and
// configuration errors, 1 on data and input errors.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace passforge
