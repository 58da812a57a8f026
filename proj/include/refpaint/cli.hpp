#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace refpaint {

/// Entry point of the `refpaint` tool. Failures print one line
/// `error kind=<kind> message="<text>"` to `err` and return nonzero.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Formats an error the way run_cli reports it.
std::string format_error(const std::string& kind, const std::string& message);

}  // namespace refpaint
