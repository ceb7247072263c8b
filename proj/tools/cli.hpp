#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ugcsim::cli {

/// Entry point shared by the `ugcsim` binary and the integration tests.
/// `args` excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ugcsim::cli
