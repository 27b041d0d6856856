#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace bilevel {

/// Exit codes: 0 converged or agreeing, 1 not converged or disagreeing,
/// 2 parse or validation failure, 3 instance over the oracle cap.
/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bilevel
