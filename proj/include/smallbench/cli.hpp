#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace smallbench {

/// Runs one subcommand (build-vocab, pretrain, finetune, eval, bench,
/// report). `args` excludes the program name. Returns 0 on success, 2 on a
/// usage error (usage text on `err`), 1 on any other failure with a single
/// "smallbench: error[<category>]: <message>" line on `err`.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace smallbench
