#pragma once

namespace magdr {

// Exit codes: 0 success, 1 validation error or usage, 2 runtime failure.
int cli_main(int argc, char** argv);

}  // namespace magdr
