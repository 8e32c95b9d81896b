#pragma once

namespace llpf {

// Entry point of the llpf command-line tool. Returns 0 on success, 1 on a
// validation error (bad flags, config or inputs), 2 on a runtime failure.
int cli_main(int argc, char** argv);

}  // namespace llpf
