#include "llpf/cli.hpp"

int main(int argc, char** argv) { return llpf::cli_main(argc, argv); }
