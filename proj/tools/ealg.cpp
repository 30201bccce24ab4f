#include "ealg/cli.hpp"

int main(int argc, char** argv) { return ealg::cli_main(argc, argv); }
