#include "magdr/cli.hpp"

int main(int argc, char** argv) { return magdr::cli_main(argc, argv); }
