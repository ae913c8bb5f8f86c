// Command line front end; all the logic lives in the library so tests can
// drive the same entry point in-process.

#include "parec/cli.hpp"

int main(int argc, char** argv) { return parec::cli::main_cli(argc, argv); }
