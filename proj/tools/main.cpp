#include "gusl/cli.hpp"

int main(int argc, char** argv) { return gusl::cli::run_cli(argc, argv); }
