#include "feateval/cli.hpp"

int main(int argc, char** argv) { return feateval::cli::run_cli(argc, argv); }
