#include "beltrami/cli.hpp"

int main(int argc, char** argv) { return beltrami::cli::run_cli(argc, argv); }
