#include "hpvd/cli.hpp"

int main(int argc, char** argv) { return hpvd::cli::run_cli(argc, argv); }
