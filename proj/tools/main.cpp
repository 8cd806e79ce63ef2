#include "cli.hpp"

int main(int argc, char** argv) { return refjudge::cli::run_cli(argc, argv); }
