#include "regdistill/cli.hpp"

int main(int argc, char** argv) { return regdistill::cli::run_command(argc, argv); }
