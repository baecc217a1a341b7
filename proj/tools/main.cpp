#include "commands.hpp"

int main(int argc, char** argv) { return claimsrisk::cli::run_cli(argc, argv); }
