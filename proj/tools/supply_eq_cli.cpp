#include "cli.hpp"

int main(int argc, char** argv) { return supply_eq::cli::run(argc, argv); }
