#include "ipm/cli.hpp"

int main(int argc, char** argv) { return ipm::cli::run(argc, argv); }
