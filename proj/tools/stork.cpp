#include "stork/cli.hpp"

int main(int argc, char** argv) { return stork::cli::main(argc, argv); }
