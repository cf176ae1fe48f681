#include "laneseg/cli.hpp"

int main(int argc, char** argv) { return laneseg::cli::run(argc, argv); }
