#include "mcfo/cli.hpp"

int main(int argc, char** argv) { return mcfo::cli_main(argc, argv); }
