#include "cashewmap/cli.hpp"

int main(int argc, char** argv) { return cashewmap::run_cli(argc, argv); }
