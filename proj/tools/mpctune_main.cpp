#include "mpctune/cli.hpp"

int main(int argc, char** argv) { return mpctune::run_cli(argc, argv); }
