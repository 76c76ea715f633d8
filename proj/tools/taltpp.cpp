#include "taltpp/cli.hpp"

int main(int argc, char** argv) { return taltpp::run_cli(argc, argv); }
