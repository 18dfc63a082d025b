#include "ppfm/cli.hpp"

int main(int argc, char** argv) { return ppfm::run_cli(argc, argv); }
