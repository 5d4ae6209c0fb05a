#include "dtx/cli.hpp"

int main(int argc, char** argv) { return dtx::run_cli(argc, argv); }
