#include "cocgan/cli.hpp"

int main(int argc, char** argv) { return cocgan::run_cli(argc, argv); }
