#include <granular/cli.hpp>

int main(int argc, char** argv) { return granular::run_cli(argc, argv); }
