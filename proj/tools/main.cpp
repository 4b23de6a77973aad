#include "l1mpc/cli.hpp"

int main(int argc, char** argv) { return l1mpc::cli::run(argc, argv); }
