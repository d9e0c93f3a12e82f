#include "pcs/cli.hpp"

int main(int argc, char** argv) { return pcs::cli::parse_and_dispatch(argc, argv); }
