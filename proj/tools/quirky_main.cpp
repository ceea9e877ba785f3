#include "quirky/cli.hpp"

int main(int argc, char** argv) { return quirky::cli_dispatch(argc, argv); }
