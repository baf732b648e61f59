#include "hetexp/cli.hpp"

int main(int argc, char** argv) { return hetexp::cli::main(argc, argv); }
