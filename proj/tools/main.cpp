#include "jetspec/cli.hpp"

int main(int argc, char** argv) { return jetspec::cli::main_entry(argc, argv); }
