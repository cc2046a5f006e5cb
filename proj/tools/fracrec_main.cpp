#include "fracrec/cli.hpp"

int main(int argc, char** argv) { return fracrec::cli::main_entry(argc, argv); }
