#include "mepois/cli.hpp"

int main(int argc, char** argv) { return mepois::cli_main(argc, argv); }
