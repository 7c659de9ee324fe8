#include "mllmcl/cli.hpp"

int main(int argc, char** argv) { return mllmcl::cli::run(argc, argv); }
