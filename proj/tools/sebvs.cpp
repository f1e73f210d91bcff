#include "sebvs/cli.hpp"

int main(int argc, char** argv) { return sebvs::cli::run(argc, argv); }
