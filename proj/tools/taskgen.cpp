#include "taskgen_cli.hpp"

int main(int argc, char** argv) { return taskgen::cli::run(argc, argv); }
