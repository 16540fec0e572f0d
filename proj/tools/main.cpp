#include "cli.hpp"

int main(int argc, char** argv) { return certigrad::cli::run(argc, argv); }
