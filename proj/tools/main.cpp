#include "cli.hpp"

int main(int argc, char** argv) { return mlcap::cli::run(argc, argv); }
