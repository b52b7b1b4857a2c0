#include "clozefact/cli.hpp"

int main(int argc, char** argv) { return clozefact::cli::run(argc, argv); }
