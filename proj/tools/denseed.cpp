#include "denseed/cli/commands.hpp"

int main(int argc, char** argv) { return denseed::cli::run(argc, argv); }
