#include "commands.hpp"

int main(int argc, char** argv) { return phicascade::cli::run(argc, argv); }
