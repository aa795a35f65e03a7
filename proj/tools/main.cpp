#include "cli/commands.hpp"

int main(int argc, char** argv) { return scaforge::cli::run(argc, argv); }
