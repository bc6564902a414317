#include "minisns/experiments.hpp"

int main(int argc, char** argv) { return minisns::cli_main(argc, argv); }
