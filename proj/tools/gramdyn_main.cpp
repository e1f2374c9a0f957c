#include "gramdyn/cli.hpp"

int main(int argc, char** argv) { return gramdyn::run(argc, argv); }
