#include "povmap/cli.hpp"

int main(int argc, char** argv) { return povmap::run(argc, argv); }
