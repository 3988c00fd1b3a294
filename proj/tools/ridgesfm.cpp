#include "ridgesfm/cli.hpp"

int main(int argc, char** argv) { return ridgesfm::run_cli(argc, argv); }
