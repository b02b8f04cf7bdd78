#include "dqnas/cli.hpp"

int main(int argc, char** argv) { return dqnas::cli::dispatch(argc, argv); }
