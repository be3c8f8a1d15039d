#include "cli.hpp"

int main(int argc, char** argv) { return irrclr::cli::dispatch(argc, argv); }
