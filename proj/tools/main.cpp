#include "dbsc/cli.hpp"

int main(int argc, char** argv) { return dbsc::cli::run(argc, argv); }
