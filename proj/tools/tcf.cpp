#include "tcf/cli.hpp"

int main(int argc, char** argv) { return tcf::cli::run(argc, argv); }
