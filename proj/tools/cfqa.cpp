#include "cfqa/pipeline.hpp"

int main(int argc, char** argv) { return cfqa::run_cli(argc, argv); }
