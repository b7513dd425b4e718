#include "nmdr/experiment.hpp"

int main(int argc, char** argv) { return nmdr::run_cli(argc, argv); }
