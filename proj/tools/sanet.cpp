#include "sanet/app.hpp"

int main(int argc, char** argv) { return sanet::cli::run(argc, argv); }
