#include "dattr/app.hpp"

int main(int argc, char** argv) { return dattr::app::cli_run(argc, argv); }
