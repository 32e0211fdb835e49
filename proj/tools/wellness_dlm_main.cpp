#include "wellness_dlm/cli.hpp"

int main(int argc, char** argv) { return wdlm::dispatch(argc, argv); }
