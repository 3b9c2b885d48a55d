#include "chimera/cli.hpp"

int main(int argc, char** argv) {
    return chimera::cli::run_cli(argc, argv);
}
