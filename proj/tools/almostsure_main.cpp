#include "almostsure/cli.hpp"

int main(int argc, char** argv) {
    return almostsure::cli::run_main(argc, argv);
}
