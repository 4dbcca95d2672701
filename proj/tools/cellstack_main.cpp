#include <string>
#include <vector>

#include "cellstack/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cellstack::cli::run(args);
}
