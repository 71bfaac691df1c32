#include <string>
#include <vector>

#include "nqn_commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return nqn::cli::run_cli(args);
}
