#include <iostream>

#include "ckpt_arbiter/cli.hpp"

int main(int argc, char** argv) {
    return ckpt_arbiter::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
