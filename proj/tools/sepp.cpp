#include "sepp/cli.hpp"

int main(int argc, char** argv)
{
    return sepp::cli::main(argc, argv);
}
