#include "neuroseq/cli/cli.hpp"

int main(int argc, char** argv)
{
    return neuroseq::cli::run(argc, argv);
}
