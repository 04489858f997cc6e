#include <string>
#include <vector>

#include "nfps/cli.hpp"

int main(int argc, char** argv) {
  return nfps::cli::run(std::vector<std::string>(argv, argv + argc));
}
