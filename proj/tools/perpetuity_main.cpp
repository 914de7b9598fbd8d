#include "perpetuity/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return perpetuity::dispatch(argc, argv, std::cout, std::cerr);
}
