// Regenerates values.txt. Only needed when a change is meant to alter the
// frozen augmentation or training streams.
#include <fstream>
#include <iostream>

#include "scenarios.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: dmt_make_golden OUT\n";
    return 1;
  }
  std::ofstream(argv[1]) << "# frozen outputs of tests/golden/scenarios.cpp\n" << dmt::golden::compute().to_text();
  return 0;
}
