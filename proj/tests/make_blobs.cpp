// Writes a synthetic blob dataset: make_blobs <dir> [count] [size] [seed]
#include <cstdio>
#include <cstdlib>
#include <exception>

#include "support/fixtures.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: make_blobs <dir> [count] [size] [seed]\n");
    return 1;
  }
  const int count = argc > 2 ? std::atoi(argv[2]) : 512;
  const int size = argc > 3 ? std::atoi(argv[3]) : 32;
  const auto seed = argc > 4 ? std::strtoull(argv[4], nullptr, 10) : 7ULL;
  try {
    fixtures::write_blob_dir(argv[1], count, size, seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "make_blobs: %s\n", e.what());
    return 2;
  }
  return 0;
}
