#include <cstdio>

int main() {
  std::puts("imupose: subcommands pending");
  return 0;
}
