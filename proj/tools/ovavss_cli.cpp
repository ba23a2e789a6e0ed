#include <cstdio>

int main() {
  std::puts("ovavss: cli under construction");
  return 1;
}
