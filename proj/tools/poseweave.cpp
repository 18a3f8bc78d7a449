// CLI entry point; subcommands are wired up as pipeline stages land.
#include <cstdio>

int main() {
  std::puts("poseweave: pipeline commands not wired yet");
  return 1;
}
