// Placeholder entry point; subcommands land with the pipeline modules.
#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::fprintf(stderr, "branchflow: no subcommands wired yet\n");
  return 2;
}
