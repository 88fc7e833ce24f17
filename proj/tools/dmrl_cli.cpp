#include "dmrl/harness/cli.hpp"

int main(int argc, char** argv) {
  return dmrl::harness::run_cli(argc, argv, DMRL_SOURCE_DIR "/configs/desk.json");
}
