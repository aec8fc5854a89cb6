#include "rclip/cli.hpp"

int main(int argc, char** argv) { return rclip::dispatch(argc, argv); }
