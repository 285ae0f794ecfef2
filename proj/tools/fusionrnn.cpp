// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/cli.hpp"

int main(int argc, char** argv) { return frnn::cli::run(argc, argv); }
