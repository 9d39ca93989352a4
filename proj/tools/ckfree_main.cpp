// SPDX-License-Identifier: Apache-2.0

#include "ckfree/experiment.hpp"

int main(int argc, char** argv) { return ckfree::harness::cli_main(argc, argv); }
