// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include "n2n/cli.h"

int main(int argc, char** argv) { return n2n::cli::run_cli(argc, argv); }
