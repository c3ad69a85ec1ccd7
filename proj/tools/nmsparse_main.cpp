// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsparse/cli.hpp"

int main(int argc, char** argv) { return nmsparse::cli_main(argc, argv); }
