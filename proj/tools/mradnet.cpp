// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "mradnet/cli.hpp"

int main(int argc, char** argv) { return mradnet::cli::run(argc, argv); }
