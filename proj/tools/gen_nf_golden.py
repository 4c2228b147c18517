#!/usr/bin/env python3
# Copyright (c) 2026, The qadapt Authors
# SPDX-License-Identifier: Apache-2.0
#
# Golden NormalFloat levels from a 50-digit inverse normal CDF.
# Usage: gen_nf_golden.py BITS > tests/data/nf<BITS>_levels.txt

import sys

import mpmath

mpmath.mp.dps = 50


def linspace(a, b, n):
    return [a + (b - a) * mpmath.mpf(k) / (n - 1) for k in range(n)]


def quantile(p):
    return mpmath.sqrt(2) * mpmath.erfinv(2 * p - 1)


def levels(bits):
    total = mpmath.mpf(2) ** bits
    half = 2 ** (bits - 1)
    tail = (1 / (2 * (total - 1)) + 1 / (2 * total)) / 2
    neg = [mpmath.mpf(0) if p == mpmath.mpf("0.5") else quantile(p) for p in linspace(tail, mpmath.mpf("0.5"), half)]
    pos = [-quantile(p) for p in linspace(mpmath.mpf("0.5"), tail, half + 1)[1:]]
    out = neg + pos
    return [v / out[-1] for v in out]


if __name__ == "__main__":
    for v in levels(int(sys.argv[1])):
        print(mpmath.nstr(v, 30, min_fixed=-1, max_fixed=1))
