"""Standalone oracle: P(sup_{t<=T} |w_t| < eps) for 1-D Brownian motion.

Evaluates the reflection series with exact rational prefactors in mpmath at
50 digits, independently of the package code.  Used to freeze acceptance
constants.

    python scripts/small_ball_oracle.py 0.45 0.5 0.6 0.8 1.0
"""

import sys

import mpmath as mp

mp.mp.dps = 50


def small_ball(eps, T=1, terms=400):
    eps, T = mp.mpf(eps), mp.mpf(T)
    return mp.nsum(
        lambda k: 4 / mp.pi * (-1) ** int(k) / (2 * k + 1) * mp.exp(-((2 * k + 1) ** 2) * mp.pi**2 * T / (8 * eps**2)),
        [0, terms],
    )


if __name__ == "__main__":
    for arg in sys.argv[1:] or ["0.45", "0.5", "0.6", "0.8", "1.0"]:
        print(f"eps={arg}  P={mp.nstr(small_ball(arg), 12)}")
