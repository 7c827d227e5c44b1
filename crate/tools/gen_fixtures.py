"""Regenerate the test-signal fixtures in crates/core/tests/fixtures.

Independent NumPy port of the WaveLab MakeSignal generators used by the
tests. Each fixture holds the signal scaled to unit sample standard
deviation (n - 1 denominator), one value per line, 17 significant digits.
"""

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures"


def grid(n):
    return np.arange(1, n + 1) / n


def mishmash(n):
    t = grid(n)
    quad_chirp = np.sin((np.pi / 3) * t * (n * t**2))
    hi_sine = np.sin(np.pi * (n * 0.6902) * t)
    lin_chirp = np.sin(np.pi * t * (n * 0.125 * t))
    return quad_chirp + hi_sine + lin_chirp


def werner_sorrows(n):
    t = grid(n)
    sig = np.sin(np.pi * t * (n / 2 * t**2))
    sig = sig + np.sin(np.pi * (n * 0.6902) * t)
    sig = sig + np.sin(np.pi * t * (n * t))
    pos = [0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81]
    hgt = [4, 5, 3, 4, 5, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2]
    wth = [0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005]
    for p, h, w in zip(pos, hgt, wth):
        sig = sig + h / (1 + np.abs((t - p) / w)) ** 4
    return sig


def lo_sine(n):
    return np.sin(np.pi * (n * 0.3333) * grid(n))


SIGNALS = {"MishMash": mishmash, "WernerSorrows": werner_sorrows, "LoSine": lo_sine}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, gen in SIGNALS.items():
        for n in (1024, 1280):
            sig = gen(n)
            sig = sig / np.std(sig, ddof=1)
            path = OUT / f"{name}_{n}.csv"
            path.write_text("".join(f"{v:.16e}\n" for v in sig))
            print(path)


if __name__ == "__main__":
    main()
