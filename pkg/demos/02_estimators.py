"""Compare the two error estimators on random points.

E1 uses the min-map for the inequality part, E0 uses the projected residual.
E1 never exceeds E0, and both split exactly into a multiplier part and a
constraint part.
"""

import numpy as np

from npasa import corpus, e0, e1


def main():
    rng = np.random.default_rng(0)
    p = corpus()["circle-min"].problem
    print("     E0        E1     Em1 + Ec")
    for _ in range(8):
        x = rng.uniform(0, 2, size=2)
        lam = rng.uniform(-2, 2, size=1)
        mu = rng.uniform(0, 2, size=p.m) * p.omega.finite_mask
        v0 = e0(p, x, lam, mu)
        v1, m1, c = e1(p, x, lam, mu, full=True)
        print(f"{v0:9.4f} {v1:9.4f} {np.sqrt(m1 + c):9.4f}")


if __name__ == "__main__":
    main()
