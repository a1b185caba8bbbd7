"""Independent high-precision oracles used by the tests."""

import math

import mpmath as mp


def mapped_cumulants(S, Q, orders=(4, 6, 8, 10), dps=60):
    """Cumulants of x = (u + n) / sigma by brute-force convolution in high precision.

    u is uniform on the 2^Q message levels, n ~ N(0, 1). Raw moments of u + n are the
    level average of exact Gaussian moments around each level; cumulants follow from
    the moment-cumulant recursion.
    """
    with mp.workdps(dps):
        S = mp.mpf(S)
        N = 2**Q
        levels = [S * (mp.mpf(m) / (N - 1) - mp.mpf(1) / 2) for m in range(N)]
        rmax = max(orders)

        def gauss_moment(k):
            return mp.mpf(0) if k % 2 else mp.mpf(math.prod(range(k - 1, 0, -2)))

        raw = [mp.mpf(1)]
        for r in range(1, rmax + 1):
            acc = mp.mpf(0)
            for u in levels:
                acc += sum(mp.binomial(r, k) * u ** (r - k) * gauss_moment(k) for k in range(r + 1))
            raw.append(acc / N)
        kap = [mp.mpf(0)] * (rmax + 1)
        for r in range(1, rmax + 1):
            kap[r] = raw[r] - sum(mp.binomial(r - 1, j - 1) * kap[j] * raw[r - j] for j in range(1, r))
        sigma2 = kap[2]
        return {r: kap[r] / sigma2 ** (mp.mpf(r) / 2) for r in orders}


def uniform_central_moments(Q, orders=(2, 4, 6, 8, 10)):
    from fractions import Fraction

    N = 2**Q
    mean = Fraction(N - 1, 2)
    return {r: sum((Fraction(m) - mean) ** r for m in range(N)) / N for r in orders}
