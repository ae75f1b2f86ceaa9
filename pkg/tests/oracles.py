"""Independent reference implementations used as test oracles.

Nothing here imports the package; everything is plain Python so a bug in a
numpy/numba path cannot hide in both the code and its check.
"""

from fractions import Fraction

M64 = (1 << 64) - 1


# -- xoshiro256** / splitmix64 -------------------------------------------


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & M64


def xoshiro_ref(state, n):
    s = list(state)
    out = []
    for _ in range(n):
        out.append((rotl((s[1] * 5) & M64, 7) * 9) & M64)
        t = (s[1] << 17) & M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
    return out, s


def splitmix_ref(x):
    x = (x + 0x9E3779B97F4A7C15) & M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31), x


# -- set metrics ----------------------------------------------------------


def set_scores(pairs):
    """``(MR, JS, pw-JS)`` means over ``(truth set, predicted set)`` pairs."""
    mr = js = pw = Fraction(0)
    for y, p in pairs:
        y, p = set(y), set(p)
        inter, union = len(y & p), len(y | p)
        j = Fraction(inter, union) if union else Fraction(0)
        prec = Fraction(inter, len(p)) if p else Fraction(0)
        mr += y == p
        js += j
        pw += j * prec
    n = len(pairs)
    return float(mr / n), float(js / n), float(pw / n)


# -- assignment arithmetic ------------------------------------------------


def assignment_sizes(length, n_children, keep="4/5", take="2/5", cap=8):
    keep, take = Fraction(keep), Fraction(take)
    if n_children > cap:
        take = take * Fraction(cap, n_children)
    return (length * keep.numerator) // keep.denominator, (length * take.numerator) // take.denominator


# -- herding --------------------------------------------------------------


def herding_bruteforce(points, m):
    """Greedy herding in exact arithmetic.

    Returns the chosen indices and the smallest gap between the winning and
    runner-up squared distance over all steps (ties go to the lower index).
    """
    pts = [[Fraction(v) for v in p] for p in points]
    n, d = len(pts), len(pts[0])
    mu = [sum(p[j] for p in pts) / n for j in range(d)]
    chosen, run = [], [Fraction(0)] * d
    gap = None
    for k in range(m):
        dists = []
        for i, p in enumerate(pts):
            if i in chosen:
                continue
            dist = sum((mu[j] - (run[j] + p[j]) / (k + 1)) ** 2 for j in range(d))
            dists.append((dist, i))
        dists.sort()
        if len(dists) > 1:
            g = dists[1][0] - dists[0][0]
            gap = g if gap is None else min(gap, g)
        best = dists[0][1]
        chosen.append(best)
        run = [run[j] + pts[best][j] for j in range(d)]
    return chosen, gap


# -- finite differences ---------------------------------------------------


def central_diff(f, x, h=1e-6):
    g = [0.0] * len(x)
    for i in range(len(x)):
        xp = list(x)
        xm = list(x)
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def max_rel_err(a, b, floor=1e-7):
    return max(abs(x - y) / max(abs(x), abs(y), floor) for x, y in zip(a, b))
