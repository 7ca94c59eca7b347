"""Line-by-line reference traces for the Adam-family steps.

Written independently of the Rust implementation; the printed values are
frozen into tests/algorithm_traces.rs. Run with `python3 adam_family.py`.
"""
import math


def psi(g):
    s = sum(abs(x) for x in g)
    if s == 0.0:
        return list(g)
    return [(1.0 - abs(x) / s) * x for x in g]


def adamw(theta, grads, lr=0.001, b1=0.9, b2=0.999, eps=1e-8, wd=0.0, agr=True, sched=1.0):
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    t = 0
    for df in grads:
        t += 1
        g = [d + wd * th for d, th in zip(df, theta)]
        gb = psi(g) if agr else g
        m = [b1 * mi + (1.0 - b1) * gi for mi, gi in zip(m, gb)]
        v = [b2 * vi + (1.0 - b2) * gi * gi for vi, gi in zip(v, g)]
        mh = [mi / (1.0 - b1 ** t) for mi in m]
        vh = [vi / (1.0 - b2 ** t) for vi in v]
        theta = [th - sched * (lr * a / (math.sqrt(b) + eps) + wd * th)
                 for th, a, b in zip(theta, mh, vh)]
    return theta, m, v


def adam(theta, grads, lr=0.001, b1=0.9, b2=0.999, eps=1e-8, wd=0.0, agr=True):
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    t = 0
    for df in grads:
        t += 1
        g = [d + wd * th for d, th in zip(df, theta)]
        gb = psi(g) if agr else g
        m = [b1 * mi + (1.0 - b1) * gi for mi, gi in zip(m, gb)]
        v = [b2 * vi + (1.0 - b2) * gi * gi for vi, gi in zip(v, g)]
        mh = [mi / (1.0 - b1 ** t) for mi in m]
        vh = [vi / (1.0 - b2 ** t) for vi in v]
        theta = [th - lr * a / (math.sqrt(b) + eps) for th, a, b in zip(theta, mh, vh)]
    return theta, m, v


def adan(theta, grads, lr=0.001, b1=0.02, b2=0.08, b3=0.01, eps=1e-8, wd=0.0, agr=True):
    # k = 0 initializes m0 = psi(g0), v0 = 0, n0 = g0^2 and takes the first update.
    # k = 1 uses v1 = gbar1 - g0; later steps use the recursive v line.
    m = v = n = prev = None
    for k, g in enumerate(grads):
        gb = psi(g) if agr else list(g)
        if k == 0:
            m = list(gb)
            v = [0.0] * len(g)
            n = [x * x for x in g]
        else:
            m = [(1.0 - b1) * mi + b1 * x for mi, x in zip(m, gb)]
            if k == 1:
                v = [x - p for x, p in zip(gb, prev)]
            else:
                v = [(1.0 - b2) * vi + b2 * (x - p) for vi, x, p in zip(v, gb, prev)]
            d = [x + (1.0 - b2) * (x - p) for x, p in zip(g, prev)]
            n = [(1.0 - b3) * ni + b3 * di * di for ni, di in zip(n, d)]
        step = [lr / (math.sqrt(ni) + eps) for ni in n]
        theta = [(th - s * (mi + (1.0 - b2) * vi)) / (1.0 + wd * lr)
                 for th, s, mi, vi in zip(theta, step, m, v)]
        prev = list(g)
    return theta, m, v, n


def show(name, vals):
    print(name, "=", "[" + ", ".join(repr(x) for x in vals) + "]")


if __name__ == "__main__":
    for agr in (True, False):
        tag = "agr" if agr else "vanilla"
        th, m, v = adamw([1.0, 1.0], [[3.0, 1.0]], agr=agr)
        show(f"adamw_{tag}_theta", th); show(f"adamw_{tag}_m", m); show(f"adamw_{tag}_v", v)
        th, m, v = adamw([1.0, -2.0, 0.5], [[3.0, 1.0, -2.0], [0.5, -1.5, 1.0]], wd=0.01, agr=agr)
        show(f"adamw_wd_{tag}_theta", th); show(f"adamw_wd_{tag}_m", m); show(f"adamw_wd_{tag}_v", v)
        th, m, v, n = adan([1.0, 1.0], [[1.0, 0.0], [0.5, 0.5]], agr=agr)
        show(f"adan_{tag}_theta", th); show(f"adan_{tag}_m", m); show(f"adan_{tag}_v", v); show(f"adan_{tag}_n", n)
        th, m, v, n = adan([1.0, -1.0, 0.5], [[1.0, -2.0, 0.5], [0.5, 0.5, -1.0], [-0.25, 1.0, 2.0]], wd=0.02, agr=agr)
        show(f"adan_wd_{tag}_theta", th); show(f"adan_wd_{tag}_m", m); show(f"adan_wd_{tag}_v", v); show(f"adan_wd_{tag}_n", n)
        th, m, v = adam([1.0, 1.0], [[1.0, 1.0]], agr=agr)
        show(f"adam_{tag}_theta", th)
