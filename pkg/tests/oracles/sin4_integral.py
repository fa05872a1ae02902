"""Reference value of int_0^inf sin^4(x) / x^2 dx, computed independently with mpmath.

Run once with ``python tests/oracles/sin4_integral.py``; the printed value is
frozen in ``SIN4_INTEGRAL`` in the tests. The head [0, A] is integrated lobe by
lobe. Beyond A the mean 3 / (8 x^2) is integrated exactly and only the
zero-mean oscillatory remainder goes to ``quadosc``. A is doubled until two
successive values agree to 12 digits.
"""

import mpmath as mp

mp.mp.dps = 25


def f(x):
    return mp.sin(x) ** 4 / x**2


def remainder(x):
    return f(x) - mp.mpf(3) / (8 * x**2)


def estimate(A):
    n = int(A / mp.pi)
    head = mp.quad(f, [mp.mpf(0)] + [k * mp.pi for k in range(1, n + 1)] + [A])
    return head + mp.mpf(3) / (8 * A) + mp.quadosc(remainder, [A, mp.inf], omega=2)


def main():
    A, prev = mp.mpf(4), None
    while True:
        v = estimate(A)
        print(f"A = {mp.nstr(A, 6)}: {mp.nstr(v, 22)}")
        if prev is not None and abs(v - prev) < 1e-12 * abs(v):
            break
        prev, A = v, 2 * A
    print("reference:", mp.nstr(v, 20))


if __name__ == "__main__":
    main()
