"""Independent reference values for the unit tests.

Everything here is computed with numpy/scipy from textbook Marchenko-Pastur
formulas (density integrals, Chebyshev coefficients, polynomial roots), not
from the library. The printed numbers are frozen into the C++ tests; rerun
this script to regenerate them.
"""

import numpy as np
from scipy.integrate import quad


def bump(a, b, p=4):
    def f(x):
        if not a < x < b:
            return 0.0
        u = (2 * x - a - b) / (b - a)
        return (1 - u * u) ** p
    return f


def mp_density(c):
    lo, hi = (1 - np.sqrt(c)) ** 2, (1 + np.sqrt(c)) ** 2
    return lo, hi, lambda x: np.sqrt(max((hi - x) * (x - lo), 0.0)) / (2 * np.pi * c * x)


def mp_stieltjes(c, z):
    """t(z) = int dF(x) / (x - z) for the MP law of ratio c <= 1."""
    lo, hi, rho = mp_density(c)
    re = quad(lambda x: (rho(x) / (x - z)).real, lo, hi, epsabs=1e-15, epsrel=1e-14, limit=400)[0]
    im = quad(lambda x: (rho(x) / (x - z)).imag, lo, hi, epsabs=1e-15, epsrel=1e-14, limit=400)[0]
    return complex(re, im)


def cheb_coeff(f, c, k):
    g = lambda th: f(1 + c + 2 * np.sqrt(c) * np.cos(th)) * np.cos(k * th)
    return quad(g, 0, np.pi, epsabs=1e-15, limit=400, points=None)[0] / np.pi


def gaussian_cov(f, g, c, v, kmax=200):
    # (1 + |V|^2) sum_k k f_k g_k
    return (1 + v) * sum(k * cheb_coeff(f, c, k) * cheb_coeff(g, c, k) for k in range(1, kmax))


def kappa_cov(f, g, c):
    # kappa / (4 c pi^2) R_f R_g with R_f = int_0^pi f(m + r cos) r cos
    m, r = 1 + c, 2 * np.sqrt(c)
    R = lambda h: quad(lambda th: h(m + r * np.cos(th)) * r * np.cos(th), 0, np.pi, epsabs=1e-15, limit=400)[0]
    return R(f) * R(g) / (4 * c * np.pi ** 2)


def real_mean(f, c):
    lo, hi, _ = mp_density(c)
    I = quad(lambda th: f(1 + c + 2 * np.sqrt(c) * np.cos(th)), 0, np.pi, epsabs=1e-15, limit=400)[0]
    return (f(lo) + f(hi)) / 4 - I / (2 * np.pi)


def kappa_mean(f, c):
    # coefficient of kappa: (1/pi) int_0^pi f(1 + c + 2 sqrt(c) cos) cos 2 th
    return cheb_coeff(f, c, 2)


def two_atom_t(a, b, w, c, z):
    """Stieltjes transform of the limit law for F^R = w d_a + (1-w) d_b.

    Companion s = t~ solves z = -1/s + c sum_i w_i l_i / (1 + l_i s); the
    root with Im s > 0 is taken and t = (s + (1 - c)/z) / c.
    """
    s = np.polynomial.Polynomial
    la, lb = a, b
    # multiply out (1 + a s)(1 + b s) s
    pa, pb, ps = s([1, la]), s([1, lb]), s([0, 1])
    poly = (z * ps * pa * pb + pa * pb - c * w * la * ps * pb - c * (1 - w) * lb * ps * pa)
    roots = poly.roots()
    good = [r for r in roots if r.imag > 0 and (z * r).imag >= 0]
    good.sort(key=lambda r: -r.imag)
    st = good[0]
    return (st + (1 - c) / z) / c


if __name__ == "__main__":
    np.set_printoptions(precision=17)
    print("# MP Stieltjes transform, c = 0.5")
    for z in [complex(1.0, 0.05), complex(2.5, 0.3), complex(-1.0, 1.0), complex(0.2, 1e-2)]:
        print(z, repr(mp_stieltjes(0.5, z)))
    print("# Gaussian covariance, bump(1,5), c = 1: V=0 and V=1")
    f = bump(1.0, 5.0)
    print(repr(gaussian_cov(f, f, 1.0, 0.0)), repr(gaussian_cov(f, f, 1.0, 1.0)))
    print("# kappa coefficient of the covariance, bump(1,5), c = 1")
    print(repr(kappa_cov(f, f, 1.0)))
    print("# cross covariance bump(0.2,3) x bump(0.5,4.5), c = 0.5, V = 1; kappa coefficient")
    f1, f2 = bump(0.2, 3.0), bump(0.5, 4.5)
    print(repr(gaussian_cov(f1, f2, 0.5, 1.0)), repr(kappa_cov(f1, f2, 0.5)))
    print("# real-Gaussian mean and kappa coefficient of the mean, bump(1,5), c = 1")
    print(repr(real_mean(f, 1.0)), repr(kappa_mean(f, 1.0)))
    print("# two-atom t(z): a=1, b=3, w=0.5, c=1")
    for z in [complex(0.307767464582, 0.1), complex(2.0, 0.01), complex(5.0, 0.5)]:
        print(z, repr(two_atom_t(1.0, 3.0, 0.5, 1.0, z)))
