"""Bivariate copula kernels: densities, h-functions, inverses, and Kendall's tau maps.

All pair-copula families used here carry a single dependence parameter with a
one-to-one map to Kendall's tau, so that a common latent state (Fisher's Z of
tau) can be shared across families.  Negative dependence for the Clayton and
Gumbel copulas is handled by 90-degree rotation; the sign of the native
parameter encodes the orientation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri, stdtr, stdtrit

U_EPS = 1e-10          # copula arguments are clipped to [U_EPS, 1 - U_EPS]
TAU_MAX = 1.0 - 1e-6   # |tau| ceiling for all families
TAU_MIN_ARCH = 1e-4    # |tau| floor for the rotated Clayton/Gumbel variants

_KINDS = ("independence", "gaussian", "student_t", "eclayton", "egumbel")


@dataclass(frozen=True)
class Family:
    """A single-parameter pair-copula family (the model indicator).

    ``student_t`` carries a fixed integer ``df``; the degrees of freedom are
    never estimated, so e.g. t(2) and t(4) are distinct set members.
    """

    kind: str
    df: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.kind == "student_t":
            if not isinstance(self.df, int) or self.df < 1:
                raise ValueError("student_t requires a fixed integer df >= 1")
        elif self.df is not None:
            raise ValueError(f"{self.kind} does not take a df parameter")

    @classmethod
    def independence(cls) -> "Family":
        return cls("independence")

    @classmethod
    def gaussian(cls) -> "Family":
        return cls("gaussian")

    @classmethod
    def student_t(cls, df: int) -> "Family":
        return cls("student_t", df)

    @classmethod
    def eclayton(cls) -> "Family":
        return cls("eclayton")

    @classmethod
    def egumbel(cls) -> "Family":
        return cls("egumbel")

    @property
    def label(self) -> str:
        if self.kind == "student_t":
            return f"student_t({self.df})"
        return self.kind

    @classmethod
    def parse(cls, label: str) -> "Family":
        label = label.strip().lower()
        if label.startswith("student_t(") and label.endswith(")"):
            return cls.student_t(int(label[len("student_t("):-1]))
        return cls(label)

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.label


def default_family_set() -> list[Family]:
    """Five-member candidate set: independence, Gaussian, t(4), eClayton, eGumbel."""
    return [
        Family.independence(),
        Family.gaussian(),
        Family.student_t(4),
        Family.eclayton(),
        Family.egumbel(),
    ]


def check_family_set(families: list[Family]) -> list[Family]:
    """Validate a candidate set: non-empty and duplicate-free."""
    if not families:
        raise ValueError("family set must be non-empty")
    if len(set(families)) != len(families):
        raise ValueError("family set contains duplicates")
    return list(families)


# ---------------------------------------------------------------------------
# scalar/array plumbing

def _as_array(*xs):
    arrs = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in xs))
    return arrs


def _maybe_scalar(out, *inputs) -> float | np.ndarray:
    if all(np.ndim(x) == 0 for x in inputs):
        return float(out)
    return out


def clip_unit(u) -> np.ndarray:
    """Clip copula arguments to the working open unit interval."""
    return np.clip(np.asarray(u, dtype=float), U_EPS, 1.0 - U_EPS)


# ---------------------------------------------------------------------------
# Fisher's Z and Kendall's tau maps

def fisher_z(tau):
    """Fisher's Z transform 0.5*log((1+tau)/(1-tau)); requires |tau| < 1."""
    t = np.asarray(tau, dtype=float)
    if np.any(np.abs(t) >= 1.0):
        raise ValueError("fisher_z requires |tau| < 1")
    return _maybe_scalar(np.arctanh(t), tau)


def fisher_z_inv(z):
    """Inverse Fisher's Z transform, tanh(z); maps the real line into (-1, 1)."""
    return _maybe_scalar(np.tanh(np.asarray(z, dtype=float)), z)


def clamp_tau(family: Family, tau):
    """Clamp tau into the family's working range.

    |tau| is capped at ``TAU_MAX`` for every family; for the rotated
    Clayton/Gumbel variants |tau| is additionally floored at ``TAU_MIN_ARCH``
    to keep the native parameter away from its singular independence limit.
    """
    t = np.clip(np.asarray(tau, dtype=float), -TAU_MAX, TAU_MAX)
    if family.kind in ("eclayton", "egumbel"):
        sign = np.where(t >= 0.0, 1.0, -1.0)
        t = sign * np.maximum(np.abs(t), TAU_MIN_ARCH)
    return _maybe_scalar(t, tau)


def param_to_tau(family: Family, theta):
    """Map a native copula parameter to Kendall's tau (the map g_m)."""
    th = np.asarray(theta, dtype=float)
    if family.kind == "independence":
        out = np.zeros_like(th)
    elif family.kind in ("gaussian", "student_t"):
        if np.any(np.abs(th) >= 1.0):
            raise ValueError("correlation parameter must satisfy |rho| < 1")
        out = (2.0 / np.pi) * np.arcsin(th)
    elif family.kind == "eclayton":
        if np.any(th == 0.0):
            raise ValueError("eclayton parameter must be nonzero")
        a = np.abs(th)
        out = np.sign(th) * a / (a + 2.0)
    elif family.kind == "egumbel":
        if np.any(np.abs(th) < 1.0):
            raise ValueError("egumbel parameter must satisfy |theta| >= 1")
        a = np.abs(th)
        out = np.sign(th) * (1.0 - 1.0 / a)
    else:  # pragma: no cover
        raise ValueError(family.kind)
    return _maybe_scalar(out, theta)


def tau_to_param(family: Family, tau):
    """Map Kendall's tau to the native copula parameter (the map g_m^{-1}).

    tau is clamped via :func:`clamp_tau`; for the rotated families the sign
    of the returned parameter encodes the 90-degree rotation used for
    negative dependence.
    """
    t = np.asarray(tau, dtype=float)
    if np.any(np.abs(t) >= 1.0):
        raise ValueError("tau_to_param requires |tau| < 1")
    t = np.asarray(clamp_tau(family, t), dtype=float)
    if family.kind == "independence":
        out = np.zeros_like(t)
    elif family.kind in ("gaussian", "student_t"):
        out = np.sin(0.5 * np.pi * t)
    elif family.kind == "eclayton":
        a = np.abs(t)
        out = np.where(t >= 0.0, 1.0, -1.0) * 2.0 * a / (1.0 - a)
    elif family.kind == "egumbel":
        a = np.abs(t)
        out = np.where(t >= 0.0, 1.0, -1.0) / (1.0 - a)
    else:  # pragma: no cover
        raise ValueError(family.kind)
    return _maybe_scalar(out, tau)


def state_to_param(family: Family, s):
    """Map the latent Fisher's-Z state to the native copula parameter."""
    return tau_to_param(family, np.tanh(np.asarray(s, dtype=float)))


# ---------------------------------------------------------------------------
# Student t marginal helpers (fixed df; closed forms where available)

def student_t_cdf(x, df: int):
    return stdtr(df, np.asarray(x, dtype=float))


def student_t_quantile(p, df: int):
    """Quantile of the standard t distribution.

    Closed forms are used for df in {1, 2, 4} (the slow general inverse
    dominates the samplers otherwise); other df fall back to scipy.
    """
    p = np.asarray(p, dtype=float)
    if df == 1:
        return np.tan(np.pi * (p - 0.5))
    if df == 2:
        return (2.0 * p - 1.0) * np.sqrt(2.0 / (4.0 * p * (1.0 - p)))
    if df == 4:
        alpha = np.minimum(2.0 * np.sqrt(p * (1.0 - p)), 1.0)
        q = np.cos(np.arccos(alpha) / 3.0) / alpha
        return np.sign(p - 0.5) * 2.0 * np.sqrt(np.maximum(q - 1.0, 0.0))
    return stdtrit(df, p)


# ---------------------------------------------------------------------------
# base (unrotated) kernels; u arguments are pre-clipped, theta in base domain

def _gauss_logc(x, y, rho):
    om = 1.0 - rho * rho
    return -0.5 * np.log(om) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * om)


def _t_const(df: int) -> float:
    from math import lgamma

    return lgamma((df + 2.0) / 2.0) + lgamma(df / 2.0) - 2.0 * lgamma((df + 1.0) / 2.0)


def _t_logc(x, y, rho, df: int):
    om = 1.0 - rho * rho
    q = (x * x - 2.0 * rho * x * y + y * y) / (df * om)
    lmarg = np.log1p(x * x / df) + np.log1p(y * y / df)
    return (
        _t_const(df)
        - 0.5 * np.log(om)
        - 0.5 * (df + 2.0) * np.log1p(q)
        + 0.5 * (df + 1.0) * lmarg
    )


def _clayton_logsum(lu, lv, theta):
    # log(u^-theta + v^-theta - 1), stable for extreme theta
    a = -theta * lu
    b = -theta * lv
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))


def _clayton_logc(lu, lv, theta):
    ls = _clayton_logsum(lu, lv, theta)
    return np.log1p(theta) - (theta + 1.0) * (lu + lv) - (2.0 + 1.0 / theta) * ls


def _gumbel_parts(lu, lv, theta):
    xt = -lu
    yt = -lv
    ls = np.logaddexp(theta * np.log(xt), theta * np.log(yt))
    a = np.exp(ls / theta)
    return xt, yt, ls, a


def _gumbel_logc(lu, lv, theta):
    xt, yt, ls, a = _gumbel_parts(lu, lv, theta)
    return (
        -a
        + (theta - 1.0) * (np.log(xt) + np.log(yt))
        + (xt + yt)
        + (1.0 / theta - 2.0) * ls
        + np.log(a + theta - 1.0)
    )


def _gauss_hfwd(x, y, rho):
    return ndtr((x - rho * y) / np.sqrt(1.0 - rho * rho))


def _t_hfwd(x, y, rho, df: int):
    denom = np.sqrt((df + y * y) * (1.0 - rho * rho) / (df + 1.0))
    return stdtr(df + 1, (x - rho * y) / denom)


def _clayton_hfwd(lu, lv, theta):
    ls = _clayton_logsum(lu, lv, theta)
    return np.exp(-(theta + 1.0) * lv - (1.0 + 1.0 / theta) * ls)


def _gumbel_hfwd(lu, lv, theta):
    xt, yt, ls, a = _gumbel_parts(lu, lv, theta)
    return np.exp(-a + (theta - 1.0) * np.log(yt) + (1.0 / theta - 1.0) * ls + yt)


def _gauss_hfwd_inv(p, y, rho):
    return ndtr(ndtri(p) * np.sqrt(1.0 - rho * rho) + rho * y)


def _t_hfwd_inv(p, y, rho, df: int):
    scale = np.sqrt((df + y * y) * (1.0 - rho * rho) / (df + 1.0))
    return stdtr(df, student_t_quantile(p, df + 1) * scale + rho * y)


def _clayton_hfwd_inv(p, lv, theta):
    # closed-form inverse of the Clayton conditional CDF, in log space
    lg = np.log(np.expm1(-theta / (theta + 1.0) * np.log(p)))
    lbg = -theta * lv + lg
    log_inner = np.where(lbg > 30.0, lbg, np.log1p(np.exp(np.minimum(lbg, 30.0))))
    return np.exp(-log_inner / theta)


def _gumbel_hfwd_inv(p, lv, theta):
    # no closed form: bisection bracket then safeguarded Newton (tol 1e-10)
    lo = np.full_like(p, U_EPS)
    hi = np.full_like(p, 1.0 - U_EPS)
    x = np.full_like(p, 0.5)
    for _ in range(30):
        val = _gumbel_hfwd(np.log(x), lv, theta)
        too_high = val > p
        hi = np.where(too_high, x, hi)
        lo = np.where(too_high, lo, x)
        x = 0.5 * (lo + hi)
    for _ in range(6):
        lx = np.log(x)
        val = _gumbel_hfwd(lx, lv, theta)
        dens = np.exp(_gumbel_logc(lx, lv, theta))
        step = np.where(dens > 0.0, (val - p) / np.maximum(dens, 1e-300), 0.0)
        x_new = x - step
        x = np.where((x_new > lo) & (x_new < hi), x_new, 0.5 * (lo + hi))
        too_high = _gumbel_hfwd(np.log(x), lv, theta) > p
        hi = np.where(too_high, x, hi)
        lo = np.where(too_high, lo, x)
    return np.clip(x, U_EPS, 1.0 - U_EPS)


# ---------------------------------------------------------------------------
# public kernels with rotation handling

def _check_theta(family: Family, theta) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    if family.kind in ("gaussian", "student_t"):
        if np.any(np.abs(th) >= 1.0):
            raise ValueError("correlation parameter must satisfy |rho| < 1")
    elif family.kind == "eclayton":
        if np.any(th == 0.0):
            raise ValueError("eclayton parameter must be nonzero")
    elif family.kind == "egumbel":
        if np.any(np.abs(th) < 1.0):
            raise ValueError("egumbel parameter must satisfy |theta| >= 1")
    return th


def log_density(family: Family, u1, u2, theta=0.0):
    """Log copula density log c(u1, u2; theta).

    Arguments are clipped to the working unit interval.  For the rotated
    families a negative theta evaluates the 90-degree rotation
    c_rot(u1, u2) = c(1 - u1, u2; |theta|).
    """
    th = _check_theta(family, theta)
    u1c, u2c, th = _as_array(clip_unit(u1), clip_unit(u2), th)
    if family.kind == "independence":
        out = np.zeros_like(u1c)
    elif family.kind == "gaussian":
        out = _gauss_logc(ndtri(u1c), ndtri(u2c), th)
    elif family.kind == "student_t":
        x = student_t_quantile(u1c, family.df)
        y = student_t_quantile(u2c, family.df)
        out = _t_logc(x, y, th, family.df)
    else:
        rot = th < 0.0
        u1e = np.where(rot, 1.0 - u1c, u1c)
        lu, lv = np.log(u1e), np.log(u2c)
        if family.kind == "eclayton":
            out = _clayton_logc(lu, lv, np.abs(th))
        else:
            out = _gumbel_logc(lu, lv, np.abs(th))
    return _maybe_scalar(out, u1, u2, theta)


def h_forward(family: Family, u1, u2, theta=0.0):
    """Conditional CDF h(u1 | u2) = d C(u1, u2) / d u2."""
    th = _check_theta(family, theta)
    u1c, u2c, th = _as_array(clip_unit(u1), clip_unit(u2), th)
    if family.kind == "independence":
        out = u1c
    elif family.kind == "gaussian":
        out = _gauss_hfwd(ndtri(u1c), ndtri(u2c), th)
    elif family.kind == "student_t":
        x = student_t_quantile(u1c, family.df)
        y = student_t_quantile(u2c, family.df)
        out = _t_hfwd(x, y, th, family.df)
    else:
        rot = th < 0.0
        u1e = np.where(rot, 1.0 - u1c, u1c)
        lu, lv = np.log(u1e), np.log(u2c)
        if family.kind == "eclayton":
            base = _clayton_hfwd(lu, lv, np.abs(th))
        else:
            base = _gumbel_hfwd(lu, lv, np.abs(th))
        out = np.where(rot, 1.0 - base, base)
    return _maybe_scalar(np.clip(out, U_EPS, 1.0 - U_EPS), u1, u2, theta)


def h_backward(family: Family, u1, u2, theta=0.0):
    """Conditional CDF h(u2 | u1) = d C(u1, u2) / d u1.

    The unrotated families are exchangeable, so this is h_forward with the
    arguments swapped; the rotation only ever flips the first argument.
    """
    th = _check_theta(family, theta)
    u1c, u2c, th = _as_array(clip_unit(u1), clip_unit(u2), th)
    if family.kind == "independence":
        out = u2c
    elif family.kind in ("gaussian", "student_t"):
        return h_forward(family, u2, u1, theta)
    else:
        rot = th < 0.0
        u1e = np.where(rot, 1.0 - u1c, u1c)
        lu, lv = np.log(u2c), np.log(u1e)
        if family.kind == "eclayton":
            out = _clayton_hfwd(lu, lv, np.abs(th))
        else:
            out = _gumbel_hfwd(lu, lv, np.abs(th))
    return _maybe_scalar(np.clip(out, U_EPS, 1.0 - U_EPS), u1, u2, theta)


def h_forward_inverse(family: Family, p, u2, theta=0.0):
    """Solve h_forward(x, u2; theta) = p for x; used for inverse-Rosenblatt sampling."""
    th = _check_theta(family, theta)
    pc, u2c, th = _as_array(clip_unit(p), clip_unit(u2), th)
    if family.kind == "independence":
        out = pc
    elif family.kind == "gaussian":
        out = _gauss_hfwd_inv(pc, ndtri(u2c), th)
    elif family.kind == "student_t":
        out = _t_hfwd_inv(pc, student_t_quantile(u2c, family.df), th, family.df)
    else:
        rot = th < 0.0
        pe = np.where(rot, 1.0 - pc, pc)
        lv = np.log(u2c)
        if family.kind == "eclayton":
            base = _clayton_hfwd_inv(pe, lv, np.abs(th))
        else:
            base = _gumbel_hfwd_inv(pe, lv, np.abs(th))
        out = np.where(rot, 1.0 - base, base)
    return _maybe_scalar(np.clip(out, U_EPS, 1.0 - U_EPS), p, u2, theta)


def h_backward_inverse(family: Family, p, u1, theta=0.0):
    """Solve h_backward(u1, x; theta) = p for x."""
    th = _check_theta(family, theta)
    pc, u1c, th = _as_array(clip_unit(p), clip_unit(u1), th)
    if family.kind == "independence":
        out = pc
    elif family.kind in ("gaussian", "student_t"):
        return h_forward_inverse(family, p, u1, theta)
    else:
        rot = th < 0.0
        u1e = np.where(rot, 1.0 - u1c, u1c)
        lv = np.log(u1e)
        if family.kind == "eclayton":
            out = _clayton_hfwd_inv(pc, lv, np.abs(th))
        else:
            out = _gumbel_hfwd_inv(pc, lv, np.abs(th))
    return _maybe_scalar(np.clip(out, U_EPS, 1.0 - U_EPS), p, u1, theta)


def sample_pair(family: Family, theta, n: int, rng: np.random.Generator):
    """Draw n pairs from the copula by conditional-distribution sampling."""
    u2 = rng.uniform(size=n)
    p = rng.uniform(size=n)
    u1 = h_forward_inverse(family, p, u2, theta)
    return np.asarray(u1), u2
