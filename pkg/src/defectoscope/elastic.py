"""Elastic modulus family phi(t) = (t^2 + b)^{p/2} - b^{p/2}, its derivative,
the defect function psi(t) = t phi'(t) - p phi(t), and an automated
admissibility report (convexity, boundedness of psi, power-law blow-up).

For the built-in family alpha and M are analytic:
    phi(t) - t^p is in [-b^{p/2}, 0], so alpha = 1,
    psi(t) = p b^{p/2} - p b (t^2+b)^{p/2-1} increases to sup psi = p b^{p/2}.
Scan-based estimators are reported alongside for cross-checking and are the
only option for user-tabulated moduli.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PowerModulus",
    "TabulatedModulus",
    "HypothesisReport",
    "check_hypotheses",
]


class PowerModulus:
    """phi(t) = (t^2 + b)^{p/2} - b^{p/2} with 1 < p < 2, b >= 0."""

    kind = "power-regularized"

    def __init__(self, p, b=0.0):
        p = float(p)
        b = float(b)
        if not 1.0 < p < 2.0:
            raise ValueError(f"exponent p must satisfy 1 < p < 2, got {p}")
        if b < 0.0:
            raise ValueError(f"regularization b must be >= 0, got {b}")
        self.p = p
        self.b = b

    @property
    def alpha(self):
        """Coefficient of the power-law blow-up phi(t) = alpha t^p + O(1)."""
        return 1.0

    @property
    def M(self):
        """sup |psi| = p b^{p/2} (attained in the limit t -> infinity)."""
        return self.p * self.b ** (self.p / 2.0)

    @property
    def admissible(self):
        return True

    def phi(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0):
            raise ValueError("modulus argument must be nonnegative")
        return (t * t + self.b) ** (self.p / 2.0) - self.b ** (self.p / 2.0)

    def dphi(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0):
            raise ValueError("modulus argument must be nonnegative")
        if self.b == 0.0:
            # p t^{p-1}, with the defining limit dphi(0) = 0 for p > 1
            scalar = t.ndim == 0
            t1 = np.atleast_1d(t)
            out = np.zeros_like(t1)
            pos = t1 > 0
            out[pos] = self.p * t1[pos] ** (self.p - 1.0)
            return float(out[0]) if scalar else out
        return self.p * t * (t * t + self.b) ** (self.p / 2.0 - 1.0)

    def weight(self, t):
        """phi'(t)/t = p (t^2 + b)^{p/2 - 1}, the degenerate diffusion weight."""
        t = np.asarray(t, dtype=np.float64)
        return self.p * (t * t + self.b) ** (self.p / 2.0 - 1.0)

    def psi(self, t):
        """t phi'(t) - p phi(t); for this family p b^{p/2} - p b (t^2+b)^{p/2-1}."""
        t = np.asarray(t, dtype=np.float64)
        if self.b == 0.0:
            return np.zeros_like(t)
        c = self.p * self.b ** (self.p / 2.0)
        return c - self.p * self.b * (t * t + self.b) ** (self.p / 2.0 - 1.0)

    def __repr__(self):
        return f"PowerModulus(p={self.p}, b={self.b})"


class TabulatedModulus:
    """User-supplied modulus given by a callable phi; derivatives by centered
    differences. Must pass check_hypotheses before the minimizer accepts it."""

    kind = "tabulated"

    def __init__(self, p, phi_fn, name="tabulated"):
        p = float(p)
        if not 1.0 < p < 2.0:
            raise ValueError(f"exponent p must satisfy 1 < p < 2, got {p}")
        self.p = p
        self._phi_fn = phi_fn
        self.name = name
        self.alpha = None
        self.M = None
        self.admissible = None

    def phi(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0):
            raise ValueError("modulus argument must be nonnegative")
        return np.asarray(self._phi_fn(t), dtype=np.float64)

    def dphi(self, t):
        t = np.asarray(t, dtype=np.float64)
        e = 1e-7 * np.maximum(t, 1e-3)
        lo = np.maximum(t - e, 0.0)
        return (self.phi(t + e) - self.phi(lo)) / (t + e - lo)

    def weight(self, t):
        t = np.asarray(t, dtype=np.float64)
        tt = np.maximum(t, 1e-300)
        return self.dphi(tt) / tt

    def psi(self, t):
        t = np.asarray(t, dtype=np.float64)
        return t * self.dphi(t) - self.p * self.phi(t)

    def __repr__(self):
        return f"TabulatedModulus(p={self.p}, {self.name!r})"


@dataclass
class HypothesisReport:
    """Outcome of the admissibility scan. checks maps check name -> bool."""

    admissible: bool
    p: float
    alpha: float
    M: float
    alpha_estimate: float
    M_estimate: float
    blowup_residual: float
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "admissible": self.admissible,
            "p": self.p,
            "alpha": self.alpha,
            "M": self.M,
            "alpha_estimate": self.alpha_estimate,
            "M_estimate": self.M_estimate,
            "blowup_residual": self.blowup_residual,
            "checks": dict(self.checks),
            "notes": list(self.notes),
        }


def check_hypotheses(modulus, t_max=1e3, n_scan=400):
    """Scan-based verification of the admissibility hypotheses.

    Checks, on a log-spaced grid [0, t_max]:
      zero_at_origin     phi(0) = 0 and phi'(0) = 0
      strictly_monotone  phi strictly increasing
      strictly_convex    secant slopes strictly increasing
      psi_bounded        sup |psi| on the scan <= M + 1e-9, with tail-growth
                         heuristic for tabulated moduli
      blowup_residual    sup_t |phi(t) - alpha t^p| bounded
      power_ratio_pairs  |phi(t)/t^p - phi(s)/s^p| <= M/(p s^p) for all
                         scanned pairs t >= s >= 1

    For the built-in family alpha and M are the analytic values and the scan
    cross-checks them; for tabulated moduli the endpoint estimates stand in
    (alpha to O(T^-p), M from the scan max).
    """
    if t_max < 1e3:
        raise ValueError("scan must reach at least t = 1e3")
    p = modulus.p
    ts = np.concatenate([[0.0], np.logspace(-4, np.log10(t_max), n_scan)])
    ph = modulus.phi(ts)
    ps = modulus.psi(ts)

    checks = {}
    notes = []

    dph0 = float(np.asarray(modulus.dphi(np.array([0.0])))[0])
    checks["zero_at_origin"] = bool(abs(ph[0]) <= 1e-12 and abs(dph0) <= 1e-6)

    checks["strictly_monotone"] = bool(np.all(np.diff(ph) > 0))

    slopes = np.diff(ph) / np.diff(ts)
    checks["strictly_convex"] = bool(np.all(np.diff(slopes) > -1e-12))

    analytic = isinstance(modulus, PowerModulus)
    alpha = modulus.alpha if analytic else None
    M = modulus.M if analytic else None

    T = ts[-1]
    alpha_est = float(ph[-1] / T**p)
    M_est = float(np.max(np.abs(ps)))

    if analytic:
        checks["psi_bounded"] = bool(M_est <= M + 1e-9)
    else:
        # boundedness is undecidable from a finite scan; flag tail growth
        head = np.abs(ps[ts <= np.sqrt(T)])
        tail = np.abs(ps[ts > np.sqrt(T)])
        m1 = head.max() if head.size else 0.0
        m2 = tail.max() if tail.size else 0.0
        checks["psi_bounded"] = bool(m2 <= 1.5 * m1 + 1e-9)
        notes.append("psi boundedness via tail-growth heuristic (tabulated)")
        alpha = alpha_est
        M = M_est

    tail_mask = ts >= 1.0
    resid = np.max(np.abs(ph[tail_mask] - alpha * ts[tail_mask] ** p))
    if analytic:
        bound = modulus.b ** (p / 2.0) + 1e-9
    else:
        bound = 10.0 * (abs(resid) + 1.0)
        notes.append("blow-up residual bound is informational (tabulated)")
    checks["blowup_residual"] = bool(resid <= bound)

    s = ts[tail_mask]
    phs = ph[tail_mask]
    ratio = phs / s**p
    diff = np.abs(ratio[None, :] - ratio[:, None])  # [i, j] -> |r(s_i) - r(t_j)|
    rhs = np.broadcast_to((M / (p * s**p))[:, None] + 1e-12, diff.shape)
    upper = np.triu(np.ones_like(diff, dtype=bool), k=0)  # pairs t_j >= s_i
    checks["power_ratio_pairs"] = bool(np.all(diff[upper] <= rhs[upper]))

    admissible = all(checks.values())
    report = HypothesisReport(
        admissible=admissible,
        p=p,
        alpha=float(alpha),
        M=float(M),
        alpha_estimate=alpha_est,
        M_estimate=M_est,
        blowup_residual=float(resid),
        checks=checks,
        notes=notes,
    )
    if isinstance(modulus, TabulatedModulus):
        modulus.alpha = float(alpha)
        modulus.M = float(M)
        modulus.admissible = admissible
    return report


def require_admissible(modulus):
    """Raise unless the modulus may be minimized over."""
    ok = modulus.admissible
    if ok is None:
        raise ValueError(
            "tabulated modulus must pass check_hypotheses before minimization"
        )
    if not ok:
        raise ValueError("modulus failed the admissibility hypotheses")
