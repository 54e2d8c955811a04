"""Model fitting for fidelity curves: empirical families, envelopes, ratios.

Fidelity curves produced by the ensemble simulators (or by the analytic
solver) are summarized by weighted nonlinear least-squares fits against a
small set of empirical model families:

* ``exp``               -- ``A exp(-t/tau) + C``;
* ``damped_cos``        -- ``A cos(omega t) exp(-t/tau) + C``;
* ``cos_plus_exp``      -- ``A cos(omega t) + B exp(-t/tau) + C``;
* ``double_damped_cos`` -- ``A1 cos(omega1 t) exp(-t/tau1)
                             + A2 cos(omega2 t) exp(-t/tau2) + C``.

``fit`` is deliberately single-shot: initial guesses are derived from the
data (spectral peak, envelope log-slope, asymptote mean) rather than from a
multistart scan, so a fit is a pure function of its inputs.  ``select_model``
maps modulated-kernel parameters onto the family that describes the
corresponding fidelity morphology.  ``extract_envelope`` pulls the decay
envelope out of an oscillatory curve; ``tau_ratio`` forms the coherence
enhancement ratio of two fits with propagated uncertainty.  ``decorr_delta``
evaluates the decorrelation diagnostic

    Delta(t, t') = <B(t) B(t') rho00(t')> - <B(t) B(t')> <rho00(t)>

whose growth with drive amplitude marks the breakdown of the master-equation
emulation.  The t/t' asymmetry in the second term is intentional and is kept
exactly as written.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

__all__ = [
    "FitModel",
    "FitResult",
    "ModelChoice",
    "DecorrDiagnostic",
    "MODEL_FAMILIES",
    "fit",
    "select_model",
    "extract_envelope",
    "tau_ratio",
    "decorr_delta",
    "NotConvergedWarning",
    "DegenerateDataError",
    "TooFewExtremaError",
    "UnconvergedInputError",
    "IndexMisalignmentError",
    "UnknownFamilyError",
]

# Convergence contract: relative cost change below COST_TOL or the
# evaluation budget is exhausted (the fit is then flagged, not raised).
COST_TOL = 1e-10
MAX_EVALUATIONS = 500

# Weights default to 1 / max(stderr, STDERR_FLOOR)^2; the floor keeps
# noise-free (analytic) curves uniformly weighted and finite.
STDERR_FLOOR = 1e-3

# Smallest-to-largest singular value ratio of the final Jacobian below which
# a fit is marked degenerate (an unidentifiable parameter direction).
DEGENERATE_SV_RATIO = 1e-8


class NotConvergedWarning(UserWarning):
    """Fit stopped on the iteration budget; best-so-far was returned."""


class DegenerateDataError(ValueError):
    """The series carries no signal to fit (constant within rounding)."""


class TooFewExtremaError(ValueError):
    """Fewer than three local maxima above the asymptote."""


class UnconvergedInputError(ValueError):
    """tau_ratio requires both input fits to have converged."""


class IndexMisalignmentError(ValueError):
    """Noise traces and trajectories disagree in shape or alignment."""


class UnknownFamilyError(KeyError):
    """Requested model family is not registered."""


def _eval_exp(p, t):
    a, tau, c = p
    return a * np.exp(-t / tau) + c


def _eval_damped_cos(p, t):
    a, omega, tau, c = p
    return a * np.cos(omega * t) * np.exp(-t / tau) + c


def _eval_cos_plus_exp(p, t):
    a, omega, b, tau, c = p
    return a * np.cos(omega * t) + b * np.exp(-t / tau) + c


def _eval_double_damped_cos(p, t):
    a1, w1, t1, a2, w2, t2, c = p
    return (a1 * np.cos(w1 * t) * np.exp(-t / t1)
            + a2 * np.cos(w2 * t) * np.exp(-t / t2) + c)


_TINY_TAU = 1e-9

# family -> (parameter names, evaluator, lower bounds, upper bounds)
MODEL_FAMILIES = {
    "exp": (
        ("A", "tau", "C"),
        _eval_exp,
        (-np.inf, _TINY_TAU, -np.inf),
        (np.inf, np.inf, np.inf),
    ),
    "damped_cos": (
        ("A", "omega", "tau", "C"),
        _eval_damped_cos,
        (-np.inf, 0.0, _TINY_TAU, -np.inf),
        (np.inf, np.inf, np.inf, np.inf),
    ),
    "cos_plus_exp": (
        ("A", "omega", "B", "tau", "C"),
        _eval_cos_plus_exp,
        (-np.inf, 0.0, -np.inf, _TINY_TAU, -np.inf),
        (np.inf, np.inf, np.inf, np.inf, np.inf),
    ),
    "double_damped_cos": (
        ("A1", "omega1", "tau1", "A2", "omega2", "tau2", "C"),
        _eval_double_damped_cos,
        (-np.inf, 0.0, _TINY_TAU, -np.inf, 0.0, _TINY_TAU, -np.inf),
        (np.inf, np.inf, np.inf, np.inf, np.inf, np.inf, np.inf),
    ),
}


@dataclass(frozen=True)
class FitModel:
    """A model family instance with concrete parameter values."""

    family: str
    params: dict

    def __post_init__(self):
        if self.family not in MODEL_FAMILIES:
            raise UnknownFamilyError(self.family)
        names = MODEL_FAMILIES[self.family][0]
        if tuple(self.params) != names:
            raise ValueError(
                f"parameters {tuple(self.params)} do not match family "
                f"{self.family!r} {names}")

    def vector(self):
        return np.array(list(self.params.values()), dtype=float)

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        return MODEL_FAMILIES[self.family][1](self.vector(), t)

    def primary_tau(self):
        """Decay constant reported for ratios.

        For the two-component family this is the slower (larger) tau,
        which dominates the observable envelope at late times.
        """
        if self.family == "double_damped_cos":
            return max(self.params["tau1"], self.params["tau2"])
        return self.params["tau"]


@dataclass(frozen=True)
class FitResult:
    """Fit output: fitted model, covariance, residual scale, and flags."""

    model: FitModel
    covariance: np.ndarray
    residual_rms: float
    converged: bool
    degenerate: bool = False

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        n = len(self.model.params)
        if cov.shape != (n, n):
            raise ValueError("covariance shape does not match parameter count")
        if self.residual_rms < 0:
            raise ValueError("residual_rms must be nonnegative")
        object.__setattr__(self, "covariance", cov)

    def param_stderr(self, name):
        names = tuple(self.model.params)
        i = names.index(name)
        var = self.covariance[i, i]
        return float(np.sqrt(var)) if var > 0 else 0.0

    def primary_tau_stderr(self):
        if self.model.family != "double_damped_cos":
            return self.param_stderr("tau")
        name = ("tau1" if self.model.params["tau1"] >= self.model.params["tau2"]
                else "tau2")
        return self.param_stderr(name)


@dataclass(frozen=True)
class ModelChoice:
    """select_model outcome: family plus a confidence marker.

    ``low_confidence`` is set when the amplitude sits between the regime
    brackets, where the morphology boundaries are empirically fuzzy.
    """

    family: str
    low_confidence: bool = False


@dataclass(frozen=True)
class DecorrDiagnostic:
    """Decorrelation diagnostic Delta(t, t') at one time pair."""

    t: float
    t_prime: float
    delta: float


def _as_series(series):
    """Normalize input to (times, values, stderr-or-None)."""
    if hasattr(series, "times") and hasattr(series, "mean"):
        t = np.asarray(series.times, dtype=float)
        y = np.asarray(series.mean, dtype=float)
        err = getattr(series, "stderr", None)
        if err is not None:
            err = np.asarray(err, dtype=float)
        return t, y, err
    parts = tuple(series)
    if len(parts) == 2:
        t, y = parts
        err = None
    elif len(parts) == 3:
        t, y, err = parts
        err = np.asarray(err, dtype=float)
    else:
        raise TypeError("series must be EnsembleFidelity-like, (t, y), or (t, y, stderr)")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("series arrays must be matching 1-D")
    return t, y, err


def _asymptote(y):
    tail = max(3, len(y) // 10)
    return float(np.mean(y[-tail:]))


def _spectral_peaks(t, y, how_many):
    """Frequencies (rad/time) of the largest non-DC spectrum maxima.

    The series is detrended by removing its best-fit single exponential
    (falling back to the mean when that fit is unavailable), so a slow
    decay does not mask a weak oscillation riding on it.
    """
    try:
        trend = fit("exp", (t, y)).model.evaluate(t)
    except (DegenerateDataError, ValueError):
        trend = np.mean(y)
    d = y - trend
    mag = np.abs(np.fft.rfft(d))
    dt_mean = (t[-1] - t[0]) / (len(t) - 1)
    freqs = 2.0 * np.pi * np.fft.rfftfreq(len(t), d=dt_mean)
    interior = [k for k in range(1, len(mag) - 1)
                if mag[k] >= mag[k - 1] and mag[k] >= mag[k + 1]]
    # only peaks that clear the spectrum's own floor count; a detrended
    # overdamped series is all floor and must yield no guess at all
    floor = np.median(mag[1:]) if len(mag) > 3 else 0.0
    interior = [k for k in interior if mag[k] > 5.0 * floor]
    interior.sort(key=lambda k: mag[k], reverse=True)
    return [float(freqs[k]) for k in interior[:how_many]]


def _decay_guess(t, y, c_est):
    """Crude tau estimate: first crossing of |y - C| below 1/e of its start."""
    d = np.abs(y - c_est)
    d0 = d[0] if d[0] > 0 else (np.max(d) or 1.0)
    below = np.nonzero(d < d0 / np.e)[0]
    span = t[-1] - t[0]
    if below.size == 0:
        return span
    tau = t[below[0]] - t[0]
    return tau if tau > 0 else span / 3.0


def _envelope_rate_guess(t, y, c_est):
    """Tau from a log-linear fit of envelope maxima; falls back to _decay_guess."""
    try:
        te, env = extract_envelope((t, y))
    except TooFewExtremaError:
        return _decay_guess(t, y, c_est)
    keep = env > 0
    if np.count_nonzero(keep) < 3:
        return _decay_guess(t, y, c_est)
    slope = np.polyfit(te[keep], np.log(env[keep]), 1)[0]
    if slope >= 0:
        return t[-1] - t[0]
    return -1.0 / slope


def _initial_guess(family, t, y):
    c = _asymptote(y)
    a0 = y[0] - c
    if family == "exp":
        return [a0, _decay_guess(t, y, c), c]
    peaks = _spectral_peaks(t, y, 2)
    w = peaks[0] if peaks else 2.0 * np.pi / (t[-1] - t[0])
    tau = _envelope_rate_guess(t, y, c)
    if family == "damped_cos":
        # no credible oscillation peak: assume overdamped, start at omega 0
        return [a0, w if peaks else 0.0, tau, c]
    if family == "cos_plus_exp":
        return [0.5 * a0, w, 0.5 * a0, _decay_guess(t, y, c), c]
    if family == "double_damped_cos":
        # second component: next spectral peak, or a pure decay (omega -> 0)
        w2 = w
        w1 = peaks[1] if len(peaks) > 1 else 0.0
        if w1 > w2:
            w1, w2 = w2, w1
        return [0.5 * a0, w1, tau, 0.5 * a0, w2, tau, c]
    raise UnknownFamilyError(family)


def _start_list(family, t, y):
    """Candidate starting vectors, most plausible first.

    A short-lived component leaves almost no power in the window-wide
    spectrum, so the two-component family also tries starts with the
    second frequency placed below the dominant peak and with a fast
    first decay; the solver keeps whichever start ends cheapest.
    """
    p0 = _initial_guess(family, t, y)
    if family != "double_damped_cos":
        return [p0]
    a1, w1, t1, a2, w2, t2, c = p0
    starts = [p0]
    wtop = max(w1, w2)
    if wtop > 0:
        starts.append([a1, wtop / 3.0, t1 / 3.0, a2, wtop, t2, c])
        starts.append([a1, 0.0, t1, a2, wtop, t2, c])
    return starts


def fit(model_family, series, weights=None):
    """Weighted least-squares fit of one model family to a fidelity series.

    ``series`` is an EnsembleFidelity, ``(t, y)``, or ``(t, y, stderr)``.
    Weights default to ``1/max(stderr, floor)^2`` when a standard error is
    available and to uniform otherwise.  Requires at least three points per
    parameter.  A fit that exhausts its evaluation budget is returned with
    ``converged=False`` rather than raised; a constant series raises
    ``DegenerateDataError``.
    """
    if model_family not in MODEL_FAMILIES:
        raise UnknownFamilyError(model_family)
    names, evaluate, lo, hi = MODEL_FAMILIES[model_family]
    t, y, err = _as_series(series)
    if len(t) < 3 * len(names):
        raise ValueError(
            f"need at least {3 * len(names)} points to fit "
            f"{model_family!r}, got {len(t)}")
    scale = max(np.max(np.abs(y)), 1.0)
    if np.ptp(y) <= 1e-12 * scale:
        raise DegenerateDataError("series is constant")

    # Fit in normalized time t/t[-1].  Rescaling both series of a ratio by a
    # power of two then leaves the solver input bit-identical, so the ratio
    # is exactly invariant; it also conditions the Jacobian.
    t_span = float(t[-1]) if t[-1] > 0 else 1.0
    tn = t / t_span

    stderr_based = False
    if weights is None:
        if err is not None and np.any(err > 0):
            weights = 1.0 / np.maximum(err, STDERR_FLOOR) ** 2
            stderr_based = True
        else:
            weights = np.ones_like(y)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != y.shape:
            raise ValueError("weights shape does not match series")
        stderr_based = True
    sqw = np.sqrt(weights)

    def residuals(p):
        return (evaluate(p, tn) - y) * sqw

    res = None
    dof = max(len(t) - len(names), 1)
    for p0 in _start_list(model_family, tn, y):
        trial = least_squares(residuals, np.clip(p0, lo, hi),
                              bounds=(lo, hi), method="trf",
                              ftol=COST_TOL, xtol=1e-14, gtol=1e-14,
                              max_nfev=MAX_EVALUATIONS)
        if res is None or trial.cost < res.cost:
            res = trial
        # chi-square per point already at noise level: good enough
        if stderr_based and 2.0 * res.cost / dof < 2.0:
            break
    converged = res.status != 0

    jac = res.jac
    sv = np.linalg.svd(jac, compute_uv=False)
    degenerate = bool(sv[-1] <= DEGENERATE_SV_RATIO * sv[0])

    # Covariance: inverse Gauss-Newton Hessian; for unit weights scale by
    # the residual variance so synthetic-noise round trips are calibrated.
    cov = np.linalg.pinv(jac.T @ jac)
    if not stderr_based:
        cov = cov * (2.0 * res.cost / dof)

    unit = np.array([t_span if "tau" in n
                     else 1.0 / t_span if "omega" in n
                     else 1.0 for n in names])
    cov = cov * np.outer(unit, unit)
    model = FitModel(model_family,
                     dict(zip(names, (float(v) for v in res.x * unit))))
    rms = float(np.sqrt(np.mean((evaluate(res.x, tn) - y) ** 2)))
    return FitResult(model=model, covariance=cov, residual_rms=rms,
                     converged=converged, degenerate=degenerate)


def select_model(b0, nu, tau0, tau_c):
    """Pick the empirical family for a modulated-kernel fidelity curve.

    Brackets the amplitude against the special (analytically solvable)
    amplitude ``sqrt(2)*2*pi*nu``-scale value: well below it the curve is an
    undamped cosine riding on an exponential, near it a single damped
    cosine, well above it two damped cosines.  ``nu == 0`` (plain telegraph
    kernel) is a damped cosine, degenerating to a pure exponential when the
    transfer function is overdamped.
    """
    from .master_equation import special_amplitude

    if b0 < 0:
        raise ValueError("b0 must be nonnegative")
    if nu is None or nu == 0:
        gamma2 = 1.0 / tau0
        c = 0.0 if np.isinf(tau_c) else 1.0 / tau_c
        overdamped = (gamma2 - c) ** 2 >= 4.0 * b0 ** 2
        return ModelChoice("exp" if overdamped else "damped_cos")

    special = special_amplitude(tau0, tau_c, nu, variant="sqrt2")
    r = b0 / special
    if abs(r - 1.0) < 0.15:
        bracket = "damped_cos"
    elif r < 1.0:
        bracket = "cos_plus_exp"
    else:
        bracket = "double_damped_cos"

    # near a regime edge the family is a judgment call, so flag it
    near_edge = any(abs(r - edge) < 0.1 * edge for edge in (0.85, 1.15))
    return ModelChoice(bracket, low_confidence=near_edge)


def _refined_maxima(t, d):
    """Local maxima of d with three-point parabolic refinement."""
    t_env = []
    env = []
    for i in range(1, len(d) - 1):
        if not (d[i] > d[i - 1] and d[i] >= d[i + 1] and d[i] > 0):
            continue
        denom = d[i - 1] - 2.0 * d[i] + d[i + 1]
        if denom >= 0:
            t_env.append(t[i])
            env.append(d[i])
            continue
        shift = 0.5 * (d[i - 1] - d[i + 1]) / denom
        shift = float(np.clip(shift, -1.0, 1.0))
        half_step = 0.5 * (t[i + 1] - t[i - 1])
        t_env.append(t[i] + shift * half_step)
        env.append(d[i] - 0.25 * (d[i - 1] - d[i + 1]) * shift)
    return np.array(t_env), np.array(env)


def extract_envelope(series):
    """Locate the decay envelope of an oscillatory fidelity curve.

    Returns ``(t, envelope)`` arrays built from the local maxima of
    ``F - C_est``, each refined by a three-point parabola through the
    neighboring samples.  ``C_est`` starts as the mean of the final 10%
    and is then corrected against the oscillation midline: between two
    adjacent maxima the envelope at the intervening minimum is their
    geometric mean (exact for an exponential envelope), so half the gap
    between that and the minimum depth measures the residual offset.
    Raises ``TooFewExtremaError`` when fewer than three maxima rise
    above the asymptote, e.g. for a monotone decay.
    """
    t, y, _ = _as_series(series)
    c_est = _asymptote(y)
    tm, vm = _refined_maxima(t, y - c_est)
    tn, vn = _refined_maxima(t, c_est - y)
    if len(tm) >= 2 and len(tn) >= 1:
        offsets = []
        for j in range(len(tn)):
            k = int(np.searchsorted(tm, tn[j]))
            if 0 < k < len(tm) and vm[k - 1] > 0 and vm[k] > 0:
                offsets.append(0.5 * (np.sqrt(vm[k - 1] * vm[k]) - vn[j]))
        if offsets:
            c_est += float(np.median(offsets))
            tm, vm = _refined_maxima(t, y - c_est)
    if len(vm) < 3:
        raise TooFewExtremaError(
            f"found {len(vm)} usable maxima, need at least 3")
    return tm, vm


@dataclass(frozen=True)
class TauRatio:
    """Coherence enhancement ratio with linearized standard error."""

    value: float
    stderr: float


def tau_ratio(fit_gm, fit_baseline):
    """tau(GM) / tau(baseline) with propagated standard error."""
    for r in (fit_gm, fit_baseline):
        if not r.converged:
            raise UnconvergedInputError("both fits must have converged")
    tau_g = fit_gm.model.primary_tau()
    tau_b = fit_baseline.model.primary_tau()
    value = tau_g / tau_b
    rel_g = fit_gm.primary_tau_stderr() / tau_g
    rel_b = fit_baseline.primary_tau_stderr() / tau_b
    return TauRatio(value=float(value),
                    stderr=float(abs(value) * np.hypot(rel_g, rel_b)))


def decorr_delta(b_traces, rho00_trajectories, t, t_prime, *, times=None):
    """Decorrelation diagnostic Delta(t, t') for an aligned ensemble.

    ``b_traces`` and ``rho00_trajectories`` are (realization, sample)
    arrays; row i of both must come from the same noise realization.  ``t``
    and ``t_prime`` are sample indices, or times when ``times`` is given
    (nearest sample used).  The two terms average B(t) B(t') rho00(t') and
    B(t) B(t') times the ensemble-mean rho00(t); the first term's t' versus
    the second's t is deliberate.
    """
    b = np.asarray(b_traces, dtype=float)
    rho = np.asarray(rho00_trajectories, dtype=float)
    if b.ndim != 2 or b.shape != rho.shape:
        raise IndexMisalignmentError(
            f"b_traces {b.shape} and rho00_trajectories {rho.shape} must be "
            "equal-shape 2-D arrays")
    if times is not None:
        times = np.asarray(times, dtype=float)
        if times.shape[0] != b.shape[1]:
            raise IndexMisalignmentError("times length does not match samples")
        t_val, tp_val = float(t), float(t_prime)
        i = int(np.argmin(np.abs(times - t_val)))
        j = int(np.argmin(np.abs(times - tp_val)))
        t_out, tp_out = float(times[i]), float(times[j])
    else:
        i, j = int(t), int(t_prime)
        if not (0 <= j < b.shape[1] and 0 <= i < b.shape[1]):
            raise IndexMisalignmentError("sample index out of range")
        t_out, tp_out = float(i), float(j)
    if t_out < tp_out:
        raise ValueError("t must not precede t_prime")
    bb = b[:, i] * b[:, j]
    delta = np.mean(bb * rho[:, j]) - np.mean(bb) * np.mean(rho[:, i])
    return DecorrDiagnostic(t=t_out, t_prime=tp_out, delta=float(delta))
