"""Hard decisions, missed-detection / false-alarm rates and threshold sweeps."""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DecisionResult:
    decisions: np.ndarray
    threshold: float


@dataclass(frozen=True)
class ErrorRates:
    """``pm`` and ``pfa``; NaN marks a rate whose denominator is empty."""

    pm: float
    pfa: float

    @property
    def pm_defined(self):
        return not math.isnan(self.pm)

    @property
    def pfa_defined(self):
        return not math.isnan(self.pfa)


def decide(a, threshold):
    """Flag entries strictly above ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    a = np.asarray(a, dtype=float).ravel()
    return DecisionResult((a > threshold).astype(np.int8), float(threshold))


def _as_truth(truth):
    active = getattr(truth, "active", truth)
    return np.asarray(active).ravel().astype(bool)


def error_rates(dec, truth):
    d = np.asarray(getattr(dec, "decisions", dec)).ravel().astype(bool)
    t = _as_truth(truth)
    if d.shape != t.shape:
        raise ValueError(f"decision length {d.size} != truth length {t.size}")
    n_act = int(t.sum())
    n_inact = t.size - n_act
    pm = np.count_nonzero(t & ~d) / n_act if n_act else math.nan
    pfa = np.count_nonzero(~t & d) / n_inact if n_inact else math.nan
    return ErrorRates(float(pm), float(pfa))


def roc_sweep(a, truth, thresholds):
    """``[(threshold, pm, pfa), ...]`` for ascending ``thresholds``."""
    thresholds = [float(x) for x in thresholds]
    if any(y < x for x, y in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    out = []
    for th in thresholds:
        r = error_rates(decide(a, th), truth)
        out.append((th, r.pm, r.pfa))
    return out


def aggregate(sweeps, pooled=False, truths=None):
    """Combine per-trial sweeps over the same thresholds.

    Default: mean of the per-trial rates, ignoring undefined (NaN) ones.
    With ``pooled=True`` the counts are pooled instead, which needs
    ``truths`` (one per sweep) to recover the denominators.
    """
    sweeps = [list(s) for s in sweeps]
    if not sweeps:
        return []
    ths = [row[0] for row in sweeps[0]]
    for s in sweeps[1:]:
        if [row[0] for row in s] != ths:
            raise ValueError("sweeps use different thresholds")
    pm = np.array([[row[1] for row in s] for s in sweeps], dtype=float)
    pfa = np.array([[row[2] for row in s] for s in sweeps], dtype=float)
    if not pooled:
        return [(th, _nanmean(pm[:, k]), _nanmean(pfa[:, k])) for k, th in enumerate(ths)]
    if truths is None or len(truths) != len(sweeps):
        raise ValueError("pooled aggregation needs one truth per sweep")
    n_act = np.array([_as_truth(t).sum() for t in truths], dtype=float)
    n_inact = np.array([_as_truth(t).size for t in truths], dtype=float) - n_act
    out = []
    for k, th in enumerate(ths):
        miss = np.nansum(pm[:, k] * n_act)
        fa = np.nansum(pfa[:, k] * n_inact)
        out.append((th, miss / n_act.sum() if n_act.sum() else math.nan,
                    fa / n_inact.sum() if n_inact.sum() else math.nan))
    return out


def _nanmean(x):
    x = x[~np.isnan(x)]
    return float(x.mean()) if x.size else math.nan
