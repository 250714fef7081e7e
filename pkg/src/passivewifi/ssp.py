"""Sequential probabilistic localizer over the RP grid.

Each fix scores every reference point by the product of its per-AP
density values at the observed RSSIs, gated by a soft motion window
centered on the previous estimate.  Scores are accumulated in log space;
a linear-space twin of the same computation exists for cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FingerprintVector, Location
from .kde import PdfTable

DENSITY_FLOOR = 1e-12
TOP_K = 5

WINDOW_SHAPES = ("gaussian", "hann", "tukey")


class NoObservableApsError(ValueError):
    """Every feature of the observation is missing."""


@dataclass(frozen=True)
class SspWindow:
    shape: str = "gaussian"
    sigma: float = 4.0        # m, gaussian spread
    d_max: float = 4.0        # m, support radius for hann/tukey
    tukey_alpha: float = 0.5  # fraction of [0, d_max] that tapers

    def __post_init__(self):
        if self.shape not in WINDOW_SHAPES:
            raise ValueError(f"unknown window shape {self.shape!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.d_max > 0:
            raise ValueError("d_max must be positive")
        if not 0.0 <= self.tukey_alpha <= 1.0:
            raise ValueError("tukey_alpha must be in [0, 1]")


def _shape_weights(win: SspWindow, d: np.ndarray) -> np.ndarray:
    if win.shape == "gaussian":
        return np.exp(-(d * d) / (2.0 * win.sigma * win.sigma))
    r = d / win.d_max
    if win.shape == "hann":
        return np.where(r < 1.0, 0.5 * (1.0 + np.cos(np.pi * r)), 0.0)
    # tukey: flat out to (1 - alpha) * d_max, cosine taper to zero at d_max
    flat = 1.0 - win.tukey_alpha
    if win.tukey_alpha == 0.0:
        return np.where(r <= 1.0, 1.0, 0.0)
    taper = 0.5 * (1.0 + np.cos(np.pi * (r - flat) / win.tukey_alpha))
    return np.where(r <= flat, 1.0, np.where(r < 1.0, taper, 0.0))


def window_weight(win: SspWindow, rp: Location, prev) -> float:
    """Motion-prior weight of an RP given the previous estimate.

    prev is None on the first fix of a trajectory: no motion information,
    so every RP gets weight 1.
    """
    if prev is None:
        return 1.0
    d = np.asarray([rp.distance_to(prev)])
    return float(_shape_weights(win, d)[0])


def _window_log_weights(win, locations, prev, n):
    if prev is None:
        return np.zeros(n)
    d = np.hypot(locations[:, 0] - prev.x, locations[:, 1] - prev.y)
    if win.shape == "gaussian":
        # log taken analytically; exp(log w) matches the linear path to
        # roundoff and stays finite for any distance
        return -(d * d) / (2.0 * win.sigma * win.sigma)
    w = _shape_weights(win, d)
    with np.errstate(divide="ignore"):
        return np.log(w)


@dataclass(frozen=True)
class Posterior:
    rp_ids: tuple
    probabilities: np.ndarray  # sums to 1
    log_scores: np.ndarray     # unnormalized, floored

    @property
    def weights(self) -> dict:
        return {rp: float(p) for rp, p in zip(self.rp_ids, self.probabilities)}


def posterior_from_log_scores(rp_ids, log_scores) -> Posterior:
    """Normalize unnormalized log scores into a Posterior.

    Adding any constant to all scores leaves the result unchanged, which
    is what makes per-AP density rescalings invisible downstream.
    """
    ls = np.asarray(log_scores, dtype=np.float64)
    p = np.exp(ls - ls.max())
    p /= p.sum()
    return Posterior(tuple(rp_ids), p, ls)


def _observed_pairs(table: PdfTable, obs):
    if isinstance(obs, FingerprintVector):
        if len(obs.features) != len(table.ap_ids):
            raise ValueError(
                f"observation has {len(obs.features)} features, "
                f"environment has {len(table.ap_ids)} APs")
        pairs = [(ap, v) for ap, v in zip(table.ap_ids, obs.features)
                 if v is not None]
    else:
        known = set(table.ap_ids)
        for ap in obs:
            if ap not in known:
                raise ValueError(f"unknown AP {ap!r} in observation")
        pairs = sorted((ap, float(v)) for ap, v in obs.items()
                       if v is not None)
    if not pairs:
        raise NoObservableApsError("no observable APs")
    return pairs


def posterior(db, table: PdfTable, obs, prev=None,
              window: SspWindow = SspWindow(), *,
              floor: float = DENSITY_FLOOR, method: str = "log") -> Posterior:
    """Posterior over RPs for one fingerprint observation.

    obs is a FingerprintVector aligned with the environment's AP order,
    or a mapping ap_id -> rssi of the APs actually heard.  prev is the
    previous fix's location (None for the first fix).  Per-AP densities
    and the window weight are floored so no RP ever scores exactly zero.
    """
    pairs = _observed_pairs(table, obs)
    n = len(table.rp_ids)
    locations = np.asarray([(loc.x, loc.y) for loc in
                            (db.env.rp_location(rp) for rp in table.rp_ids)])
    # the whole score is floored as if the window and every density sat
    # at the floor, so fully out-of-window RPs share one minimum weight
    floor_log = (len(pairs) + 1) * math.log(floor)
    if method == "log":
        log_scores = np.zeros(n)
        for ap, v in pairs:
            table.log_accumulate(ap, v, floor, log_scores)
        log_scores += _window_log_weights(window, locations, prev, n)
        np.maximum(log_scores, floor_log, out=log_scores)
        return posterior_from_log_scores(table.rp_ids, log_scores)
    if method == "linear":
        scores = np.ones(n)
        for ap, v in pairs:
            dens = table.densities(ap, v)
            dens = np.where(np.isnan(dens), floor, dens)
            scores *= np.maximum(dens, floor)
        if prev is not None:
            d = np.hypot(locations[:, 0] - prev.x, locations[:, 1] - prev.y)
            scores *= _shape_weights(window, d)
        np.maximum(scores, math.exp(floor_log), out=scores)
        with np.errstate(divide="ignore"):
            return posterior_from_log_scores(table.rp_ids, np.log(scores))
    raise ValueError(f"unknown method {method!r}")


def top_k(post: Posterior, k: int = TOP_K) -> list:
    """The k most probable RP ids, descending; ties go to the lower id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = sorted(range(len(post.rp_ids)),
                   key=lambda i: (-post.probabilities[i], post.rp_ids[i]))
    return [post.rp_ids[i] for i in order[:k]]


def estimate(post: Posterior, db, k: int = TOP_K) -> Location:
    """Point estimate: probability-weighted centroid of the top-k RPs.

    This location feeds the next fix's motion window.
    """
    ids = top_k(post, k)
    idx = {rp: i for i, rp in enumerate(post.rp_ids)}
    w = np.asarray([post.probabilities[idx[rp]] for rp in ids])
    w = w / w.sum()
    xs = np.asarray([db.env.rp_location(rp).x for rp in ids])
    ys = np.asarray([db.env.rp_location(rp).y for rp in ids])
    return Location(float(w @ xs), float(w @ ys))
