"""logMAR arithmetic, adaptive optotype-size scheduling, threshold estimation,
and the template-matching ideal observer.

The size scheduler is a weighted one-up/one-down staircase (down 0.1 logMAR
after a correct answer, up 0.3 after an error) whose equilibrium sits at 75%
correct, the conventional target for a four-alternative forced choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from scipy import optimize

from .frames import Frame
from .stimuli import ORIENTATIONS, Key

GUESS_RATE = 0.25   # 4AFC chance
LAPSE_RATE = 0.01

LOGMAR_FLOOR = 0.0
LOGMAR_CEILING = 2.5  # theoretical acuity of a 20-degree epiretinal array

_NORMAL = NormalDist()


def logmar_from_gap(gap_arcmin: float) -> float:
    """logMAR of a Landolt gap: log10 of the gap size in arcminutes."""
    if gap_arcmin <= 0:
        raise ValueError("gap must be positive")
    return math.log10(gap_arcmin)


def gap_from_logmar(logmar: float) -> float:
    return 10.0 ** logmar


@dataclass(frozen=True)
class StepRule:
    down: float = 0.1
    up: float = 0.3


class Staircase:
    """Adaptive one-up/one-down track over logMAR levels, clamped to
    [floor, ceiling], with reversal bookkeeping."""

    def __init__(self, start_logmar: float, rule: StepRule = StepRule(),
                 floor: float = LOGMAR_FLOOR, ceiling: float = LOGMAR_CEILING):
        if floor > ceiling:
            raise ValueError("floor above ceiling")
        self.rule = rule
        self.floor = floor
        self.ceiling = ceiling
        self.current = min(max(start_logmar, floor), ceiling)
        self.presented: list[float] = []
        self.responses: list[bool] = []
        self.reversal_levels: list[float] = []
        self._last_dir: int | None = None

    def next_level(self) -> float:
        return self.current

    def record(self, correct: bool) -> None:
        level = self.current
        self.presented.append(level)
        self.responses.append(bool(correct))
        direction = -1 if correct else +1
        if self._last_dir is not None and direction != self._last_dir:
            self.reversal_levels.append(level)
        self._last_dir = direction
        step = -self.rule.down if correct else self.rule.up
        self.current = min(max(level + step, self.floor), self.ceiling)


def schedule_block(start_logmar: float, n_trials: int = 24,
                   rule: StepRule = StepRule(), respond=None,
                   floor: float = LOGMAR_FLOOR,
                   ceiling: float = LOGMAR_CEILING) -> list[float]:
    """Presented-size sequence for a block driven by a response callback.

    respond(level_logmar) -> bool decides each trial; defaults to always
    correct, which yields the plain descending sequence.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if respond is None:
        respond = lambda level: True
    stair = Staircase(start_logmar, rule, floor, ceiling)
    out = []
    for _ in range(n_trials):
        level = stair.next_level()
        out.append(level)
        stair.record(respond(level))
    return out


def reversal_levels(levels, correct) -> list[float]:
    """Presented levels at which the track direction flipped."""
    out = []
    last = None
    for lv, ok in zip(levels, correct):
        direction = -1 if ok else +1
        if last is not None and direction != last:
            out.append(lv)
        last = direction
    return out


@dataclass
class AcuityEstimate:
    logmar: float
    trials_used: int
    method: str  # "staircase" or "psychometric_fit"

    def as_dict(self) -> dict:
        return {"logmar": self.logmar, "trials_used": self.trials_used,
                "method": self.method}


def fit_psychometric(levels, correct, guess: float = GUESS_RATE,
                     lapse: float = LAPSE_RATE) -> float:
    """Maximum-likelihood cumulative-Gaussian fit; returns the logMAR at the
    62.5% correct point (midway between chance and perfect)."""
    levels = np.asarray(levels, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    lo = float(levels.min()) - 3.0
    hi = float(levels.max()) + 3.0
    span = max(hi - lo, 1e-6)

    def nll(theta):
        mu = min(max(theta[0], lo), hi)
        sigma = min(max(math.exp(theta[1]), 1e-3), span)
        z = (levels - mu) / sigma
        p = guess + (1.0 - guess - lapse) * 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2)))
        p = np.clip(p, 1e-12, 1.0 - 1e-12)
        return -float(np.sum(np.where(correct, np.log(p), np.log1p(-p))))

    best = None
    for mu0 in (float(np.median(levels)), lo + span / 4, hi - span / 4):
        res = optimize.minimize(nll, x0=[mu0, math.log(0.3)], method="Nelder-Mead",
                                options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 2000})
        if best is None or res.fun < best.fun:
            best = res
    mu = min(max(best.x[0], lo), hi)
    sigma = min(max(math.exp(best.x[1]), 1e-3), span)
    target = (0.625 - guess) / (1.0 - guess - lapse)
    return mu + sigma * _NORMAL.inv_cdf(target)


def estimate_acuity(records) -> AcuityEstimate:
    """Threshold from a block of sizing-test records.

    With at least 4 staircase reversals the estimate is the mean of the last
    (up to) 8 reversal levels; otherwise a psychometric fit is used.
    Records must come from a single condition.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    conditions = {r.condition_label for r in records}
    if len(conditions) != 1:
        raise ValueError(f"records mix conditions: {sorted(conditions)}")
    families = {r.stimulus.family for r in records}
    if len(families) != 1:
        raise ValueError("records mix test families")

    levels = [logmar_from_gap(r.stimulus.params["gap_arcmin"]) for r in records]
    correct = [r.correct for r in records]
    revs = reversal_levels(levels, correct)
    if len(revs) >= 4:
        tail = revs[-8:]
        return AcuityEstimate(float(np.mean(tail)), len(records), "staircase")
    est = float(fit_psychometric(levels, correct))
    # keep degenerate fits (e.g. an all-correct run) to a modest
    # extrapolation beyond the sizes actually shown
    est = min(max(est, min(levels) - 3 * StepRule().up), max(levels) + 3 * StepRule().up)
    return AcuityEstimate(est, len(records), "psychometric_fit")


def ideal_observer(percept: Frame, candidates) -> Key:
    """Pick the orientation whose phosphenized template best matches the
    percept by normalized cross-correlation.

    candidates maps orientation -> template Frame (all rendered under the
    same condition and pose as the percept).  Ties, including the flat-
    percept case, resolve to the first orientation in the fixed order
    up, down, left, right.
    """
    if hasattr(candidates, "items"):
        cand = dict(candidates)
    else:
        cand = {k: f for k, f in candidates}
    missing = [k for k in ORIENTATIONS if k not in cand]
    if missing:
        raise ValueError(f"missing candidate orientations: {missing}")

    target = percept.pixels.ravel()
    t_center = target - target.mean()
    t_norm = float(np.sqrt(np.sum(t_center ** 2)))
    if t_norm == 0.0:
        return ORIENTATIONS[0]

    best_key, best_score = ORIENTATIONS[0], -math.inf
    for key in ORIENTATIONS:
        tpl = cand[key].pixels.ravel()
        c_center = tpl - tpl.mean()
        c_norm = float(np.sqrt(np.sum(c_center ** 2)))
        score = -math.inf if c_norm == 0.0 else \
            float(np.dot(t_center, c_center)) / (t_norm * c_norm)
        if score > best_score:
            best_key, best_score = key, score
    return best_key
