"""Round-by-round agents for evolving feedback.

All learners run ``n`` independent episodes side by side (one row per
episode). Full-information learners see the same feedback in every episode,
so their state is shared and :meth:`act` returns a single ``(K,)`` vector.

Protocol per round ``t`` (1-based)::

    p = learner.act(t)                  # (K,) or (n, K)
    a = sample(p)                       # (n,) 0-based actions
    learner.observe(t, a, payload)

``payload`` covers origins ``max(1, t - window) .. t`` oldest first, where
``window`` is the value given to :meth:`reset`: a ``(m, K)`` block of
revisions for full information, or an ``(n, m)`` block of the played
coordinates ``feedback(t, tau)[a_tau]`` for bandit feedback.
"""
from __future__ import annotations

import logging
import math
from collections import deque

import numpy as np

from .solver import RegularizerParams, softmax, solve_argmin

log = logging.getLogger(__name__)


def importance_estimate(observed, action: int, p) -> np.ndarray:
    """One-hot estimate ``observed / p[action]`` at ``action``.

    No clipping: the log barrier keeps ``p`` away from zero.
    """
    p = np.asarray(p, dtype=np.float64)
    if p[action] <= 0:
        raise ValueError(f"stored sampling probability must be positive, got {p[action]}")
    est = np.zeros_like(p)
    est[action] = float(observed) / p[action]
    return est


class Learner:
    full_information = True

    def reset(self, K: int, n: int = 1, window: int = 0) -> None:
        raise NotImplementedError

    def act(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def observe(self, t: int, actions: np.ndarray, payload: np.ndarray) -> None:
        raise NotImplementedError

    def _check_round(self, t: int) -> None:
        if t != self._t:
            raise RuntimeError(f"expected round {self._t}, got {t}")


class EvolvingEWA(Learner):
    """Exponential weights on the latest estimate of every past loss.

    The cumulative estimate is a sequential sum in origin order: a frozen
    prefix for origins that can no longer change, then the active window.
    """

    full_information = True

    def __init__(self, eta: float):
        if not eta > 0:
            raise ValueError("eta must be > 0")
        self.eta = float(eta)

    def reset(self, K, n=1, window=0):
        self.K = int(K)
        self.window = int(window)
        self._frozen = np.zeros(self.K)
        self._active = np.zeros((0, self.K))
        self._t = 1

    def estimate(self) -> np.ndarray:
        """Current ``L_e``; bitwise equal to the plain left-to-right sum over origins."""
        if len(self._active) == 0:
            return self._frozen.copy()
        return np.cumsum(np.vstack([self._frozen, self._active]), axis=0)[-1]

    def act(self, t):
        self._check_round(t)
        return softmax(self.estimate(), self.eta)

    def observe(self, t, actions, payload):
        self._check_round(t)
        payload = np.asarray(payload, dtype=np.float64)
        m = min(self.window + 1, t)
        if payload.shape != (m, self.K):
            raise ValueError(f"round {t}: expected revisions of shape {(m, self.K)}, got {payload.shape}")
        if t - self.window - 1 >= 1:
            # Origin t - window - 1 saw its last revision at round t - 1.
            self._frozen = self._frozen + self._active[0]
        self._active = payload.copy()
        self._t += 1


class EvolvingFTRL(Learner):
    """FTRL with negative entropy plus log barrier on importance-weighted estimates.

    Each origin keeps the probability it was played with; later revisions
    change the observed value, never that weight.
    """

    full_information = False

    def __init__(self, params: RegularizerParams):
        self.params = params

    def reset(self, K, n=1, window=0):
        self.K = int(K)
        self.n = int(n)
        self.window = int(window)
        self._frozen = np.zeros((self.n, self.K))
        self._played = deque()  # (actions, probs) per active origin, oldest first
        self._scalars = np.zeros((self.n, 0))
        self._last_p = None
        self._t = 1
        self._rows = np.arange(self.n)

    def estimate(self) -> np.ndarray:
        L = self._frozen.copy()
        for j, (a, q) in enumerate(self._played):
            L[self._rows, a] += self._scalars[:, j] / q
        return L

    def act(self, t):
        self._check_round(t)
        p = solve_argmin(self.estimate(), self.params)
        self._last_p = p
        return p

    def observe(self, t, actions, payload):
        self._check_round(t)
        if self._last_p is None:
            raise RuntimeError(f"round {t} observed before act; no sampling probability recorded")
        actions = np.asarray(actions, dtype=np.int64)
        payload = np.asarray(payload, dtype=np.float64)
        m = min(self.window + 1, t)
        if payload.shape != (self.n, m):
            raise ValueError(f"round {t}: expected scalars of shape {(self.n, m)}, got {payload.shape}")
        q = self._last_p[self._rows, actions]
        if np.any(q <= 0):
            raise ValueError("sampling probability of a played action is not positive")
        self._played.append((actions.copy(), q))
        if len(self._played) > m:
            a_old, q_old = self._played.popleft()
            self._frozen[self._rows, a_old] += self._scalars[:, 0] / q_old
        self._scalars = payload.copy()
        self._last_p = None
        self._t += 1


class Skipping(Learner):
    """Freeze each origin's feedback once it is ``d_max`` rounds old.

    The inner learner sees revisions of origin ``tau`` up to round
    ``tau + d_max`` and that last value afterwards, whatever the
    environment does later.
    """

    def __init__(self, inner: Learner, d_max: int):
        if d_max < 0:
            raise ValueError("d_max must be >= 0")
        self.inner = inner
        self.d_max = int(d_max)

    @property
    def full_information(self):
        return self.inner.full_information

    def reset(self, K, n=1, window=0):
        self.K = int(K)
        self.n = int(n)
        self.window = int(window)
        self.inner.reset(K, n, self.d_max)
        self._latest = {}
        self._t = 1

    def act(self, t):
        self._check_round(t)
        return self.inner.act(t)

    def inner_view(self, t: int, payload) -> np.ndarray:
        payload = np.asarray(payload, dtype=np.float64)
        m = min(self.window + 1, t)
        axis = 0 if self.full_information else 1
        if payload.shape[axis] != m:
            raise ValueError(f"round {t}: payload covers {payload.shape[axis]} origins, expected {m}")
        for j, tau in enumerate(range(t - m + 1, t + 1)):
            if t - tau <= self.d_max:
                self._latest[tau] = payload[j] if axis == 0 else payload[:, j]
        first = max(1, t - self.d_max)
        for tau in [k for k in self._latest if k < first]:
            del self._latest[tau]
        return np.stack([self._latest[tau] for tau in range(first, t + 1)], axis=axis)

    def observe(self, t, actions, payload):
        self._check_round(t)
        self.inner.observe(t, actions, self.inner_view(t, payload))
        self._t += 1


# -- tuning -------------------------------------------------------------------


def tune_ewa(K: int, T: int, D_bar: float) -> tuple[float, float]:
    """Learning rate tuned to a known inaccuracy bound, and the regret bound it guarantees.

    ``eta = sqrt(ln K / (T/2 + 2 D_bar))``, bound ``sqrt(4 ln K (T/2 + 2 D_bar))``.
    """
    if K < 2:
        raise ValueError("tuning needs K >= 2")
    if D_bar < 0:
        raise ValueError("D_bar must be >= 0")
    scale = T / 2.0 + 2.0 * D_bar
    if math.isinf(scale):
        return 0.0, math.inf
    return math.sqrt(math.log(K) / scale), math.sqrt(4.0 * math.log(K) * scale)


def tune_ftrl(K: int, T: int, Lambda_bar: float, d_max: float = 0) -> tuple[float, float, bool]:
    """``eta = 1/sqrt(K T + Lambda_bar)``, ``gamma = eta K``.

    The flag reports whether ``1/sqrt(gamma) >= 128 (1 + d_max)``, the
    condition under which the regret guarantee holds.
    """
    if K < 2 or T < 1:
        raise ValueError("tuning needs K >= 2 and T >= 1")
    if Lambda_bar < 0:
        raise ValueError("Lambda_bar must be >= 0")
    eta = 1.0 / math.sqrt(K * T + Lambda_bar)
    gamma = eta * K
    return eta, gamma, gamma_condition(gamma, d_max)


def gamma_condition(gamma: float, d_max: float) -> bool:
    if math.isinf(d_max):
        return False
    return 1.0 / math.sqrt(gamma) >= 128.0 * (1.0 + d_max)


class GammaConditionError(ValueError):
    pass


def make_learner(
    config: dict,
    K: int,
    T: int,
    *,
    measured: dict | None = None,
    env_d_max: float = 0,
    strict_gamma: bool = False,
) -> Learner:
    """Build a learner from its JSON configuration block.

    ``auto_tune`` values may be numbers or the string ``"measured"``, which
    takes ``D`` / ``lambda_sum`` from ``measured``. An FTRL block without
    ``gamma`` runs without the log barrier.
    """
    algo = config.get("algo")
    tune = config.get("auto_tune") or {}
    measured = measured or {}

    def bound(name, key):
        v = tune[name]
        if v == "measured":
            if key not in measured:
                raise ValueError(f"auto_tune {name}='measured' needs measured {key}")
            return float(measured[key])
        return float(v)

    if algo == "ewa":
        if "D_bar" in tune:
            eta, _ = tune_ewa(K, T, bound("D_bar", "D"))
        elif config.get("eta") is not None:
            eta = float(config["eta"])
        else:
            raise ValueError("ewa needs eta or auto_tune.D_bar")
        return EvolvingEWA(eta)

    if algo == "ftrl":
        if "Lambda_bar" in tune:
            eta, gamma, ok = tune_ftrl(K, T, bound("Lambda_bar", "lambda_sum"), env_d_max)
        elif config.get("eta") is not None:
            eta = float(config["eta"])
            gamma = config.get("gamma")
            ok = gamma is not None and gamma_condition(float(gamma), env_d_max)
        else:
            raise ValueError("ftrl needs eta or auto_tune.Lambda_bar")
        if not ok and gamma is not None:
            msg = (
                f"1/sqrt(gamma) = {1 / math.sqrt(float(gamma)):.3g} < 128 (1 + d_max) "
                f"with d_max = {env_d_max}; the regret guarantee does not apply"
            )
            if strict_gamma:
                raise GammaConditionError(msg)
            log.warning(msg)
        return EvolvingFTRL(RegularizerParams.from_gamma(eta, gamma))

    if algo == "skip":
        if config.get("d_max") is None or config.get("inner") is None:
            raise ValueError("skip needs d_max and inner")
        d_max = int(config["d_max"])
        inner = make_learner(
            config["inner"], K, T, measured=measured, env_d_max=d_max, strict_gamma=strict_gamma
        )
        return Skipping(inner, d_max)

    raise ValueError(f"unknown learner algo {algo!r}")
