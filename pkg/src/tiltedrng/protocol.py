"""Execution of the spot-checking randomness-generation protocol.

Each of the n rounds is a game round with probability gamma (inputs drawn from
the tilted-CHSH input distribution, score C = V(a, b, x, y)) or otherwise a
generation round with fixed inputs (x, y) = (1, 0) and C = bottom. The run
succeeds when the number of won game rounds reaches n * gamma * (omega_q - xi).

Rounds draw from three purpose-tagged counter streams (test flag, inputs,
outcomes), so the transcript is independent of block size and thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import binom

from .devices import DeviceModel, outcome_cdf, sample_outcomes, winning_probability
from .errors import DomainError
from .game import SETTINGS, GameSpec, input_distribution
from .rng import CounterStream, derive_seeds

BOTTOM = -1
GENERATION_SETTING = SETTINGS.index((1, 0))
STORE_LIMIT = 10_000_000
BLOCK = 1 << 16


@dataclass(frozen=True)
class ProtocolParams:
    """Protocol parameters.

    Attributes
    ----------
    n : int
        Number of rounds.
    gamma : float
        Probability that a round is a game round, in (0, 1].
    xi : float
        Threshold slack; the success threshold is omega_q - xi.
    eps_s : float
        Smoothing parameter of the min-entropy certificate.
    eps_prime : float
        Success-probability cutoff of the certificate.
    seed : int
        64-bit master seed.
    """

    n: int
    gamma: float
    xi: float
    eps_s: float = 1e-6
    eps_prime: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise DomainError(f"gamma must lie in (0, 1], got {self.gamma!r}")
        if not self.xi > 0.0:
            raise DomainError(f"xi must be positive, got {self.xi!r}")
        for name in ("eps_s", "eps_prime"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise DomainError(f"{name} must lie in (0, 1), got {v!r}")
        if not 0 <= self.seed < 1 << 64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "n", int(self.n))

    def check_game(self, spec: GameSpec) -> None:
        """Require the success threshold to sit strictly above the classical value."""
        if not self.xi < spec.quantum_gap:
            raise DomainError(
                f"xi = {self.xi} puts the threshold omega_q - xi at or below omega_c "
                f"(need xi < {spec.quantum_gap})"
            )

    def threshold(self, spec: GameSpec) -> float:
        return self.n * self.gamma * (spec.omega_q - self.xi)


@dataclass
class Transcript:
    """Outcome of one protocol run.

    ``rounds`` maps column name (t, x, y, a, b, c) to an int8 array, or is
    None when only counters were kept. ``c`` uses -1 for bottom.
    """

    n: int
    seed: int
    wins: int
    tests: int
    threshold: float
    success: bool
    rounds: dict[str, np.ndarray] | None = None

    def summary(self, params: ProtocolParams | None = None) -> dict:
        out = {
            "n": self.n,
            "seed": self.seed,
            "wins": self.wins,
            "tests": self.tests,
            "threshold": self.threshold,
            "success": self.success,
        }
        if params is not None:
            out["params"] = asdict(params)
        return out

    def to_json(self, params: ProtocolParams | None = None) -> str:
        return json.dumps(self.summary(params), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """One row per round, columns t,x,y,a,b,c; bottom is an empty field."""
        if self.rounds is None:
            raise ValueError("transcript holds counters only; rerun with store_rounds=True")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y", "a", "b", "c"])
        r = self.rounds
        for t, x, y, a, b, c in zip(r["t"], r["x"], r["y"], r["a"], r["b"], r["c"]):
            w.writerow([t, x, y, a, b, "" if c == BOTTOM else c])
        return buf.getvalue()


def _tables(dev: DeviceModel, spec: GameSpec) -> tuple[np.ndarray, np.ndarray]:
    dist = input_distribution(spec)
    input_cdf = np.cumsum([dist[xy] for xy in SETTINGS])
    input_cdf[-1] = 1.0
    cdf = outcome_cdf(dev)
    return input_cdf, np.array([cdf[xy] for xy in SETTINGS])


_X = np.array([xy[0] for xy in SETTINGS], dtype=np.int8)
_Y = np.array([xy[1] for xy in SETTINGS], dtype=np.int8)


def _run_block(start, count, params, input_cdf, outcome_rows, keep):
    seed = params.seed
    t = CounterStream(seed, "test").uniforms(start, count) < params.gamma
    setting = np.searchsorted(input_cdf, CounterStream(seed, "input").uniforms(start, count), side="right")
    setting = np.where(t, np.minimum(setting, len(SETTINGS) - 1), GENERATION_SETTING)
    a, b = sample_outcomes(outcome_rows, setting, CounterStream(seed, "outcome").uniforms(start, count))
    x, y = _X[setting], _Y[setting]
    won = np.where(y == 2, a == 0, (a ^ b) == (x & y))
    c = np.where(t, won, BOTTOM).astype(np.int8)
    wins = int(np.count_nonzero(c == 1))
    tests = int(np.count_nonzero(t))
    cols = None
    if keep:
        cols = {"t": t.astype(np.int8), "x": x, "y": y, "a": a, "b": b, "c": c}
    return wins, tests, cols


def run_protocol(
    dev: DeviceModel,
    spec: GameSpec,
    params: ProtocolParams,
    *,
    threads: int = 1,
    store_rounds: bool | None = None,
    block: int = BLOCK,
) -> Transcript:
    """Run the protocol on ``dev``; an abort is a transcript with success False.

    ``store_rounds`` defaults to keeping per-round columns only for
    n <= 10**7. ``threads`` and ``block`` do not affect the result.
    """
    params.check_game(spec)
    if block < 1:
        raise ValueError("block must be positive")
    keep = params.n <= STORE_LIMIT if store_rounds is None else store_rounds
    input_cdf, outcome_rows = _tables(dev, spec)
    starts = range(0, params.n, block)

    def work(start):
        return _run_block(start, min(block, params.n - start), params, input_cdf, outcome_rows, keep)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]

    wins = sum(p[0] for p in parts)
    tests = sum(p[1] for p in parts)
    rounds = None
    if keep:
        rounds = {k: np.concatenate([p[2][k] for p in parts]) for k in ("t", "x", "y", "a", "b", "c")}
    thr = params.threshold(spec)
    return Transcript(
        n=params.n, seed=params.seed, wins=wins, tests=tests,
        threshold=thr, success=wins >= thr, rounds=rounds,
    )


def completeness_error(params: ProtocolParams) -> float:
    """Hoeffding bound exp(-2 n (gamma xi)^2) on the failure probability of ideal devices."""
    return math.exp(-2.0 * params.n * (params.gamma * params.xi) ** 2)


def completeness_error_noisy(params: ProtocolParams, zeta: float) -> float:
    """Failure bound for devices winning with probability omega_q - zeta, zeta < xi."""
    if not 0.0 <= zeta < params.xi:
        raise DomainError(f"zeta must lie in [0, xi) = [0, {params.xi}), got {zeta!r}")
    return math.exp(-2.0 * params.n * (params.gamma * (params.xi - zeta)) ** 2)


def exact_failure_probability(omega: float, spec: GameSpec, params: ProtocolParams) -> float:
    """P[wins < threshold] for i.i.d. rounds; wins ~ Binomial(n, gamma * omega)."""
    thr = params.threshold(spec)
    k = math.ceil(thr) - 1
    if k < 0:
        return 0.0
    return float(binom.cdf(k, params.n, params.gamma * omega))


def empirical_completeness(
    dev: DeviceModel, spec: GameSpec, params: ProtocolParams, trials: int, *, threads: int = 1
) -> float:
    """Fraction of aborted runs over ``trials`` runs with seeds derived from ``params.seed``."""
    if trials < 1:
        raise DomainError(f"trials must be at least 1, got {trials!r}")
    params.check_game(spec)
    seeds = derive_seeds(params.seed, trials)

    def one(seed):
        p = ProtocolParams(params.n, params.gamma, params.xi, params.eps_s, params.eps_prime, seed)
        return not run_protocol(dev, spec, p, store_rounds=False).success

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fails = list(pool.map(one, seeds))
    else:
        fails = [one(s) for s in seeds]
    return sum(fails) / trials


def device_deficit(dev: DeviceModel, spec: GameSpec) -> float:
    """zeta = omega_q - omega(dev)."""
    return spec.omega_q - winning_probability(dev, spec)
