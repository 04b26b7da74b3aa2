"""Exact statistics of two-qubit devices for the tilted-CHSH game.

A device is a two-qubit state shared by Alice and Bob plus, for each input,
a +-1 observable given by a unit Bloch vector n (observable n . sigma,
outcome bit 0 for eigenvalue +1). Bob's third input y = 2 always outputs 0.
White noise mixes the state with the maximally mixed state.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError
from .game import SETTINGS, GameSpec, winning_probability_from
from .rng import CounterStream

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
I2 = np.eye(2, dtype=complex)

BOB_Y2_RULE = "constant-0"

_TOL = 1e-12


def observable(bloch: np.ndarray) -> np.ndarray:
    return np.tensordot(np.asarray(bloch, dtype=float), PAULI, axes=1)


def bloch_from_angles(polar: float, azimuth: float) -> np.ndarray:
    return np.array(
        [math.sin(polar) * math.cos(azimuth), math.sin(polar) * math.sin(azimuth), math.cos(polar)]
    )


def schmidt_state(theta: float) -> np.ndarray:
    """Density matrix of cos(theta)|00> + sin(theta)|11>."""
    psi = np.zeros(4, dtype=complex)
    psi[0], psi[3] = math.cos(theta), math.sin(theta)
    return np.outer(psi, psi.conj())


def _frozen(arr: Any, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class DeviceModel:
    """Two-qubit device: state on A (x) B, Bloch vectors, visibility.

    ``state`` is the noiseless state; the state actually measured is
    ``visibility * state + (1 - visibility) * I/4`` (see :attr:`effective_state`).
    """

    state: np.ndarray
    alice_obs: np.ndarray
    bob_obs: np.ndarray
    visibility: float = 1.0
    label: str = "custom"
    _dists: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        state = _frozen(self.state, complex)
        alice = _frozen(self.alice_obs, float)
        bob = _frozen(self.bob_obs, float)
        if state.shape != (4, 4):
            raise DomainError("state must be a 4x4 matrix")
        if not np.allclose(state, state.conj().T, atol=_TOL):
            raise DomainError("state is not Hermitian")
        if abs(np.trace(state).real - 1.0) > _TOL:
            raise DomainError(f"state trace is {np.trace(state).real}, expected 1")
        if np.linalg.eigvalsh(state).min() < -_TOL:
            raise DomainError("state is not positive semidefinite")
        if alice.shape != (2, 3) or bob.shape != (2, 3):
            raise DomainError("alice_obs and bob_obs must each hold two 3-vectors")
        norms = np.linalg.norm(np.vstack([alice, bob]), axis=1)
        if np.any(np.abs(norms - 1.0) > _TOL):
            raise DomainError(f"Bloch vectors must have unit norm, got norms {norms}")
        if not 0.0 <= self.visibility <= 1.0:
            raise DomainError(f"visibility must lie in [0, 1], got {self.visibility}")
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "alice_obs", alice)
        object.__setattr__(self, "bob_obs", bob)
        object.__setattr__(self, "visibility", float(self.visibility))
        object.__setattr__(self, "_dists", _compute_distributions(self))

    @property
    def effective_state(self) -> np.ndarray:
        v = self.visibility
        return v * self.state + (1.0 - v) * np.eye(4) / 4.0

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "state_real": self.state.real.tolist(),
            "state_imag": self.state.imag.tolist(),
            "alice_bloch": self.alice_obs.tolist(),
            "bob_bloch": self.bob_obs.tolist(),
            "alice_angles": [_angles(v) for v in self.alice_obs],
            "bob_angles": [_angles(v) for v in self.bob_obs],
            "bob_y2_rule": BOB_Y2_RULE,
            "visibility": self.visibility,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceModel":
        if data.get("bob_y2_rule", BOB_Y2_RULE) != BOB_Y2_RULE:
            raise DomainError(f"unsupported y=2 rule {data['bob_y2_rule']!r}")
        state = np.array(data["state_real"]) + 1j * np.array(data["state_imag"])
        return cls(
            state=state,
            alice_obs=data["alice_bloch"],
            bob_obs=data["bob_bloch"],
            visibility=data.get("visibility", 1.0),
            label=data.get("label", "custom"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DeviceModel":
        return cls.from_dict(json.loads(text))


def _angles(v: np.ndarray) -> list[float]:
    return [math.acos(max(-1.0, min(1.0, v[2]))), math.atan2(v[1], v[0])]


def _compute_distributions(dev: DeviceModel) -> dict[tuple[int, int], np.ndarray]:
    rho = dev.effective_state
    dists = {}
    for x, y in SETTINGS:
        a_obs = observable(dev.alice_obs[x])
        p = np.empty((2, 2))
        for a in (0, 1):
            pa = (I2 + (-1) ** a * a_obs) / 2.0
            if y == 2:
                p[a, 0] = np.trace(rho @ np.kron(pa, I2)).real
                p[a, 1] = 0.0
                continue
            b_obs = observable(dev.bob_obs[y])
            for b in (0, 1):
                pb = (I2 + (-1) ** b * b_obs) / 2.0
                p[a, b] = np.trace(rho @ np.kron(pa, pb)).real
        p.setflags(write=False)
        dists[(x, y)] = p
    return dists


def reference_device(theta: float) -> DeviceModel:
    """Optimal devices for the game with parameter theta.

    Alice measures Z (x=0) and X (x=1); Bob measures (Z +- sin(2 theta) X),
    normalised, for y = 0, 1.
    """
    if not (0.0 < theta <= math.pi / 4) or math.isnan(theta):
        raise DomainError(f"theta must lie in (0, pi/4], got {theta!r}")
    s = math.sin(2.0 * theta)
    norm = math.sqrt(1.0 + s * s)
    return DeviceModel(
        state=schmidt_state(theta),
        alice_obs=[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
        bob_obs=[[s / norm, 0.0, 1.0 / norm], [-s / norm, 0.0, 1.0 / norm]],
        label=f"reference(theta={theta!r})",
    )


def classical_device() -> DeviceModel:
    """Product state |00> with every observable Z: both parties always output 0.

    This deterministic strategy attains the classical maximum omega_c.
    """
    state = np.zeros((4, 4))
    state[0, 0] = 1.0
    z = [0.0, 0.0, 1.0]
    return DeviceModel(state=state, alice_obs=[z, z], bob_obs=[z, z], label="classical")


def apply_white_noise(dev: DeviceModel, v: float) -> DeviceModel:
    if not 0.0 <= v <= 1.0:
        raise DomainError(f"visibility must lie in [0, 1], got {v}")
    return dataclasses.replace(dev, visibility=dev.visibility * v, _dists=None)


def outcome_distribution(dev: DeviceModel, x: int, y: int) -> np.ndarray:
    """p(a, b | x, y) as a 2x2 array indexed ``[a, b]``."""
    if (x, y) not in SETTINGS:
        raise DomainError(f"(x, y) = ({x!r}, {y!r}) is outside the input support")
    return dev._dists[(x, y)]


def all_distributions(dev: DeviceModel) -> dict[tuple[int, int], np.ndarray]:
    return dict(dev._dists)


def winning_probability(dev: DeviceModel, spec: GameSpec) -> float:
    return winning_probability_from(spec, dev._dists)


def visibility_for_deficit(dev: DeviceModel, spec: GameSpec, zeta: float) -> float:
    """Visibility v such that the noisy device wins with probability omega(1) - zeta."""
    w1 = winning_probability(dev, spec)
    w0 = winning_probability(apply_white_noise(dev, 0.0), spec)
    if not 0.0 <= zeta <= w1 - w0:
        raise DomainError(f"zeta must lie in [0, {w1 - w0}], got {zeta}")
    return 1.0 - zeta / (w1 - w0)


# --- sampling -----------------------------------------------------------------

def outcome_cdf(dev: DeviceModel) -> dict[tuple[int, int], np.ndarray]:
    """Cumulative outcome probabilities in the order (0,0), (0,1), (1,0), (1,1)."""
    out = {}
    for xy, p in dev._dists.items():
        c = np.cumsum(np.clip(p.ravel(), 0.0, None))
        c /= c[-1]
        c[-1] = 1.0
        out[xy] = c
    return out


def sample_outcomes(cdf_rows: np.ndarray, setting_idx: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised inverse-CDF sampling; ``cdf_rows[k]`` belongs to setting ``k``."""
    rows = cdf_rows[setting_idx]
    idx = (u[:, None] >= rows[:, :3]).sum(axis=1)
    return (idx >> 1).astype(np.int8), (idx & 1).astype(np.int8)


@dataclass(frozen=True)
class RoundOutcome:
    a: int
    b: int


def sample_round(dev: DeviceModel, x: int, y: int, stream: CounterStream, index: int) -> RoundOutcome:
    """Outcome of one round, drawn with the uniform at ``index`` of ``stream``."""
    if (x, y) not in SETTINGS:
        raise DomainError(f"(x, y) = ({x!r}, {y!r}) is outside the input support")
    cdf = outcome_cdf(dev)
    rows = np.array([cdf[(x, y)]])
    a, b = sample_outcomes(rows, np.zeros(1, dtype=np.intp), stream.uniforms(index, 1))
    return RoundOutcome(int(a[0]), int(b[0]))


# --- optimality search --------------------------------------------------------

def strategy_value(params: np.ndarray, beta: float, theta: float | None = None) -> float:
    """Winning probability of a pure two-qubit strategy given by angles.

    ``params`` holds ``[state_angle, a0 polar, a0 azim, a1 polar, a1 azim,
    b0 polar, b0 azim, b1 polar, b1 azim]``; if ``theta`` is given the state
    angle is fixed and ``params`` omits it. Every pure two-qubit state is of
    Schmidt form cos t|00> + sin t|11> up to local unitaries, which the free
    measurement directions absorb.
    """
    if theta is None:
        t, rest = params[0], params[1:]
    else:
        t, rest = theta, params
    sin, cos = math.sin, math.cos
    vecs = [
        (sin(rest[i]) * cos(rest[i + 1]), sin(rest[i]) * sin(rest[i + 1]), cos(rest[i]))
        for i in (0, 2, 4, 6)
    ]
    a0, a1, b0, b1 = vecs
    s2, c2 = sin(2 * t), cos(2 * t)

    def corr(u, v):
        # <u.sigma (x) v.sigma> on the Schmidt state: correlation matrix diag(s2, -s2, 1)
        return s2 * u[0] * v[0] - s2 * u[1] * v[1] + u[2] * v[2]

    tilted = beta * c2 * a0[2] + corr(a0, b0) + corr(a0, b1) + corr(a1, b0) - corr(a1, b1)
    return 0.5 + tilted / (8.0 + 2.0 * beta)


def search_optimal_strategy(
    spec: GameSpec, restarts: int = 4, seed: int = 0, fix_state: bool = False
) -> tuple[float, np.ndarray]:
    """Nelder-Mead maximisation of the winning probability over qubit strategies.

    Returns the best value found and its parameters. Each start is polished by
    repeated restarts from its own optimum until the value stops improving.
    """
    rng = np.random.default_rng(seed)
    theta = spec.theta if fix_state else None
    dim = 8 if fix_state else 9

    def neg(p):
        return -strategy_value(p, spec.beta, theta)

    best_val, best_x = -np.inf, None
    for _ in range(restarts):
        x0 = rng.uniform(0.0, math.pi, size=dim)
        x0[slice(1, None, 2) if fix_state else slice(2, None, 2)] *= 2.0
        val_prev = -np.inf
        for _ in range(8):
            res = minimize(
                neg, x0, method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20_000, "adaptive": True},
            )
            x0 = res.x
            if -res.fun <= val_prev + 1e-12:
                break
            val_prev = -res.fun
        if -res.fun > best_val:
            best_val, best_x = -res.fun, res.x
    return float(best_val), best_x
