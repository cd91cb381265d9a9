"""Finite-strength von Neumann pointer coupled to a pre/post-selected system.

The interaction is the impulsive coupling exp(-i g A (x) p) with the pointer
momentum p as generator (hbar = 1).  It is applied exactly: each eigenspace
of A rigidly shifts the pointer wavefunction by g times its eigenvalue,
done as a phase ramp in Fourier space.

For a Gaussian pointer with position spread sigma, the post-selected
pointer moves by g Re<A>_w in position and by 2 g Var(p) Im<A>_w in
momentum, up to corrections of order g^2.

Multi-term two-state vectors are coupled through an equivalent physical
state: a register |k> is attached to each term, the pre-selection becomes
sum_k |ket_k>|k> and the post-selection sum_k w_k <bra_k|<k|.  For
scenarios with an ancilla, the ancilla itself is that register.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .linalg import LabeledOperator
from .scenario import Scenario, build_tsv
from .tsvf import SingularWeakValueError, TwoStateVector

DEFAULT_POINTS = 2048
DEFAULT_HALF_WIDTH = 12.0   # in units of sigma
BOUNDARY_TOL = 1e-8
STARVATION_PROB = 1e-12
WEAK_RATIO = 0.1
CHUNK_TRIALS = 250_000


class GridOverflowError(ValueError):
    def __init__(self, g: float, message: str):
        self.g = g
        super().__init__(f"g={g:g}: {message}")


class StarvationError(RuntimeError):
    """Post-selection too improbable to gather samples."""


class WeakRegimeWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class PointerState:
    """Pointer wavefunction on a uniform periodic grid, normalized as sum |a|^2 dx = 1."""

    grid_min: float
    grid_max: float
    n_points: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (self.n_points,):
            raise ValueError(f"expected {self.n_points} amplitudes, got shape {amps.shape}")
        if not self.grid_max > self.grid_min:
            raise ValueError("grid_max must exceed grid_min")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dx(self) -> float:
        return (self.grid_max - self.grid_min) / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.grid_min + self.dx * np.arange(self.n_points)

    @property
    def p(self) -> np.ndarray:
        """Momentum of each FFT bin (unshifted order)."""
        return 2 * np.pi * np.fft.fftfreq(self.n_points, self.dx)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.dx))

    def with_amplitudes(self, amps) -> "PointerState":
        return PointerState(self.grid_min, self.grid_max, self.n_points, amps)

    def position_probabilities(self) -> np.ndarray:
        w = np.abs(self.amplitudes) ** 2
        return w / w.sum()

    def momentum_probabilities(self) -> np.ndarray:
        w = np.abs(np.fft.fft(self.amplitudes)) ** 2
        return w / w.sum()

    def mean_position(self) -> float:
        return float(np.dot(self.x, self.position_probabilities()))

    def position_variance(self) -> float:
        w = self.position_probabilities()
        m = np.dot(self.x, w)
        return float(np.dot((self.x - m) ** 2, w))

    def mean_momentum(self) -> float:
        return float(np.dot(self.p, self.momentum_probabilities()))

    def momentum_variance(self) -> float:
        w = self.momentum_probabilities()
        m = np.dot(self.p, w)
        return float(np.dot((self.p - m) ** 2, w))

    def boundary_ratio(self) -> float:
        a = np.abs(self.amplitudes)
        return float(max(a[0], a[-1]) / a.max())

    def shifted(self, distance: float) -> "PointerState":
        """Rigid translation psi(x - distance), exact for band-limited states."""
        ramp = np.exp(-1j * self.p * distance)
        return self.with_amplitudes(np.fft.ifft(np.fft.fft(self.amplitudes) * ramp))


def gaussian_pointer(sigma: float = 1.0, n_points: int = DEFAULT_POINTS,
                     half_width: float = DEFAULT_HALF_WIDTH, center: float = 0.0) -> PointerState:
    """Real Gaussian with position standard deviation ``sigma`` on +-half_width*sigma."""
    lo, hi = center - half_width * sigma, center + half_width * sigma
    x = lo + (hi - lo) / n_points * np.arange(n_points)
    amps = (2 * np.pi * sigma ** 2) ** -0.25 * np.exp(-((x - center) ** 2) / (4 * sigma ** 2))
    state = PointerState(lo, hi, n_points, amps)
    state = state.with_amplitudes(amps / state.norm())
    if state.boundary_ratio() >= BOUNDARY_TOL:
        raise GridOverflowError(0.0, f"grid +-{half_width} sigma too narrow for the initial pointer")
    return state


@dataclass(frozen=True)
class CouplingConfig:
    g: float
    sigma: float = 1.0

    def __post_init__(self):
        if self.g < 0 or not math.isfinite(self.g):
            raise ValueError(f"coupling g must be finite and >= 0, got {self.g}")
        if not self.sigma > 0:
            raise ValueError(f"pointer sigma must be > 0, got {self.sigma}")

    @property
    def ratio(self) -> float:
        return self.g / self.sigma

    @property
    def is_weak(self) -> bool:
        return self.ratio <= WEAK_RATIO


@dataclass(frozen=True)
class PointerReadout:
    g: float
    mean_position: float
    mean_momentum: float
    postselect_prob: float
    momentum_var0: float
    pointer_sigma: float
    n_samples: int | None = None
    stderr: float | None = None
    stderr_momentum: float | None = None
    n_trials: int | None = None

    @property
    def position_estimate(self) -> float:
        """Pointer shift per unit coupling, -> Re<A>_w as g -> 0."""
        return self.mean_position / self.g

    @property
    def momentum_estimate(self) -> float:
        """Momentum kick rescaled by 2 g Var(p), -> Im<A>_w as g -> 0."""
        return self.mean_momentum / (2 * self.g * self.momentum_var0)

    def to_dict(self) -> dict:
        return asdict(self)


def joint_pair(source: TwoStateVector | Scenario, marker: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Normalized pre-selection ket and post-selection bra as (system, register) arrays.

    The bra array holds bra coefficients, so the overlap is sum(post * pre).
    """
    if isinstance(source, Scenario):
        pre_s, post_s = source.pre_post(marker)
        d = source.system_space.dim
        k = source.space.dim // d
        # ancilla is the slowest index: reshape to (ancilla, system) then transpose
        pre = pre_s.amplitudes.reshape(k, d).T
        post = post_s.amplitudes.reshape(k, d).T
    elif isinstance(source, TwoStateVector):
        pre = np.column_stack([t.ket.amplitudes for t in source.terms])
        post = np.column_stack([t.weight * t.bra.amplitudes for t in source.terms])
    else:
        raise TypeError(f"expected TwoStateVector or Scenario, got {type(source).__name__}")
    return pre / np.linalg.norm(pre), post / np.linalg.norm(post)


def _eigen(op: LabeledOperator) -> tuple[np.ndarray, np.ndarray]:
    if not op.is_hermitian(1e-12):
        raise ValueError("pointer coupling needs a Hermitian observable")
    return np.linalg.eigh(op.matrix)


def couple(pre: np.ndarray, op: LabeledOperator, g: float, p0: PointerState) -> np.ndarray:
    """exp(-i g A (x) p) applied to pre (x) p0; returns the (system, register, x) array."""
    vals, vecs = _eigen(op)
    span = p0.grid_max - p0.grid_min
    if np.max(np.abs(vals)) * g >= span / 2:
        raise GridOverflowError(g, "pointer shift exceeds half the grid")
    phi_k = np.fft.fft(p0.amplitudes)
    shifted = np.fft.ifft(phi_k[None, :] * np.exp(-1j * g * vals[:, None] * p0.p[None, :]), axis=1)
    edge = np.maximum(np.abs(shifted[:, 0]), np.abs(shifted[:, -1]))
    if np.any(edge > BOUNDARY_TOL * np.max(np.abs(shifted), axis=1)):
        raise GridOverflowError(g, "shifted pointer reaches the grid boundary")
    pre_eig = vecs.conj().T @ pre
    return np.einsum("sj,jk,jx->skx", vecs, pre_eig, shifted)


def _check_source(source, marker):
    tsv = build_tsv(source, marker) if isinstance(source, Scenario) else source
    if tsv.is_singular():
        raise SingularWeakValueError(tsv.denominator)


def couple_and_postselect(source: TwoStateVector | Scenario, op: LabeledOperator, cfg: CouplingConfig,
                          p0: PointerState | None = None,
                          marker: str | None = None) -> tuple[PointerState, float]:
    """Exact coupling followed by post-selection.

    Returns the normalized conditional pointer state and the probability
    of the post-selection.
    """
    _check_source(source, marker)
    if not cfg.is_weak:
        warnings.warn(f"g/sigma = {cfg.ratio:.3g} exceeds {WEAK_RATIO}; outside the weak regime",
                      WeakRegimeWarning, stacklevel=2)
    p0 = p0 if p0 is not None else gaussian_pointer(cfg.sigma)
    pre, post = joint_pair(source, marker)
    joint = couple(pre, op, cfg.g, p0)
    chi = np.einsum("sk,skx->x", post, joint)
    prob = float(np.sum(np.abs(chi) ** 2) * p0.dx)
    if prob < STARVATION_PROB:
        raise StarvationError(f"post-selection probability {prob:.3e} below {STARVATION_PROB}")
    return p0.with_amplitudes(chi / math.sqrt(prob)), prob


def pointer_readout(source: TwoStateVector | Scenario, op: LabeledOperator, cfg: CouplingConfig,
                    p0: PointerState | None = None, marker: str | None = None) -> PointerReadout:
    p0 = p0 if p0 is not None else gaussian_pointer(cfg.sigma)
    state, prob = couple_and_postselect(source, op, cfg, p0, marker)
    return PointerReadout(
        g=cfg.g,
        mean_position=state.mean_position(),
        mean_momentum=state.mean_momentum(),
        postselect_prob=prob,
        momentum_var0=p0.momentum_variance(),
        pointer_sigma=math.sqrt(p0.position_variance()),
    )


def weak_limit_extrapolate(readouts) -> complex:
    """Fit both pointer channels as c0 + c2 g^2 and return c0_position + i c0_momentum."""
    readouts = list(readouts)
    gs = np.array([float(g) for g, _ in readouts])
    if len(readouts) < 3 or len(np.unique(gs)) < 3:
        raise ValueError("extrapolation needs at least 3 distinct g values")
    if np.any(gs <= 0):
        raise ValueError("extrapolation needs g > 0")
    for g, r in readouts:
        if g / r.pointer_sigma > WEAK_RATIO:
            raise ValueError(f"g={g:g} is outside the weak regime (g/sigma > {WEAK_RATIO})")
    design = np.column_stack([np.ones_like(gs), gs ** 2])
    y_re = np.array([r.mean_position / g for g, r in readouts])
    y_im = np.array([r.mean_momentum / (2 * g * r.momentum_var0) for g, r in readouts])
    coef, *_ = np.linalg.lstsq(design, np.column_stack([y_re, y_im]), rcond=None)
    return complex(coef[0, 0], coef[0, 1])


# ---------------------------------------------------------------- Monte Carlo

@dataclass(frozen=True)
class Moments:
    """Count, sum and sum of squares; merging is associative."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    @classmethod
    def of(cls, samples: np.ndarray) -> "Moments":
        return cls(int(samples.size), float(np.sum(samples)), float(np.sum(samples ** 2)))

    def __add__(self, other: "Moments") -> "Moments":
        return Moments(self.count + other.count, self.total + other.total, self.total_sq + other.total_sq)

    @property
    def mean(self) -> float:
        return self.total / self.count

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return float("nan")
        var = (self.total_sq - self.count * self.mean ** 2) / (self.count - 1)
        return math.sqrt(max(var, 0.0) / self.count)


def cell_cdf(centers: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear CDF spreading each grid cell's mass uniformly over the cell."""
    order = np.argsort(centers)
    c, w = centers[order], probs[order]
    step = c[1] - c[0]
    edges = np.concatenate([c - step / 2, [c[-1] + step / 2]])
    cdf = np.concatenate([[0.0], np.cumsum(w)])
    return edges, cdf / cdf[-1]


def position_cdf(state: PointerState) -> tuple[np.ndarray, np.ndarray]:
    return cell_cdf(state.x, state.position_probabilities())


def momentum_cdf(state: PointerState) -> tuple[np.ndarray, np.ndarray]:
    return cell_cdf(state.p, state.momentum_probabilities())


def _draw(rng: np.random.Generator, cdf_pair, m: int) -> np.ndarray:
    edges, cdf = cdf_pair
    return np.interp(rng.random(m), cdf, edges)


def _run_chunk(seed_seq: np.random.SeedSequence, n_trials: int, prob: float, pos_cdf, mom_cdf):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    m = int(rng.binomial(n_trials, prob))
    return _draw(rng, pos_cdf, m), _draw(rng, mom_cdf, m)


def _chunk_sizes(n: int, chunk: int) -> list[int]:
    return [min(chunk, n - start) for start in range(0, n, chunk)]


def draw_samples(state: PointerState, prob: float, n: int, seed: int,
                 chunk: int = CHUNK_TRIALS, workers: int = 1):
    """Simulate n trials; yields (positions, momenta) per chunk for the post-selected ones.

    Chunk k uses the k-th child of SeedSequence(seed) with PCG64, so the
    stream depends only on (seed, n, chunk), never on ``workers``.
    """
    sizes = _chunk_sizes(n, chunk)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    pos_cdf, mom_cdf = position_cdf(state), momentum_cdf(state)
    args = [(s, size, prob, pos_cdf, mom_cdf) for s, size in zip(seeds, sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            yield from pool.map(lambda a: _run_chunk(*a), args)
    else:
        for a in args:
            yield _run_chunk(*a)


def sample_clicks(source: TwoStateVector | Scenario, op: LabeledOperator, cfg: CouplingConfig,
                  n: int, seed: int, p0: PointerState | None = None, marker: str | None = None,
                  chunk: int = CHUNK_TRIALS, workers: int = 1) -> PointerReadout:
    """Monte Carlo readout from ``n`` photons sent through the apparatus.

    Each photon passes post-selection with the exact probability; the
    survivors' pointer positions and momenta are drawn from the exact
    conditional distributions by inverse CDF on the grid.
    """
    if n < 1:
        raise ValueError("need n >= 1 trials")
    p0 = p0 if p0 is not None else gaussian_pointer(cfg.sigma)
    state, prob = couple_and_postselect(source, op, cfg, p0, marker)
    pos, mom = Moments(), Moments()
    for xs, ps in draw_samples(state, prob, n, seed, chunk, workers):
        pos, mom = pos + Moments.of(xs), mom + Moments.of(ps)
    if pos.count == 0:
        raise StarvationError(f"no post-selected events in {n} trials (p={prob:.3e})")
    return PointerReadout(
        g=cfg.g,
        mean_position=pos.mean,
        mean_momentum=mom.mean,
        postselect_prob=prob,
        momentum_var0=p0.momentum_variance(),
        pointer_sigma=math.sqrt(p0.position_variance()),
        n_samples=pos.count,
        stderr=pos.stderr,
        stderr_momentum=mom.stderr,
        n_trials=n,
    )
