"""The regularized Galerkin system and its fractional time stepper.

State is the coefficient block of u_M on ||k||_inf <= M.  The drift is
-(-Laplace)^s u + b*Laplace u + L_S(||u||_{H^-gamma}) Pi_M zeta(u); the noise
is the spectral transport term with matched amplitude A.  Time stepping is
the explicit Volterra-Euler recursion

    u_n = u_0 + sum_{k<n} w[n][k] * (drift(u_k) + transport(u_k, dW_k) / dt)

with the rl_kernel_weights rows, one Brownian path per trajectory (the
increments of step k are reused by every later n).  At beta = 1 the weights
are exactly dt and the recursion collapses to classical Euler-Maruyama,
which is also how it is computed (incrementally, same partial sums).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from . import noise as noise_mod
from . import spectral as sp
from .errors import InvalidParameterError
from .fractional import kernel_increments, validate_order

ZETA_KINDS = ("fisher", "keller_segel", "none")

#: hard cap on t_end/dt; the quadratic Volterra history cost is accepted only
#: at desk scale.
MAX_STEPS = 100_000

DEFAULT_GAMMA = 0.1
DEFAULT_BLOWUP_THRESHOLD = 1.0e6

_MASK64 = (1 << 64) - 1

# stream tags for the seed-mixing chain (arbitrary fixed constants)
_TAG_INITIAL = 0x49C3A5E1D2B70F11
_TAG_NOISE = 0x5A11B6C40E9D3377


def splitmix64(x: int) -> int:
    """One round of the splitmix64 avalanche; the documented mixing function."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(*words: int) -> int:
    """Fold integer words into one 64-bit key by chained splitmix64 rounds."""
    acc = 0
    for w in words:
        acc = splitmix64((acc ^ (int(w) & _MASK64)) & _MASK64)
    return acc


def _philox_state(key_lo: int, key_hi: int) -> dict:
    """Fresh Philox bit-generator state for a 128-bit (key_lo, key_hi) key."""
    return {
        "bit_generator": "Philox",
        "state": {
            "counter": np.zeros(4, dtype=np.uint64),
            "key": np.array([key_lo, key_hi], dtype=np.uint64),
        },
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }


def _keyed_generator(key_lo: int, key_hi: int) -> np.random.Generator:
    bg = np.random.Philox(key=0)
    bg.state = _philox_state(key_lo, key_hi)
    return np.random.Generator(bg)


def initial_rng(base_seed: int, run_index: int) -> np.random.Generator:
    """Generator for the initial field of one run; independent of the noise."""
    return _keyed_generator(mix_seed(base_seed, run_index, _TAG_INITIAL), 0)


def step_rng(base_seed: int, run_index: int, step: int) -> np.random.Generator:
    """Generator for the Brownian increments of one step of one run.

    Keyed by (seed, run, step) only, so runs that differ in the noise support
    share increments on common modes (common-random-number pairing across
    noise levels).
    """
    return _keyed_generator(mix_seed(base_seed, run_index, _TAG_NOISE), step)


@dataclass(frozen=True)
class SimConfig:
    """All scalars of the regularized system plus the initial-data spec.

    init is a plain dict in one of three shapes:
      {"mean": m, "delta0": d0[, "decay": g]}   mean plus a random fluctuation
                                                of exact L2 size sqrt(delta0)
      {"amplitude": a, "decay": g[, "mean": m]} random field, coefficient
                                                std amplitude*(1+|k|^2)^(-g/2)
      {"coeffs": [{"k": [...], "re": r, "im": i}, ...]}  explicit modes
    """

    d: int
    M: int
    s: float
    beta: float
    b: float
    S: float
    dt: float
    t_end: float
    zeta: str
    init: dict
    noise_N: int = 0
    gamma: float = DEFAULT_GAMMA
    seed: int = 0
    blowup_threshold: float = DEFAULT_BLOWUP_THRESHOLD
    snapshot_stride: int = 0

    def __post_init__(self):
        if self.d not in (2, 3):
            raise InvalidParameterError(f"d must be 2 or 3, got {self.d}")
        if self.M < 1:
            raise InvalidParameterError(f"M must be >= 1, got {self.M}")
        if self.s < 1.0:
            raise InvalidParameterError(f"s must be >= 1, got {self.s}")
        if self.noise_N > 0:
            if not 0.5 < self.beta <= 1.0:
                raise InvalidParameterError(
                    f"beta = {self.beta}: with transport noise on (noise_N > 0) the "
                    "stochastic memory kernel (t-tau)^(beta-1) is square-integrable "
                    "only for beta > 1/2; need 1/2 < beta <= 1"
                )
        else:
            validate_order(self.beta)
        if self.b < 0.0:
            raise InvalidParameterError(f"b must be >= 0, got {self.b}")
        if self.S <= 0.0:
            raise InvalidParameterError(f"cut-off level S must be > 0, got {self.S}")
        if self.gamma <= 0.0:
            raise InvalidParameterError(f"gamma must be > 0, got {self.gamma}")
        if self.dt <= 0.0:
            raise InvalidParameterError(f"dt must be > 0, got {self.dt}")
        if self.t_end < self.dt:
            raise InvalidParameterError(f"t_end must be >= dt, got {self.t_end}")
        if self.zeta not in ZETA_KINDS:
            raise InvalidParameterError(
                f"zeta must be one of {ZETA_KINDS}, got {self.zeta!r}"
            )
        if self.noise_N < 0:
            raise InvalidParameterError(f"noise_N must be >= 0, got {self.noise_N}")
        if self.blowup_threshold <= 0.0:
            raise InvalidParameterError("blowup_threshold must be positive")
        if self.snapshot_stride < 0:
            raise InvalidParameterError("snapshot_stride must be >= 0")
        if self.n_steps > MAX_STEPS:
            raise InvalidParameterError(
                f"t_end/dt = {self.n_steps} steps exceeds the cap of {MAX_STEPS}"
            )
        _validate_init_spec(self.init)

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))

    def canonical_dict(self) -> dict:
        return {
            "d": self.d,
            "M": self.M,
            "s": float(self.s),
            "beta": float(self.beta),
            "b": float(self.b),
            "S": float(self.S),
            "gamma": float(self.gamma),
            "dt": float(self.dt),
            "t_end": float(self.t_end),
            "zeta": self.zeta,
            "noise_N": self.noise_N,
            "seed": int(self.seed),
            "blowup_threshold": float(self.blowup_threshold),
            "snapshot_stride": self.snapshot_stride,
            "init": self.init,
        }

    def config_hash(self) -> str:
        """64-bit content hash of the canonicalized config (16 hex digits)."""
        blob = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _validate_init_spec(init: dict):
    if not isinstance(init, dict):
        raise InvalidParameterError("init must be a mapping")
    keys = set(init)
    if "coeffs" in keys:
        allowed = {"coeffs"}
    elif "delta0" in keys:
        allowed = {"mean", "delta0", "decay"}
        if "mean" not in keys:
            raise InvalidParameterError("init with delta0 needs a mean value")
        if init["delta0"] < 0.0:
            raise InvalidParameterError("delta0 must be >= 0")
    elif "amplitude" in keys:
        allowed = {"amplitude", "decay", "mean"}
        if "decay" not in keys:
            raise InvalidParameterError("random init needs a decay exponent")
    else:
        raise InvalidParameterError(
            "init must contain 'coeffs', 'delta0' (mean+fluctuation), or 'amplitude'"
        )
    unknown = keys - allowed
    if unknown:
        raise InvalidParameterError(f"unknown init key(s): {sorted(unknown)}")


def build_initial_field(cfg: SimConfig, rng: np.random.Generator) -> sp.SpectralField:
    """Realize the configured initial data (random parts drawn from rng)."""
    init = cfg.init
    if "coeffs" in init:
        entries = {
            tuple(int(c) for c in e["k"]): complex(e.get("re", 0.0), e.get("im", 0.0))
            for e in init["coeffs"]
        }
        return sp.from_modes(cfg.d, cfg.M, entries)
    if "delta0" in init:
        mean = float(init["mean"])
        delta0 = float(init["delta0"])
        decay = float(init.get("decay", 2.0))
        fluct = sp.random_field(rng, cfg.d, cfg.M, decay=decay, amplitude=1.0, mean=0.0)
        norm = sp.sobolev_norm(fluct, 0.0)
        arr = np.array(fluct.coeffs)
        if delta0 > 0.0 and norm > 0.0:
            arr *= math.sqrt(delta0) / norm
        else:
            arr[:] = 0.0
        arr[(cfg.M,) * cfg.d] = mean
        return sp.SpectralField(cfg.d, cfg.M, arr)
    return sp.random_field(
        rng,
        cfg.d,
        cfg.M,
        decay=float(init["decay"]),
        amplitude=float(init["amplitude"]),
        mean=float(init.get("mean", 0.0)),
    )


def cutoff_value(r: float, S: float) -> float:
    """Smooth non-increasing cut-off: 1 on [0, S], 0 on [S+1, inf).

    The joining arc on (S, S+1) is the quintic smoothstep
    1 - (6x^5 - 15x^4 + 10x^3), so the function is C^1 with derivative
    bounded by 15/8 (the Lipschitz constant the uniqueness argument needs).
    """
    if S <= 0.0:
        raise InvalidParameterError(f"cut-off level S must be > 0, got {S}")
    if r <= S:
        return 1.0
    if r >= S + 1.0:
        return 0.0
    x = r - S
    return 1.0 - (6.0 * x**5 - 15.0 * x**4 + 10.0 * x**3)


def zeta_fisher(u: sp.SpectralField) -> sp.SpectralField:
    """Fisher-KPP nonlinearity u^2 - u, dealiased and truncated to M."""
    sq = sp.multiply(u, u)
    return sp.SpectralField(u.d, u.M, sq.coeffs - u.coeffs)


def zeta_keller_segel(rho: sp.SpectralField) -> sp.SpectralField:
    """Chemotaxis coupling -div(rho * grad c) with -Laplace c = rho - mean(rho).

    The potential solve drops the mean, the products are dealiased, and the
    divergence is taken spectrally, so the output mean mode is exactly zero.
    """
    c = sp.laplacian_inverse(rho)
    out = np.zeros_like(rho.coeffs)
    grids = sp._mode_grids(rho.d, rho.M)
    for ax, gc in enumerate(sp.gradient(c)):
        flux = sp.multiply(rho, gc)
        out -= sp.TWO_PI * 1j * grids[ax] * flux.coeffs
    return sp.SpectralField(rho.d, rho.M, sp.hermitianize(out))


_ZETA_FUNCS = {"fisher": zeta_fisher, "keller_segel": zeta_keller_segel}


def drift(u: sp.SpectralField, cfg: SimConfig) -> sp.SpectralField:
    """Full drift: -(-Laplace)^s u + b Laplace u + L_S(||u||_{H^-gamma}) Pi_M zeta(u)."""
    out = sp.frac_laplacian_apply(u, cfg.s).coeffs.copy()
    if cfg.b > 0.0:
        out += cfg.b * sp.frac_laplacian_apply(u, 1.0).coeffs
    if cfg.zeta != "none":
        lval = cutoff_value(sp.sobolev_norm(u, -cfg.gamma), cfg.S)
        if lval != 0.0:
            zc = _ZETA_FUNCS[cfg.zeta](u)
            out += lval * sp.project_modes(zc, cfg.M).coeffs
    return sp.SpectralField(u.d, u.M, out)


@dataclass
class TrajectoryRecord:
    """Per-step norms and diagnostics of one simulated trajectory."""

    times: np.ndarray
    l2: np.ndarray
    hs: np.ndarray
    hneg_gamma: np.ndarray
    mean: np.ndarray
    cutoff: np.ndarray
    blew_up: bool
    blowup_time: Optional[float]
    config_hash: str
    seed: int
    run_index: int
    dt: float
    snapshots: List[Tuple[int, sp.SpectralField]] = field(default_factory=list)

    @property
    def fluct_l2sq(self) -> np.ndarray:
        """||u - mean(u)||_{L2}^2 per recorded step (Parseval on the block)."""
        return self.l2**2 - self.mean**2

    def final_norms(self) -> dict:
        return {
            "l2": float(self.l2[-1]),
            "hs": float(self.hs[-1]),
            "hneg_gamma": float(self.hneg_gamma[-1]),
            "mean": float(self.mean[-1]),
        }


class _Engine:
    """Precomputed multiplier tables and dealiased-product plans for one config."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        d, M = cfg.d, cfg.M
        self.shape = (2 * M + 1,) * d
        ksq = np.asarray(sp._ksq_grid(d, M))
        lap = 4.0 * np.pi**2 * ksq
        lap_pow = np.zeros_like(lap)
        mask = ksq > 0.0
        lap_pow[mask] = lap[mask] ** cfg.s
        self.lin_mult = -lap_pow - cfg.b * lap
        self.w_hs = (1.0 + ksq) ** cfg.s
        self.w_hneg = (1.0 + ksq) ** (-cfg.gamma)
        self.center = (M,) * d

        self.R = sp.grid_resolution(M, dealias=True)
        self._embed = sp._embed_index(M, self.R)
        self._ix = np.ix_(*([self._embed] * d))
        self._dense = np.zeros((self.R,) * d, dtype=np.complex128)

        self.kgrids = [g.astype(np.float64) for g in sp._mode_grids(d, M)]
        if cfg.zeta == "keller_segel":
            self.inv_lap = np.where(ksq > 0.0, 1.0 / lap, 0.0)
            self.inv_lap[self.center] = 0.0

        if cfg.noise_N > 0:
            self.theta = noise_mod.make_theta_cutoff(cfg.noise_N, d)
            self.basis = noise_mod.build_noise_basis(self.theta)
            self.A = noise_mod.amplitude_A(cfg.b, self.theta)
            self.plan = noise_mod.TransportPlan(d, M, self.theta, self.basis)
        else:
            self.theta = None

    def _to_grid(self, block: np.ndarray) -> np.ndarray:
        self._dense[...] = 0.0
        self._dense[self._ix] = block
        return (np.fft.ifftn(self._dense) * self.R**self.cfg.d).real

    def _from_grid(self, grid: np.ndarray) -> np.ndarray:
        chat = np.fft.fftn(grid) / self.R**self.cfg.d
        return sp.hermitianize(chat[self._ix])

    def zeta_block(self, block: np.ndarray) -> np.ndarray:
        kind = self.cfg.zeta
        if kind == "fisher":
            g = self._to_grid(block)
            return self._from_grid(g * g) - block
        # keller_segel
        rho_g = self._to_grid(block)
        pot = block * self.inv_lap
        out = np.zeros_like(block)
        for ax in range(self.cfg.d):
            grad_g = self._to_grid(sp.TWO_PI * 1j * self.kgrids[ax] * pot)
            flux = self._from_grid(rho_g * grad_g)
            out -= sp.TWO_PI * 1j * self.kgrids[ax] * flux
        return sp.hermitianize(out)

    def drift_block(self, block: np.ndarray, lval: float) -> np.ndarray:
        out = self.lin_mult * block
        if self.cfg.zeta != "none" and lval != 0.0:
            out = out + lval * self.zeta_block(block)
        return out


def integrate(cfg: SimConfig, run_index: int = 0) -> TrajectoryRecord:
    """Run one trajectory of the regularized Galerkin system.

    All randomness (initial fluctuation, Brownian increments) derives from
    (cfg.seed, run_index) through the documented splitmix64 mixing, so a
    rerun is bit-identical and ensemble results are independent of
    scheduling order.  Blow-up (L2 norm beyond cfg.blowup_threshold, or a
    non-finite field) ends the run and is recorded, not raised.
    """
    eng = _Engine(cfg)
    u0_field = build_initial_field(cfg, initial_rng(cfg.seed, run_index))
    u0 = np.array(u0_field.coeffs)
    if math.sqrt(float(np.sum(np.abs(u0) ** 2))) >= cfg.blowup_threshold:
        raise InvalidParameterError("initial field norm must lie below blowup_threshold")

    steps = cfg.n_steps
    dt = cfg.dt
    classical = cfg.beta == 1.0
    P = u0.size
    if not classical:
        c = kernel_increments(cfg.beta, dt, steps)
        g_hist = np.empty((steps, P), dtype=np.complex128)
    u = u0.copy()
    u0_flat = u0.ravel()

    times = np.empty(steps + 1)
    l2 = np.empty(steps + 1)
    hs = np.empty(steps + 1)
    hneg = np.empty(steps + 1)
    mean = np.empty(steps + 1)
    cut = np.empty(steps + 1)
    snapshots: List[Tuple[int, sp.SpectralField]] = []

    w_hs = eng.w_hs
    w_hneg = eng.w_hneg
    noise_on = eng.theta is not None
    if noise_on:
        # one Philox per run, rekeyed per step: same streams as step_rng()
        noise_key = mix_seed(cfg.seed, run_index, _TAG_NOISE)
        bg = np.random.Philox(key=0)
        gen = np.random.Generator(bg)
    blew_up = False
    blowup_time = None
    n_rec = 0

    for n in range(steps + 1):
        t_n = n * dt
        absq = u.real**2 + u.imag**2
        l2sq = float(np.sum(absq))
        l2_n = math.sqrt(l2sq)
        if not math.isfinite(l2_n):
            blew_up = True
            blowup_time = t_n
            break
        hneg_n = math.sqrt(float(np.sum(w_hneg * absq)))
        lval = cutoff_value(hneg_n, cfg.S)
        times[n_rec] = t_n
        l2[n_rec] = l2_n
        hs[n_rec] = math.sqrt(float(np.sum(w_hs * absq)))
        hneg[n_rec] = hneg_n
        mean[n_rec] = u[eng.center].real
        cut[n_rec] = lval
        n_rec += 1
        if cfg.snapshot_stride > 0 and n % cfg.snapshot_stride == 0:
            snapshots.append((n, sp.SpectralField(cfg.d, cfg.M, u.copy())))
        if l2_n > cfg.blowup_threshold:
            blew_up = True
            blowup_time = t_n
            break
        if n == steps:
            break

        g = eng.drift_block(u, lval)
        if noise_on:
            bg.state = _philox_state(noise_key, n)
            inc = noise_mod.sample_increments(eng.theta, dt, gen)
            t_blk = eng.plan.apply(u, inc.values, eng.A)
        if classical:
            u = u + dt * g
            if noise_on:
                u = u + t_blk
        else:
            if noise_on:
                g = g + t_blk / dt
            g_hist[n] = g.ravel()
            # u_{n+1} = u_0 + sum_{k<=n} c_{n+1-k} G_k
            conv = g_hist[: n + 1].T @ c[1 : n + 2][::-1]
            u = (u0_flat + conv).reshape(eng.shape)

    return TrajectoryRecord(
        times=times[:n_rec].copy(),
        l2=l2[:n_rec].copy(),
        hs=hs[:n_rec].copy(),
        hneg_gamma=hneg[:n_rec].copy(),
        mean=mean[:n_rec].copy(),
        cutoff=cut[:n_rec].copy(),
        blew_up=blew_up,
        blowup_time=blowup_time,
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
        run_index=run_index,
        dt=dt,
        snapshots=snapshots,
    )


def with_noise_level(cfg: SimConfig, N: int) -> SimConfig:
    """Config variant at theta cutoff radius N.

    N = 0 is the deterministic reference: noise off and the corrector b
    dropped (the b*Laplace term exists only as the Ito corrector of the
    transport noise, so the unperturbed equation has no b).
    """
    if N == 0:
        return replace(cfg, noise_N=0, b=0.0)
    return replace(cfg, noise_N=N)
