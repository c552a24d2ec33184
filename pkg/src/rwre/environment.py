"""Environment laws, finite reflected environments and their ladder structure.

An environment lives on a finite window ``[left, right]`` of sites. The site
``left`` always carries ``omega = 1`` so the walk is reflected there and every
sum over sites to the left is finite. Products of ``rho_x = (1 - omega_x) /
omega_x`` are handled through their logarithms.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
from scipy import integrate, optimize, special

from rwre import _kernels
from rwre.seeding import generator

__all__ = [
    "EnvironmentLaw",
    "TwoPoint",
    "Beta",
    "Uniform",
    "constant_law",
    "law_from_descriptor",
    "kappa_of_law",
    "Environment",
    "EnvStatics",
    "LadderDecomposition",
    "sample_env_P",
    "sample_env_Q",
    "env_statics",
    "ladder_decompose",
    "hill_tail_index",
    "TIE_TOL",
    "KAPPA_CAP",
    "Q_BLOCK_CAP",
]

#: Potential differences smaller than this count as ties for ladder points.
TIE_TOL = 1e-9
#: kappa is reported as +inf when E[rho^gamma] < 1 up to this gamma.
KAPPA_CAP = 64.0
#: Longest admissible block when sampling under Q.
Q_BLOCK_CAP = 1_000_000


# ---------------------------------------------------------------------------
# laws
# ---------------------------------------------------------------------------


class EnvironmentLaw:
    """Distribution of a single site probability omega_0.

    Subclasses provide sampling, E[rho^gamma] and E[log rho]. Transience
    (E[log rho] < 0) is checked by the operations that need it, not at
    construction, so recurrent laws can still be sampled on finite windows.
    """

    kind: str = ""

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def rho_moment(self, gamma: float) -> float:
        raise NotImplementedError

    def mean_log_rho(self) -> float:
        raise NotImplementedError

    @property
    def gamma_max(self) -> float:
        """Supremum of gamma with E[rho^gamma] finite."""
        return math.inf

    @property
    def descriptor(self) -> dict[str, Any]:
        raise NotImplementedError

    @property
    def transient(self) -> bool:
        return self.mean_log_rho() < 0

    @cached_property
    def kappa(self) -> float:
        return kappa_of_law(self)

    def mean_rho(self) -> float:
        return self.rho_moment(1.0)


def _check_prob(name: str, value: float, *, open_right: bool = True) -> float:
    value = float(value)
    upper_ok = value < 1 if open_right else value <= 1
    if not (value > 0 and upper_ok):
        raise ValueError(f"{name} must lie in (0, 1), got {value}")
    return value


@dataclass(frozen=True)
class TwoPoint(EnvironmentLaw):
    """omega_0 = omega_a with probability q, otherwise omega_b."""

    omega_a: float
    omega_b: float
    q: float
    kind = "two-point"

    def __post_init__(self):
        _check_prob("omega_a", self.omega_a)
        _check_prob("omega_b", self.omega_b)
        if not 0 <= self.q <= 1:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")

    @classmethod
    def for_kappa(cls, kappa: float, omega_a: float = 2 / 3, omega_b: float = 1 / 3) -> TwoPoint:
        """Choose q so that E[rho^kappa] = 1 (needs rho_a < 1 < rho_b)."""
        ra = (1 - omega_a) / omega_a
        rb = (1 - omega_b) / omega_b
        if not ra < 1 < rb:
            raise ValueError("need rho(omega_a) < 1 < rho(omega_b) to hit a finite kappa")
        q = (rb**kappa - 1) / (rb**kappa - ra**kappa)
        return cls(omega_a, omega_b, q)

    def sample(self, rng, size):
        pick = rng.random(size) < self.q
        return np.where(pick, self.omega_a, self.omega_b)

    def rho_moment(self, gamma):
        ra = (1 - self.omega_a) / self.omega_a
        rb = (1 - self.omega_b) / self.omega_b
        return self.q * ra**gamma + (1 - self.q) * rb**gamma

    def mean_log_rho(self):
        ra = (1 - self.omega_a) / self.omega_a
        rb = (1 - self.omega_b) / self.omega_b
        out = 0.0
        if self.q > 0:
            out += self.q * math.log(ra)
        if self.q < 1:
            out += (1 - self.q) * math.log(rb)
        return out

    @property
    def descriptor(self):
        return {"kind": self.kind, "omega_a": self.omega_a, "omega_b": self.omega_b, "q": self.q}


@dataclass(frozen=True)
class Beta(EnvironmentLaw):
    """omega_0 ~ Beta(a, b); E[rho^gamma] = B(a - gamma, b + gamma) / B(a, b)."""

    a: float
    b: float
    kind = "beta"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"Beta parameters must be positive, got a={self.a}, b={self.b}")

    @classmethod
    def for_kappa(cls, kappa: float, a: float) -> Beta:
        """Solve for b given a > kappa."""
        if not a > kappa:
            raise ValueError(f"a Beta law has kappa < a; need a > kappa, got a={a}")

        def f(log_b):
            return cls(a, math.exp(log_b)).rho_moment(kappa) - 1.0

        log_b = optimize.brentq(f, math.log(1e-6), math.log(1e6), xtol=1e-13)
        return cls(a, math.exp(log_b))

    @property
    def gamma_max(self):
        return self.a

    def sample(self, rng, size):
        # omega can round to exactly 0 or 1 for extreme parameters
        return np.clip(rng.beta(self.a, self.b, size), 1e-300, 1 - 2**-53)

    def rho_moment(self, gamma):
        if gamma >= self.a:
            return math.inf
        return math.exp(special.betaln(self.a - gamma, self.b + gamma) - special.betaln(self.a, self.b))

    def mean_log_rho(self):
        return float(special.digamma(self.b) - special.digamma(self.a))

    @property
    def descriptor(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Uniform(EnvironmentLaw):
    """omega_0 uniform on [lo, hi] with 0 < lo < hi < 1."""

    lo: float
    hi: float
    kind = "uniform"

    def __post_init__(self):
        _check_prob("lo", self.lo)
        _check_prob("hi", self.hi)
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got lo={self.lo}, hi={self.hi}")

    @classmethod
    def for_kappa(cls, kappa: float, hi: float) -> Uniform:
        """Solve for lo given hi (hi must exceed 1/2)."""

        def f(lo):
            return cls(lo, hi).rho_moment(kappa) - 1.0

        lo = optimize.brentq(f, 1e-3, min(0.5, hi - 1e-9), xtol=1e-13)
        return cls(lo, hi)

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    def _quad(self, fn):
        val, err = integrate.quad(fn, self.lo, self.hi, epsabs=1e-13, epsrel=1e-12, limit=200)
        if not np.isfinite(val) or err > 1e-9 * max(1.0, abs(val)):
            raise RuntimeError(f"quadrature did not converge for {self!r}: value={val}, err={err}")
        return val / (self.hi - self.lo)

    def rho_moment(self, gamma):
        return self._quad(lambda w: math.exp(gamma * (math.log1p(-w) - math.log(w))))

    def mean_log_rho(self):
        return self._quad(lambda w: math.log1p(-w) - math.log(w))

    @property
    def descriptor(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


def constant_law(p: float) -> TwoPoint:
    """Degenerate law omega_0 = p."""
    return TwoPoint(p, p, 1.0)


def _number(value: Any, name: str) -> float:
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"{name}: cannot parse number {value!r}") from exc
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{name}: expected a number, got {value!r}")
    return float(value)


_LAW_KEYS = {
    "two-point": ({"omega_a", "omega_b", "q"}, {"omega_a", "omega_b", "kappa"}),
    "beta": ({"a", "b"}, {"a", "kappa"}),
    "uniform": ({"lo", "hi"}, {"hi", "kappa"}),
    "constant": ({"p"},),
}


def law_from_descriptor(desc: dict[str, Any]) -> EnvironmentLaw:
    """Build a law from ``{"kind": ..., <params>}``.

    Besides explicit parameters, two-point, beta and uniform laws accept a
    ``kappa`` target that fixes one parameter. Numbers may be given as
    strings such as ``"2/3"``. Errors name the offending key.
    """
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ValueError("law: a mapping with a 'kind' key is required")
    kind = desc["kind"]
    if kind not in _LAW_KEYS:
        raise ValueError(f"law.kind: unknown law kind {kind!r}")
    keys = set(desc) - {"kind"}
    allowed = _LAW_KEYS[kind]
    if keys not in [set(s) for s in allowed]:
        known = set().union(*allowed)
        unknown = sorted(keys - known)
        if unknown:
            raise ValueError(f"law.{unknown[0]}: unknown key for a {kind} law")
        need = " or ".join("{" + ", ".join(sorted(s)) + "}" for s in allowed)
        raise ValueError(f"law: a {kind} law needs exactly {need}, got {sorted(keys)}")
    p = {k: _number(v, f"law.{k}") for k, v in desc.items() if k != "kind"}
    for k in ("omega_a", "omega_b", "p", "lo", "hi"):
        if k in p and not 0 < p[k] < 1:
            raise ValueError(f"law.{k}: must lie in (0, 1), got {p[k]}")
    if "q" in p and not 0 <= p["q"] <= 1:
        raise ValueError(f"law.q: must lie in [0, 1], got {p['q']}")
    for k in ("a", "b", "kappa"):
        if k in p and not p[k] > 0:
            raise ValueError(f"law.{k}: must be positive, got {p[k]}")
    if kind == "constant":
        return constant_law(p["p"])
    if kind == "two-point":
        if "kappa" in p:
            return TwoPoint.for_kappa(p["kappa"], p["omega_a"], p["omega_b"])
        return TwoPoint(p["omega_a"], p["omega_b"], p["q"])
    if kind == "beta":
        if "kappa" in p:
            return Beta.for_kappa(p["kappa"], p["a"])
        return Beta(p["a"], p["b"])
    if "kappa" in p:
        return Uniform.for_kappa(p["kappa"], p["hi"])
    return Uniform(p["lo"], p["hi"])


def kappa_of_law(law: EnvironmentLaw, tol: float = 1e-9, cap: float = KAPPA_CAP) -> float:
    """kappa = sup{gamma > 0 : E[rho^gamma] < 1}.

    gamma -> E[rho^gamma] is convex with value 1 at 0 and negative slope when
    E[log rho] < 0, so kappa is its second crossing of 1, bracketed in
    [1e-6, cap]. Returns ``inf`` when no crossing occurs below ``cap``.
    """
    mlr = law.mean_log_rho()
    if not mlr < 0:
        raise ValueError(f"law is not transient to the right: E[log rho] = {mlr:.6g} >= 0")
    lo = 1e-6
    hi = min(cap, law.gamma_max)

    def f(g):
        return law.rho_moment(g) - 1.0

    if f(lo) >= 0:
        raise RuntimeError("E[rho^gamma] >= 1 at the lower bracket; E[log rho] too close to 0")
    if hi == cap and f(cap) < 0:
        return math.inf
    if hi < cap:
        # E[rho^gamma] blows up at gamma_max; step back until finite
        hi = hi * (1 - 1e-12)
        if f(hi) < 0:
            return hi
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


# ---------------------------------------------------------------------------
# environments
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Environment:
    """Site probabilities on ``[left, right]`` with a reflection at ``left``.

    ``omegas[p]`` is omega at site ``left + p``. Interior sites may also
    equal 1 (an added reflection, see :func:`rwre.moments.reflect_at`).
    """

    left: int
    omegas: np.ndarray
    seed: int | None = None
    law: EnvironmentLaw | None = None

    def __post_init__(self):
        om = np.array(self.omegas, dtype=np.float64)
        if om.ndim != 1 or om.size < 2:
            raise ValueError("an environment needs the reflection site plus at least one site")
        if om[0] != 1.0:
            raise ValueError("omega at the left end must be exactly 1 (reflection)")
        if not (np.all(om[1:] > 0) and np.all(om[1:] <= 1)):
            raise ValueError("interior omegas must lie in (0, 1]")
        om.setflags(write=False)
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "left", int(self.left))

    @property
    def right(self) -> int:
        return self.left + self.omegas.size - 1

    @property
    def size(self) -> int:
        return self.omegas.size

    def pos(self, x: int) -> int:
        """Window offset of site ``x``."""
        if not self.left <= x <= self.right:
            raise IndexError(f"site {x} outside window [{self.left}, {self.right}]")
        return x - self.left

    def omega(self, x: int) -> float:
        return float(self.omegas[self.pos(x)])

    @cached_property
    def rho(self) -> np.ndarray:
        r = (1.0 - self.omegas) / self.omegas
        r.setflags(write=False)
        return r

    @cached_property
    def log_rho(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            lr = np.log1p(-self.omegas) - np.log(self.omegas)
        lr.setflags(write=False)
        return lr

    @property
    def has_interior_reflection(self) -> bool:
        return bool(np.any(self.omegas[1:] == 1.0))

    def __eq__(self, other):
        if not isinstance(other, Environment):
            return NotImplemented
        return (
            self.left == other.left
            and self.seed == other.seed
            and self.law == other.law
            and np.array_equal(self.omegas, other.omegas)
        )

    def __repr__(self):
        return f"Environment(left={self.left}, right={self.right}, seed={self.seed}, law={self.law!r})"

    # -- serialization ------------------------------------------------------

    def to_text(self) -> str:
        """Columnar ``site omega`` text with ``#`` metadata lines."""
        law = json.dumps(self.law.descriptor, sort_keys=True) if self.law is not None else "null"
        lines = [
            "# rwre-environment v1",
            f"# left={self.left}",
            f"# right={self.right}",
            f"# seed={'none' if self.seed is None else self.seed}",
            f"# law={law}",
            "# site omega",
        ]
        for p, w in enumerate(self.omegas):
            lines.append(f"{self.left + p} {float(w)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Environment:
        meta: dict[str, str] = {}
        sites, omegas = [], []
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            s, w = line.split()
            sites.append(int(s))
            omegas.append(float(w))
        left = int(meta["left"])
        if sites != list(range(left, left + len(sites))):
            raise ValueError("environment text: sites must be consecutive starting at left")
        seed = None if meta.get("seed", "none") == "none" else int(meta["seed"])
        law_desc = json.loads(meta.get("law", "null"))
        law = law_from_descriptor(law_desc) if law_desc is not None else None
        return cls(left, np.array(omegas), seed, law)

    _BIN_HEAD = struct.Struct("<BqqQ?I")
    _BIN_VERSION = 1

    def to_bytes(self) -> bytes:
        """Binary layout: version, left, right, seed, law JSON, float64 omegas."""
        law = json.dumps(self.law.descriptor, sort_keys=True).encode() if self.law is not None else b""
        head = self._BIN_HEAD.pack(
            self._BIN_VERSION,
            self.left,
            self.right,
            0 if self.seed is None else self.seed,
            self.seed is not None,
            len(law),
        )
        return head + law + self.omegas.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> Environment:
        n = cls._BIN_HEAD.size
        version, left, right, seed, has_seed, law_len = cls._BIN_HEAD.unpack_from(data)
        if version != cls._BIN_VERSION:
            raise ValueError(f"unsupported environment format version {version}")
        law_raw = data[n : n + law_len]
        law = law_from_descriptor(json.loads(law_raw)) if law_len else None
        om = np.frombuffer(data[n + law_len :], dtype="<f8").astype(np.float64)
        if om.size != right - left + 1:
            raise ValueError("environment bytes: array length does not match the window")
        return cls(left, om, seed if has_seed else None, law)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix == ".bin":
            path.write_bytes(self.to_bytes())
        else:
            path.write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> Environment:
        path = Path(path)
        if path.suffix == ".bin":
            return cls.from_bytes(path.read_bytes())
        return cls.from_text(path.read_text())


def sample_env_P(law: EnvironmentLaw, left: int, right: int, seed: int) -> Environment:
    """i.i.d. environment on ``(left, right]`` with a reflection at ``left``."""
    if not left < 0 <= right:
        raise ValueError(f"need left < 0 <= right, got left={left}, right={right}")
    rng = generator(seed)
    om = np.empty(right - left + 1)
    om[0] = 1.0
    om[1:] = law.sample(rng, right - left)
    return Environment(left, om, seed, law)


def _sample_blocks(law, rng, n_blocks, cap):
    """Draw omegas from a ladder point until ``n_blocks`` strict descents.

    Returns (omegas, record positions) with records[0] = 0 and
    records[n_blocks] = len(omegas), i.e. the last descent closes the array.
    """
    chunk = max(256, 4 * n_blocks)
    om = np.empty(0)
    while True:
        om = np.concatenate([om, law.sample(rng, chunk)])
        lr = np.log1p(-om) - np.log(om)
        v = np.concatenate([[0.0], np.cumsum(lr)])
        rec = _kernels.ladder_records(v, TIE_TOL)
        gaps = np.diff(rec)
        if gaps.size and gaps.max() > cap:
            raise RuntimeError(
                f"ladder block longer than {cap} sites (law {law!r}, E[log rho]={law.mean_log_rho():.4g}); "
                "the law is too close to recurrence for Q-sampling"
            )
        if rec.size > n_blocks:
            end = int(rec[n_blocks])
            return om[:end], rec[: n_blocks + 1]
        if v.size - 1 - rec[-1] > cap:
            raise RuntimeError(f"no ladder descent within {cap} sites (law {law!r})")
        chunk *= 2


def sample_env_Q(
    law: EnvironmentLaw,
    n_blocks: int,
    seed: int,
    pad_sites: int = 64,
    block_cap: int = Q_BLOCK_CAP,
) -> tuple[Environment, LadderDecomposition]:
    """Environment made of i.i.d. ladder blocks, with a ladder point at 0.

    Blocks to the right of 0 are ``n_blocks`` i.i.d. excursions of the
    potential, each ending at its first strict descent below its start.
    Whole blocks are also prepended until at least ``pad_sites`` sites lie
    left of 0, followed by the reflection site.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be at least 1 (an empty environment has no blocks)")
    if not law.transient:
        raise ValueError(f"law is not transient: E[log rho] = {law.mean_log_rho():.6g}")
    rng_right = generator(seed, 0)
    rng_pad = generator(seed, 1)
    right_om, rec = _sample_blocks(law, rng_right, n_blocks, block_cap)
    pad = np.empty(0)
    while pad.size < pad_sites:
        more, _ = _sample_blocks(law, rng_pad, 1, block_cap)
        pad = np.concatenate([more, pad])
    left = -pad.size - 1
    om = np.concatenate([[1.0], pad, right_om])
    env = Environment(left, om, seed, law)
    return env, ladder_decompose(env)


# ---------------------------------------------------------------------------
# potential, products and ladder points
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EnvStatics:
    """Potential and product sums of an environment.

    ``V`` is indexed by window offset over sites ``left .. right + 1`` with
    ``V(left) = +inf`` and ``V(0) = 0``. ``W[p]`` is W at site ``left + p``.
    """

    env: Environment
    V: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    _logcum: np.ndarray = field(repr=False)
    _zeros: np.ndarray = field(repr=False)

    def potential(self, x: int) -> float:
        if not self.env.left <= x <= self.env.right + 1:
            raise IndexError(f"site {x} outside potential range")
        return float(self.V[x - self.env.left])

    def W_at(self, j: int) -> float:
        return float(self.W[self.env.pos(j)])

    def Pi(self, i: int, j: int) -> float:
        """prod_{k=i}^{j} rho_k (1 for an empty range)."""
        if j < i:
            return 1.0
        pi, pj = self.env.pos(i), self.env.pos(j)
        if self._zeros[pj + 1] - self._zeros[pi] > 0:
            return 0.0
        return math.exp(self._logcum[pj + 1] - self._logcum[pi])

    def R(self, i: int, j: int) -> float:
        """sum_{k=i}^{j} Pi(i, k)."""
        if j < i:
            return 0.0
        pi, pj = self.env.pos(i), self.env.pos(j)
        lr = np.cumsum(self.env.log_rho[pi : pj + 1])
        return float(np.exp(special.logsumexp(lr)))


def env_statics(env: Environment) -> EnvStatics:
    lr = env.log_rho
    finite = np.where(np.isfinite(lr), lr, 0.0)
    logcum = np.concatenate([[0.0], np.cumsum(finite)])
    zeros = np.concatenate([[0], np.cumsum(~np.isfinite(lr))])
    zero_p = -env.left
    # V over offsets 0..size; V(left + p) = sum of log rho over offsets [zero_p, p)
    with np.errstate(invalid="ignore"):
        V = logcum - logcum[zero_p]
    V[0] = math.inf
    interior = zeros[1:] - zeros[1]  # reflections strictly right of `left`
    if np.any(interior > 0):
        # an interior reflection at offset m sends V(x) to -inf for x > m
        V[1:][interior > 0] = -math.inf
    W = _kernels.w_recursion(np.ascontiguousarray(env.rho))
    return EnvStatics(env, V, W, logcum, zeros)


@dataclass(frozen=True, eq=False)
class LadderDecomposition:
    """Ladder locations nu_0 < nu_1 < ... and exponential block heights.

    Block ``i`` (1-based) covers sites ``[nu_{i-1}, nu_i)``; ``log_heights[i-1]``
    is log M_i = max over that block of log Pi(nu_{i-1}, j).
    """

    nus: np.ndarray
    log_heights: np.ndarray

    @property
    def n_blocks(self) -> int:
        return self.nus.size - 1

    @property
    def heights(self) -> np.ndarray:
        return np.exp(self.log_heights)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.nus)

    def block(self, i: int) -> tuple[int, int]:
        """(nu_{i-1}, nu_i) for 1 <= i <= n_blocks."""
        if not 1 <= i <= self.n_blocks:
            raise IndexError(f"block {i} outside 1..{self.n_blocks}")
        return int(self.nus[i - 1]), int(self.nus[i])


def ladder_decompose(env: Environment, statics: EnvStatics | None = None) -> LadderDecomposition:
    """Ladder points nu_0 <= 0 < nu_1 < ... within ``[left + 1, right + 1]``.

    nu_0 is the last strict running-minimum record of V at or left of 0 and
    nu_i is the first site after nu_{i-1} where V drops strictly below
    V(nu_{i-1}); ties (up to ``TIE_TOL``) never create a ladder point.
    """
    if env.has_interior_reflection:
        raise ValueError("ladder decomposition needs an environment without interior reflections")
    st = statics if statics is not None else env_statics(env)
    V = st.V[1:]  # offsets 1..size, i.e. sites left+1 .. right+1
    rec = _kernels.ladder_records(np.ascontiguousarray(V), TIE_TOL)
    sites = rec + env.left + 1
    i0 = np.searchsorted(sites, 0, side="right") - 1
    nus = sites[i0:].astype(np.int64)
    if nus.size:
        starts = nus[:-1] - env.left
        ends = nus[1:] - env.left
        if starts.size:
            padded = np.append(st.V, -np.inf)
            seg = np.maximum.reduceat(padded, np.ravel(np.column_stack([starts + 1, ends + 1])))[::2]
            log_h = seg - st.V[starts]
        else:
            log_h = np.empty(0)
    else:
        log_h = np.empty(0)
    return LadderDecomposition(nus, log_h)


# ---------------------------------------------------------------------------
# tail index
# ---------------------------------------------------------------------------


def hill_tail_index(samples, k_order: int) -> float:
    """Hill estimate of the tail exponent from the ``k_order`` largest values.

    alpha = 1 / mean(log X_(i) - log X_(k+1)), i = 1..k, descending order.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("samples must be a non-empty 1-d array")
    if not np.all(x > 0):
        raise ValueError("Hill estimator needs positive samples")
    if not 0 < k_order < x.size:
        raise ValueError(f"k_order must lie in [1, {x.size - 1}], got {k_order}")
    top = np.sort(x)[::-1][: k_order + 1]
    logs = np.log(top)
    h = float(np.mean(logs[:k_order] - logs[k_order]))
    if h <= 0:
        raise ZeroDivisionError("Hill estimator undefined: the top order statistics are all equal")
    return 1.0 / h
