"""Run configuration: TOML in, canonical JSON out (hashed into every output).

Schema (all sections optional except ``grid`` and ``signal``)::

    method = "sign_sm_sa"     # sm | sign_sm | sign_sm_sa | gcp_sa | sa | cp | gcp
    seed = 1                  # 64-bit, drives annealing
    gamma = 0.175929...       # rad / (us * field unit); default NV electron
    diagonalization = "exact" # or "circulant"
    gcp_mode = "midpoint"     # or "crossing"

    [grid]
    T_us = 32.0
    dt_us = 0.16

    [signal]                  # components are [A, nu_MHz, phi_rad]
    normalized = true
    components = [[0.288, 0.1150, 0.0], [0.335, 0.2125, 0.0], [0.377, 0.1450, 0.0]]

    [noise]                   # kind = gaussian | white | tabulated
    kind = "gaussian"
    s0_mhz = 0.00119
    amplitude_mhz = 0.52
    nu_l_mhz = 0.4316
    sigma_nu_mhz = 0.0042
    omega_max = 3.0           # optional, rad/us
    two_sided = false
    # tabulated: csv = "nsd.csv", linear_frequency = false, or inline
    # omega = [...], values = [...]

    [anneal]                  # unbiased SA
    steps = 100000
    T0 = 1.0
    alpha = 1.0
    K = 0.001

    [domain_wall]             # seeded SA
    steps = 1000
    T0 = 0.001
    alpha = 1.0

    [cp]
    n = 16
    tau_us = 2.352941176

    [output]
    dir = "out"
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import toml

from .anneal import DOMAIN_WALL_DEFAULT, AnnealSchedule
from .model import GaussianNoise, Grid, SignalSpec, TabulatedNoise, load_tabulated_csv
from .spherical import DEFAULT_GAMMA

METHODS = ("sm", "sign_sm", "sign_sm_sa", "gcp_sa", "sa", "cp", "gcp")
DEFAULT_K = 1e-3
UNBIASED_CONFIG_DEFAULT = AnnealSchedule(steps=100_000, T0=1.0, alpha=1.0, K=DEFAULT_K)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    signal: SignalSpec
    noise: GaussianNoise | TabulatedNoise
    grid: Grid
    method: str = "sign_sm_sa"
    seed: int = 0
    gamma: float = DEFAULT_GAMMA
    anneal: AnnealSchedule = UNBIASED_CONFIG_DEFAULT
    domain_wall: AnnealSchedule = DOMAIN_WALL_DEFAULT
    cp: tuple | None = None
    diagonalization: str = "exact"
    gcp_mode: str = "midpoint"
    output_dir: str = "out"
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown method {self.method!r} (choose from {', '.join(METHODS)})")
        if self.method == "cp" and self.cp is None:
            raise ConfigError("method 'cp' needs a [cp] section with n and tau_us")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "anneal", self.anneal.with_(seed=int(self.seed), move_kind="unbiased"))
        object.__setattr__(self, "domain_wall",
                           self.domain_wall.with_(seed=int(self.seed), move_kind="domain_wall", K=0.0))

    def with_(self, **kw):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return RunConfig(**d)

    def to_dict(self):
        noise = self.noise
        if isinstance(noise, TabulatedNoise):
            nd = {"kind": "tabulated", "omega": list(noise.omega), "values": list(noise.values),
                  "s0_mhz": noise.s0, "two_sided": noise.two_sided}
        else:
            nd = {"kind": "gaussian", "s0_mhz": noise.s0, "amplitude_mhz": noise.amplitude,
                  "nu_l_mhz": noise.nu_l, "sigma_nu_mhz": noise.sigma_nu, "two_sided": noise.two_sided}
            if noise.omega_max is not None:
                nd["omega_max"] = noise.omega_max
        d = {
            "method": self.method,
            "seed": int(self.seed),
            "gamma": self.gamma,
            "diagonalization": self.diagonalization,
            "gcp_mode": self.gcp_mode,
            "grid": {"T_us": self.grid.T, "dt_us": self.grid.dt},
            "signal": {"normalized": self.signal.normalized,
                       "components": [list(c) for c in self.signal.components]},
            "noise": nd,
            "anneal": _schedule_dict(self.anneal, with_k=True),
            "domain_wall": _schedule_dict(self.domain_wall),
            "output": {"dir": self.output_dir},
        }
        if self.cp is not None:
            d["cp"] = {"n": int(self.cp[0]), "tau_us": float(self.cp[1])}
        return d

    def canonical(self) -> str:
        """Sorted JSON of every input that affects results (not the output location)."""
        d = self.to_dict()
        d.pop("output")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def to_toml(self) -> str:
        return toml.dumps(self.to_dict())


def _schedule_dict(s: AnnealSchedule, with_k=False):
    d = {"steps": s.steps, "T0": s.T0, "alpha": s.alpha}
    if with_k:
        d["K"] = s.K
    return d


def _get(section, key, name, kind=float, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"{name}.{key}: missing required field")
        return default
    try:
        return kind(section[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{name}.{key}: expected {kind.__name__}, got {section[key]!r}") from None


def _parse_noise(nd, base_dir):
    kind = nd.get("kind", "gaussian")
    two_sided = bool(nd.get("two_sided", False))
    s0 = _get(nd, "s0_mhz", "noise", default=0.0)
    if kind == "white":
        return GaussianNoise(s0=s0, amplitude=0.0, nu_l=0.0, sigma_nu=0.0, two_sided=two_sided)
    if kind == "gaussian":
        return GaussianNoise(
            s0=s0,
            amplitude=_get(nd, "amplitude_mhz", "noise", required=True),
            nu_l=_get(nd, "nu_l_mhz", "noise", required=True),
            sigma_nu=_get(nd, "sigma_nu_mhz", "noise", required=True),
            omega_max=_get(nd, "omega_max", "noise"),
            two_sided=two_sided,
        )
    if kind == "tabulated":
        if "csv" in nd:
            path = os.path.join(base_dir, nd["csv"])
            return load_tabulated_csv(path, s0=s0, linear_frequency=bool(nd.get("linear_frequency", False)),
                                      two_sided=two_sided)
        if "omega" in nd and "values" in nd:
            return TabulatedNoise(tuple(nd["omega"]), tuple(nd["values"]), s0=s0, two_sided=two_sided)
        raise ConfigError("noise: tabulated kind needs csv or inline omega/values")
    raise ConfigError(f"noise.kind: unknown kind {kind!r}")


def _parse_schedule(d, name, base):
    if d is None:
        return base
    return base.with_(
        steps=_get(d, "steps", name, int, base.steps),
        T0=_get(d, "T0", name, float, base.T0),
        alpha=_get(d, "alpha", name, float, base.alpha),
        K=_get(d, "K", name, float, base.K),
    )


def config_from_dict(d, base_dir=".") -> RunConfig:
    try:
        if "grid" not in d:
            raise ConfigError("grid: missing section")
        if "signal" not in d:
            raise ConfigError("signal: missing section")
        g = d["grid"]
        grid = Grid(_get(g, "T_us", "grid", required=True), _get(g, "dt_us", "grid", required=True))
        sd = d["signal"]
        if "components" in sd:
            signal = SignalSpec.from_components(sd["components"], normalized=bool(sd.get("normalized", False)))
        else:
            amps = sd.get("amplitudes")
            if amps is None:
                raise ConfigError("signal: needs components or amplitudes/frequencies_mhz/phases")
            signal = SignalSpec(amps, sd.get("frequencies_mhz", ()), sd.get("phases", [0.0] * len(amps)),
                                normalized=bool(sd.get("normalized", False)))
        noise = _parse_noise(d.get("noise", {"kind": "white", "s0_mhz": 0.0}), base_dir)
        cp = None
        if "cp" in d:
            cp = (_get(d["cp"], "n", "cp", int, required=True), _get(d["cp"], "tau_us", "cp", required=True))
        return RunConfig(
            signal=signal,
            noise=noise,
            grid=grid,
            method=d.get("method", "sign_sm_sa"),
            seed=_get(d, "seed", "config", int, 0),
            gamma=_get(d, "gamma", "config", float, DEFAULT_GAMMA),
            anneal=_parse_schedule(d.get("anneal"), "anneal", UNBIASED_CONFIG_DEFAULT),
            domain_wall=_parse_schedule(d.get("domain_wall"), "domain_wall", DOMAIN_WALL_DEFAULT),
            cp=cp,
            diagonalization=d.get("diagonalization", "exact"),
            gcp_mode=d.get("gcp_mode", "midpoint"),
            output_dir=d.get("output", {}).get("dir", "out"),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def loads(text, base_dir=".") -> RunConfig:
    try:
        d = toml.loads(text)
    except toml.TomlDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(d, base_dir)


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, os.path.dirname(os.path.abspath(path)))
