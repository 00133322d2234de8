"""Experiment configuration: strict key = value files.

Canonical form is one ``key = value`` pair per line, ``#`` comments and
blank lines allowed; parsing rejects unknown or repeated keys by name and
``serialize(parse(text))`` reproduces a canonical file byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .domains import PlanarDomain, annulus, two_hole_domain, unit_disk
from .kernels import AnnulusKernel, BasisKernel, DiskKernel, load_basis
from .metric import MetricProvider, RadialMetricCache

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "serialize_config"]


class ConfigError(ValueError):
    pass


def _parse_complex(s: str) -> complex:
    try:
        return complex(s.replace(" ", ""))
    except ValueError as exc:
        raise ConfigError(f"bad complex literal {s!r}") from exc


def _parse_winding(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.split(","))


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(float(p) for p in s.split(","))


def _parse_complexes(s: str) -> tuple[complex, ...]:
    return tuple(_parse_complex(p) for p in s.split(","))


def _fmt_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}j"


_KEYS: dict[str, tuple] = {
    # (parser, serializer)
    "domain": (str, str),
    "r": (float, lambda v: f"{v:.17g}"),
    "hole_radius": (float, lambda v: f"{v:.17g}"),
    "hole_centers": (_parse_complexes, lambda v: ",".join(_fmt_complex(z) for z in v)),
    "provider": (str, str),
    "series_tol": (float, lambda v: f"{v:.17g}"),
    "basis_path": (str, str),
    "onb_n": (int, str),
    "quad_nr": (int, str),
    "quad_ntheta": (int, str),
    "quad_nx": (int, str),
    "quad_ny": (int, str),
    "metric": (str, str),
    "seed": (int, str),
    "out": (str, str),
    "z0": (_parse_complex, _fmt_complex),
    "theta": (float, lambda v: f"{v:.17g}"),
    "t_end": (float, lambda v: f"{v:.17g}"),
    "rtol": (float, lambda v: f"{v:.17g}"),
    "atol": (float, lambda v: f"{v:.17g}"),
    "winding": (_parse_winding, lambda v: ",".join(str(i) for i in v)),
    "w_max": (int, str),
    "horizon": (float, lambda v: f"{v:.17g}"),
    "eps_hat": (float, lambda v: f"{v:.17g}"),
    "boundary_point": (_parse_complex, _fmt_complex),
    "depths": (_parse_floats, lambda v: ",".join(f"{x:.17g}" for x in v)),
    "grid": (int, str),
    "n_angles": (int, str),
    "t_max": (float, lambda v: f"{v:.17g}"),
    "n_theta": (int, str),
    "seg_time": (float, lambda v: f"{v:.17g}"),
}

_DEFAULTS = {
    "domain": "disk",
    "r": 0.5,
    "hole_radius": 0.15,
    "hole_centers": (-0.45 + 0.0j, 0.45 + 0.0j),
    "provider": "closed-form",
    "series_tol": 1e-12,
    "basis_path": "",
    "onb_n": 24,
    "quad_nr": 96,
    "quad_ntheta": 256,
    "quad_nx": 192,
    "quad_ny": 192,
    "metric": "kofuks",
    "seed": 0,
    "out": "out",
    "z0": 0.3 + 0.1j,
    "theta": 0.0,
    "t_end": 10.0,
    "rtol": 1e-10,
    "atol": 1e-12,
    "winding": (1,),
    "w_max": 6,
    "horizon": 500.0,
    "eps_hat": 0.0,  # 0 = estimate it
    "boundary_point": 1.0 + 0.0j,
    "depths": (),
    "grid": 64,
    "n_angles": 16,
    "t_max": 60.0,
    "n_theta": 64,
    "seg_time": 4.0,
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)  # explicitly set keys only

    def __getitem__(self, key: str):
        if key in self.values:
            return self.values[key]
        return _DEFAULTS[key]

    def set(self, key: str, value) -> None:
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = value

    # -- factories ---------------------------------------------------------

    def domain(self) -> PlanarDomain:
        kind = self["domain"]
        if kind == "disk":
            return unit_disk()
        if kind == "annulus":
            return annulus(self["r"])
        if kind == "two-hole":
            return two_hole_domain(tuple(self["hole_centers"]),
                                   self["hole_radius"])
        raise ConfigError(f"unknown domain {kind!r}")

    def kernel(self, domain: PlanarDomain):
        name = self["provider"]
        if name == "closed-form":
            if domain.kind != "unit-disk":
                raise ConfigError(
                    f"closed-form kernel only exists on the disk, not {domain.kind}")
            return DiskKernel()
        if name == "series":
            if domain.kind != "annulus" or domain.r is None:
                raise ConfigError(
                    f"series kernel only exists on the annulus, not {domain.kind}")
            return AnnulusKernel(domain.r, tol=self["series_tol"])
        if name == "onb":
            path = self["basis_path"]
            if not path:
                raise ConfigError("onb provider needs basis_path (see basis-build)")
            return BasisKernel(load_basis(path), domain)
        raise ConfigError(f"unknown provider {name!r}")

    def provider(self, domain: PlanarDomain):
        base = MetricProvider(self.kernel(domain), metric_kind=self["metric"])
        return base

    def cached_provider(self, domain: PlanarDomain):
        base = self.provider(domain)
        if domain.kind == "annulus" and domain.r is not None:
            return RadialMetricCache(base, domain.r)
        return base


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in cfg.values:
            raise ConfigError(f"line {lineno}: repeated config key {key!r}")
        parser = _KEYS[key][0]
        try:
            cfg.values[key] = parser(val)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"line {lineno}: key {key!r}: {exc}") from exc
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.values.items():
        lines.append(f"{key} = {_KEYS[key][1](value)}")
    return "\n".join(lines) + ("\n" if lines else "")
