"""Run configuration: flat key-value text files with sections.

Every run validates its configuration up front and writes the fully
resolved copy next to its outputs, so any artifact can be reproduced from
what sits beside it.
"""

import configparser
import io
import os
from dataclasses import dataclass, field, replace

from .errors import ConfigurationError

PRESETS = ("paper2d", "paper3d-small", "hydrostatic-rest", "manufactured")

OUTPUT_DIR_ENV = "ORODG_OUTDIR"


@dataclass
class CaseConfig:
    preset: str = "paper2d"
    # case physics (hill/background defaults live in cases.HillCaseConfig;
    # None means "preset default")
    t_final: float = None
    dt: float = None
    u_bar: float = None
    n_buoyancy: float = None
    sigma_max: float = None
    sponge_top_depth: float = None
    sponge_lateral_width: float = None

    # discretization
    degree: int = 4
    geom_degree: int = None
    quad_points: int = None

    # mesh: root counts per axis plus one refinement directive per extra
    # level ('all' or a box 'x0:x1,z0:z1' / 'x0:x1,y0:y1,z0:z1' in meters)
    root: tuple = None
    refine: tuple = ()

    # solver
    fp_tol: float = 1e-6
    fp_max_iter: int = 10
    krylov_tol: float = 1e-8
    krylov_restart: int = 30
    krylov_max_iter: int = 1000
    preconditioner: str = "none"

    # run
    workers: int = 1
    chunk: int = 512
    output_dir: str = None
    output_every: int = 0
    diagnostics_every: int = 1
    seed: int = 0

    def validate(self):
        if self.preset not in PRESETS:
            raise ConfigurationError(
                f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if self.degree < 1:
            raise ConfigurationError("degree must be >= 1")
        if self.dt is not None and self.dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.t_final is not None and self.t_final <= 0:
            raise ConfigurationError("t_final must be positive")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.root is not None:
            if any(int(c) < 1 for c in self.root):
                raise ConfigurationError(f"root counts must be >= 1: {self.root}")
        for t in (self.fp_tol, self.krylov_tol):
            if not 0 < t < 1:
                raise ConfigurationError(f"tolerance {t} outside (0,1)")
        for n in (self.fp_max_iter, self.krylov_restart, self.krylov_max_iter,
                  self.chunk):
            if n < 1:
                raise ConfigurationError("iteration/chunk settings must be >= 1")
        if self.preconditioner not in ("none", "block_jacobi"):
            raise ConfigurationError(
                f"unknown preconditioner {self.preconditioner!r}")
        if self.output_every < 0 or self.diagnostics_every < 0:
            raise ConfigurationError("output cadences must be >= 0")
        return self

    def resolved_output_dir(self):
        if self.output_dir:
            return self.output_dir
        return os.environ.get(OUTPUT_DIR_ENV, "orodg-out")


_SECTIONS = {
    "case": ("preset", "t_final", "dt", "u_bar", "n_buoyancy", "sigma_max",
             "sponge_top_depth", "sponge_lateral_width"),
    "discretization": ("degree", "geom_degree", "quad_points"),
    "mesh": ("root", "refine"),
    "solver": ("fp_tol", "fp_max_iter", "krylov_tol", "krylov_restart",
               "krylov_max_iter", "preconditioner"),
    "run": ("workers", "chunk", "output_dir", "output_every",
            "diagnostics_every", "seed"),
}

_INT_FIELDS = {"degree", "geom_degree", "quad_points", "fp_max_iter",
               "krylov_restart", "krylov_max_iter", "workers", "chunk",
               "output_every", "diagnostics_every", "seed"}
_FLOAT_FIELDS = {"t_final", "dt", "u_bar", "n_buoyancy", "sigma_max",
                 "sponge_top_depth", "sponge_lateral_width", "fp_tol",
                 "krylov_tol"}


def _parse_value(key, raw):
    raw = raw.strip()
    if raw == "":
        return None
    if key == "root":
        return tuple(int(v) for v in raw.split(","))
    if key == "refine":
        return tuple(part.strip() for part in raw.split(";") if part.strip())
    if key in _INT_FIELDS:
        return int(raw)
    if key in _FLOAT_FIELDS:
        return float(raw)
    return raw


def _format_value(key, val):
    if val is None:
        return ""
    if key == "root":
        return ",".join(str(c) for c in val)
    if key == "refine":
        return " ; ".join(val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def load_config(path_or_text):
    """CaseConfig from an INI file path or raw text."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if os.path.exists(str(path_or_text)):
        cp.read(path_or_text)
    else:
        cp.read_string(path_or_text)
    kwargs = {}
    known = {k: sec for sec, keys in _SECTIONS.items() for k in keys}
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigurationError(f"unknown config section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in known or known[key] != sec:
                raise ConfigurationError(f"unknown key {key!r} in [{sec}]")
            val = _parse_value(key, raw)
            if val is not None:
                kwargs[key] = val
    return CaseConfig(**kwargs).validate()


def dump_config(cfg):
    cp = configparser.ConfigParser()
    for sec, keys in _SECTIONS.items():
        cp[sec] = {}
        for key in keys:
            cp[sec][key] = _format_value(key, getattr(cfg, key))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def save_config(cfg, path):
    with open(path, "w") as f:
        f.write(dump_config(cfg))


def with_overrides(cfg, **kw):
    return replace(cfg, **kw).validate()
