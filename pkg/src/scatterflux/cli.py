"""Command-line front end: configuration ingestion, energy sweeps,
figure-data emission, S-matrix export and the invariant-verification
runner.

Output files are comma-separated with a '#'-prefixed header block that
records the full configuration hash, so identical configs produce byte
identical artifacts.  Exit codes: 0 success, 1 invariant failure,
2 configuration error, 3 numerical-convergence failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .core import PotentialProfile, SystemSpec, gap_structure, thermal_state
from .ensemble import (
    DEFAULT_E_MAX_FACTOR,
    DEFAULT_Q,
    ParticleEnergyDistribution,
    detailed_balance_check,
    heat_exchange_ft_check,
    stochastic_matrix,
)
from .errors import (
    ConfigError,
    IllConditionedCompositionError,
    QuadratureConvergenceError,
    ScatterfluxError,
)
from .fluct import (
    dual_distribution,
    eta_direct,
    eta_gapsum,
    forward_distribution,
    microreversibility_check,
    report,
    verify_fluctuation_relation,
)
from .mapbuild import (
    eigenoperators,
    transition_probabilities,
    transition_probabilities_averaged,
)
from .maplab import fluctuation_residual, modified_jarzynski, random_map
from .solver import (
    DEFAULT_SLICES,
    THRESHOLD_TOL,
    oracle_flat_profile,
    solve_smatrix,
    solve_smatrix_batch,
    square_barrier_transmission,
)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3

_COUPLING_TAGS = ("pauli-x", "all-ones-offdiag")


def _fmt(x: float) -> str:
    """17 significant digits: round-trips every float64 bit-exactly."""
    return f"{x:.17g}"


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters; serializes losslessly to and from TOML."""

    # system block
    n_levels: int = 2
    delta: float = 1.0
    levels: tuple[float, ...] | None = None
    coupling: str | tuple[tuple[float, ...], ...] = "pauli-x"
    v0: float = 100.0
    a: float = 1.0
    mass: float = 1.0
    hbar: float = 1.0
    shape: str = "cosine"
    symmetric: bool = True
    # numerics block
    m_slices: int = DEFAULT_SLICES
    threshold_tol: float = THRESHOLD_TOL
    quadrature: int = DEFAULT_Q
    e_max_factor: float = DEFAULT_E_MAX_FACTOR
    # thermodynamics block
    beta: float = 0.1
    beta_tilde: float | None = None
    # sweep block
    e_min: float = 0.05
    e_max: float = 100.0
    count: int = 200
    grid: str = "log"
    # output block
    directory: str = "."

    def __post_init__(self):
        if self.levels is None and (self.n_levels < 1 or self.delta <= 0):
            raise ConfigError("ladder shorthand needs n_levels >= 1 and delta > 0")
        if isinstance(self.coupling, str) and self.coupling not in _COUPLING_TAGS:
            raise ConfigError(f"unknown coupling tag {self.coupling!r}")
        for name in ("a", "mass", "hbar", "threshold_tol", "e_min", "e_max"):
            val = getattr(self, name)
            if not math.isfinite(val) or val <= 0:
                raise ConfigError(f"{name} must be finite and > 0, got {val}")
        if not math.isfinite(self.v0) or self.v0 < 0:
            raise ConfigError(f"v0 must be finite and >= 0, got {self.v0}")
        if self.shape not in ("cosine", "flat"):
            raise ConfigError(f"unknown profile shape {self.shape!r}")
        if self.m_slices < 1 or self.quadrature < 1 or self.count < 1:
            raise ConfigError("m_slices, quadrature and count must be >= 1")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.beta_tilde is not None and self.beta_tilde <= 0:
            raise ConfigError("beta_tilde must be > 0 when given")
        if self.e_min >= self.e_max:
            raise ConfigError("sweep needs e_min < e_max")
        if self.grid not in ("linear", "log"):
            raise ConfigError(f"unknown grid kind {self.grid!r}")

    # -- construction -----------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        blocks = {
            "system": (
                "n_levels", "delta", "levels", "coupling", "v0", "a",
                "mass", "hbar", "shape", "symmetric",
            ),
            "numerics": ("m_slices", "threshold_tol", "quadrature", "e_max_factor"),
            "thermodynamics": ("beta", "beta_tilde"),
            "sweep": ("e_min", "e_max", "count", "grid"),
            "output": ("directory",),
        }
        kwargs = {}
        for block, keys in blocks.items():
            sub = data.get(block, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"block [{block}] must be a table")
            for k in sub:
                if k not in keys:
                    raise ConfigError(f"unknown key {k!r} in block [{block}]")
            kwargs.update(sub)
        for k in data:
            if k not in blocks:
                raise ConfigError(f"unknown config block [{k}]")
        if "levels" in kwargs and kwargs["levels"] is not None:
            kwargs["levels"] = tuple(float(x) for x in kwargs["levels"])
        if "coupling" in kwargs and not isinstance(kwargs["coupling"], str):
            kwargs["coupling"] = tuple(
                tuple(float(x) for x in row) for row in kwargs["coupling"]
            )
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_toml(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        sys_block = {
            "n_levels": self.n_levels,
            "delta": self.delta,
            "coupling": self.coupling
            if isinstance(self.coupling, str)
            else [list(r) for r in self.coupling],
            "v0": self.v0,
            "a": self.a,
            "mass": self.mass,
            "hbar": self.hbar,
            "shape": self.shape,
            "symmetric": self.symmetric,
        }
        if self.levels is not None:
            sys_block["levels"] = list(self.levels)
        thermo = {"beta": self.beta}
        if self.beta_tilde is not None:
            thermo["beta_tilde"] = self.beta_tilde
        return {
            "system": sys_block,
            "numerics": {
                "m_slices": self.m_slices,
                "threshold_tol": self.threshold_tol,
                "quadrature": self.quadrature,
                "e_max_factor": self.e_max_factor,
            },
            "thermodynamics": thermo,
            "sweep": {
                "e_min": self.e_min,
                "e_max": self.e_max,
                "count": self.count,
                "grid": self.grid,
            },
            "output": {"directory": self.directory},
        }

    def to_toml(self) -> str:
        def value(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, int):
                return str(v)
            if isinstance(v, float):
                return _fmt(v)
            if isinstance(v, str):
                return json.dumps(v)
            if isinstance(v, (list, tuple)):
                return "[" + ", ".join(value(x) for x in v) + "]"
            raise ConfigError(f"unserializable config value {v!r}")

        lines = []
        for block, sub in self.to_dict().items():
            lines.append(f"[{block}]")
            for k, v in sub.items():
                lines.append(f"{k} = {value(v)}")
            lines.append("")
        return "\n".join(lines)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, default=_fmt)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    # -- derived objects --------------------------------------------------

    def system_spec(self) -> SystemSpec:
        if self.levels is None and isinstance(self.coupling, str):
            return SystemSpec.ladder(
                self.n_levels,
                self.delta,
                self.v0,
                a=self.a,
                mass=self.mass,
                hbar=self.hbar,
                shape=self.shape,
            )
        if self.levels is not None:
            levels = self.levels
        else:
            offset = (self.n_levels - 1) * self.delta / 2.0
            levels = tuple(j * self.delta - offset for j in range(self.n_levels))
        n = len(levels)
        if isinstance(self.coupling, str):
            if self.coupling == "pauli-x" and n != 2:
                raise ConfigError("pauli-x coupling needs exactly two levels")
            coupling = tuple(
                tuple(0.0 if i == j else 1.0 for j in range(n)) for i in range(n)
            )
        else:
            coupling = self.coupling
        try:
            return SystemSpec(
                levels=levels,
                coupling=coupling,
                profile=PotentialProfile(v0=self.v0, a=self.a, shape=self.shape),
                mass=self.mass,
                hbar=self.hbar,
            )
        except ScatterfluxError as exc:
            raise ConfigError(str(exc)) from exc

    def sweep_grid(self) -> np.ndarray:
        """Kinetic-energy grid with points nudged off channel thresholds."""
        if self.grid == "log":
            grid = np.geomspace(self.e_min, self.e_max, self.count)
        else:
            grid = np.linspace(self.e_min, self.e_max, self.count)
        spec = self.system_spec()
        thresholds = {0.0}
        lv = spec.levels_array()
        for ei in lv:
            for ej in lv:
                if ei - ej > 0:
                    thresholds.add(ei - ej)
        tol = self.threshold_tol
        out = []
        for e in grid:
            while any(abs(e - t) < tol for t in thresholds):
                e += tol
            out.append(e)
        return np.asarray(out)


def _apply_overrides(cfg: RunConfig, pairs) -> RunConfig:
    """Apply --set block.key=value overrides on top of a config."""
    data = cfg.to_dict()
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set needs block.key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        if len(parts) != 2:
            raise ConfigError(f"--set key must be block.key, got {key!r}")
        block, name = parts
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare string, e.g. shape=flat
        data.setdefault(block, {})[name] = value
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# output helpers


def _header(cfg: RunConfig, title: str, extra=()):
    lines = [f"# {title}", f"# config_hash={cfg.config_hash()}"]
    lines.extend(f"# {x}" for x in extra)
    return lines


def _write_lines(path: str, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# sweep


def _sweep_point(spec, e_p, beta, m_slices, tol):
    """Rows for one kinetic energy: one per direction plus the average."""
    th = thermal_state(spec, beta)
    gaps = gap_structure(spec, beta)
    rows = []
    tables = {}
    for alpha in ("+", "-"):
        try:
            tp = transition_probabilities(
                eigenoperators(spec, e_p, alpha, m_slices, tol)
            )
            tables[alpha] = tp
            rows.append((alpha, report(tp, th, gaps), tp, ""))
        except ScatterfluxError as exc:
            rows.append((alpha, None, None, type(exc).__name__))
    if all(r[3] == "" for r in rows):
        from .mapbuild import TransitionProbabilities

        avg = TransitionProbabilities(
            spec=spec,
            e_p=float(e_p),
            alpha="avg",
            table=0.5 * (tables["+"].table + tables["-"].table),
        )
        rows.append(("avg", report(avg, th, gaps), avg, ""))
    else:
        rows.append(("avg", None, None, "skipped"))
    return rows


def _sweep_rows(cfg: RunConfig, threads: int):
    spec = cfg.system_spec()
    grid = cfg.sweep_grid()
    n = spec.n_levels
    # One batched fold for the whole sweep: warm the cache up front.
    totals = sorted({float(e + lv) for e in grid for lv in spec.levels})
    try:
        solve_smatrix_batch(spec, totals, cfg.m_slices, cfg.threshold_tol)
    except ScatterfluxError:
        pass  # per-point error handling below reports the culprit rows

    def work(e_p):
        return _sweep_point(spec, e_p, cfg.beta, cfg.m_slices, cfg.threshold_tol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_point = list(pool.map(work, grid))
    else:
        per_point = [work(e) for e in grid]

    header = ["e_p", "alpha", "avg_w", "delta_f", "eta", "gamma", "sigma",
              "bound_slack"]
    header += [f"p_{jp}_{j}" for jp in range(n) for j in range(n)]
    header.append("error")
    out = [",".join(header)]
    mismatch = 0.0
    for e_p, rows in zip(grid, per_point):
        plus = rows[0]
        minus = rows[1]
        if cfg.symmetric and plus[3] == "" and minus[3] == "":
            mismatch = max(
                mismatch, float(np.max(np.abs(plus[2].table - minus[2].table)))
            )
        for alpha, rep, tp, err in rows:
            cells = [_fmt(float(e_p)), alpha]
            if rep is None:
                cells += [""] * (6 + n * n) + [err]
            else:
                cells += [
                    _fmt(rep.avg_w), _fmt(rep.delta_f), _fmt(rep.eta),
                    _fmt(rep.gamma), _fmt(rep.sigma), _fmt(rep.bound_slack),
                ]
                cells += [_fmt(tp.table[jp, j]) for jp in range(n) for j in range(n)]
                cells.append("")
            out.append(",".join(cells))
    return out, mismatch


def cmd_sweep(cfg: RunConfig, args) -> int:
    rows, mismatch = _sweep_rows(cfg, args.threads)
    path = f"{cfg.directory}/sweep.csv"
    _write_lines(path, _header(cfg, "energy sweep") + rows)
    print(f"wrote {path} ({len(rows) - 1} rows)")
    if cfg.symmetric and mismatch > 1e-8:
        print(
            f"symmetry assertion failed: direction tables differ by {mismatch:.3e}",
            file=sys.stderr,
        )
        return EXIT_INVARIANT
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _verify_checks(cfg: RunConfig, seed: int):
    """Yield (name, residual, tolerance) over every module's invariants."""
    spec = cfg.system_spec()
    sub = replace(cfg, count=min(cfg.count, 40))
    grid = sub.sweep_grid()
    totals = sorted({float(e + lv) for e in grid for lv in spec.levels})
    smats = solve_smatrix_batch(spec, totals, cfg.m_slices, cfg.threshold_tol)
    unit = max(sm.unitarity_residual() for sm in smats)
    yield ("smatrix_unitarity", unit, 1e-8)

    # The sliced model is exactly unitary at any M, so coarseness shows up
    # as disagreement under slice doubling, not as a unitarity violation.
    conv = max(
        float(
            np.max(
                np.abs(
                    solve_smatrix(spec, e, cfg.m_slices, cfg.threshold_tol).s
                    - solve_smatrix(spec, e, 2 * cfg.m_slices, cfg.threshold_tol).s
                )
            )
        )
        for e in (1.7, 3.3, 9.1)
    )
    yield ("slice_convergence", conv, 1e-7)

    barrier = max(
        abs(
            abs(
                oracle_flat_profile(
                    SystemSpec.single_level(u, a=cfg.a), e
                ).s[0, 0]
            )
            ** 2
            - square_barrier_transmission(e, u * math.pi / 2.0, cfg.a)
        )
        for u in (0.5, 2.0)
        for e in np.linspace(0.3, 8.0, 25)
    )
    yield ("square_barrier_oracle", barrier, 1e-6)

    flat_cfg = replace(cfg, shape="flat")
    flat_spec = flat_cfg.system_spec()
    flat = max(
        float(
            np.max(
                np.abs(
                    solve_smatrix(flat_spec, e, cfg.m_slices, cfg.threshold_tol).s
                    - oracle_flat_profile(flat_spec, e, cfg.threshold_tol).s
                )
            )
        )
        for e in (1.7, 3.3, 9.1)
    )
    yield ("flat_profile_oracle", flat, 1e-10)

    th = thermal_state(spec, cfg.beta)
    gaps = gap_structure(spec, cfg.beta)
    worst_fr = worst_eta = worst_slack = worst_sigma = worst_e1e2 = 0.0
    for e_p in grid:
        for alpha in ("+", "-"):
            tp = transition_probabilities(
                eigenoperators(spec, e_p, alpha, cfg.m_slices, cfg.threshold_tol)
            )
            fwd = forward_distribution(tp, th)
            dual = dual_distribution(tp, th)
            worst_fr = max(
                worst_fr, verify_fluctuation_relation(fwd, dual, cfg.beta)
            )
            worst_eta = max(
                worst_eta, abs(eta_direct(dual) - eta_gapsum(tp, gaps, th))
            )
            rep = report(tp, th, gaps)
            worst_slack = max(worst_slack, -rep.bound_slack)
            worst_sigma = max(worst_sigma, -rep.sigma)
            worst_e1e2 = max(worst_e1e2, abs(rep.sigma - rep.sigma_from_gamma))
    yield ("fluctuation_relation", worst_fr, 1e-8)
    yield ("eta_consistency", worst_eta, 1e-10)
    yield ("bound_slack_nonneg", worst_slack, 1e-10)
    yield ("entropy_nonneg", worst_sigma, 1e-10)
    yield ("entropy_two_routes", worst_e1e2, 1e-9)

    micro = 0.0
    for e_p in (2.0, 5.0, 10.0):
        if cfg.e_min < e_p < cfg.e_max:
            res, _ = microreversibility_check(
                spec, e_p, cfg.beta, cfg.m_slices, cfg.threshold_tol
            )
            micro = max(micro, res)
    yield ("microreversibility", micro, 1e-8)

    if cfg.beta_tilde is not None:
        dist = ParticleEnergyDistribution.thermal(
            cfg.beta_tilde,
            q=cfg.quadrature,
            e_max=cfg.e_max_factor / cfg.beta_tilde,
            breakpoints=gap_structure(spec, 0.0).gaps,
        )
        sm = stochastic_matrix(spec, dist, cfg.m_slices, cfg.threshold_tol)
        yield ("ensemble_column_sums", sm.column_residual(), 1e-6)
        db = detailed_balance_check(sm)
        yield ("detailed_balance", db if db is not None else 0.0, 1e-6)
        hx = heat_exchange_ft_check(sm, th)
        yield ("heat_exchange_ft", hx if hx is not None else 0.0, 1e-6)

    worst_a5 = worst_jz = 0.0
    rng = np.random.default_rng(seed)
    for _ in range(10):
        dim = int(rng.integers(2, 5))
        rank = int(rng.integers(1, 6))
        km = random_map(dim, rank, int(rng.integers(0, 2**31)))
        worst_a5 = max(worst_a5, fluctuation_residual(km, 1.0))
        lhs, rhs = modified_jarzynski(km, 1.0)
        worst_jz = max(worst_jz, abs(lhs - rhs))
    yield ("maplab_fluctuation", worst_a5, 1e-10)
    yield ("maplab_jarzynski", worst_jz, 1e-10)


def cmd_verify(cfg: RunConfig, args) -> int:
    rows = ["check,residual,tolerance,status"]
    failed = False
    for name, residual, tol in _verify_checks(cfg, args.seed):
        ok = residual < tol
        failed = failed or not ok
        status = "pass" if ok else "fail"
        print(f"[{status.upper():4s}] {name}: residual={residual:.3e} tol={tol:g}")
        rows.append(f"{name},{_fmt(residual)},{_fmt(tol)},{status}")
    path = f"{cfg.directory}/verify_report.csv"
    _write_lines(path, _header(cfg, "invariant verification") + rows)
    print(f"wrote {path}")
    return EXIT_INVARIANT if failed else EXIT_OK


# ---------------------------------------------------------------------------
# smatrix


def cmd_smatrix(cfg: RunConfig, args) -> int:
    spec = cfg.system_spec()
    sm = solve_smatrix(spec, args.energy, cfg.m_slices, cfg.threshold_tol)
    n_open = len(sm.open_levels)
    extra = [
        f"energy={_fmt(sm.energy)}",
        "open_levels=" + ";".join(str(j) for j in sm.open_levels),
        f"unitarity_residual={_fmt(sm.unitarity_residual())}",
    ]
    rows = ["out_dir,out_level,in_dir,in_level,re,im"]
    dirs = ("+", "-")
    for r in range(2 * n_open):
        for c in range(2 * n_open):
            v = sm.s[r, c]
            rows.append(
                ",".join(
                    [
                        dirs[r // n_open],
                        str(sm.open_levels[r % n_open]),
                        dirs[c // n_open],
                        str(sm.open_levels[c % n_open]),
                        _fmt(v.real),
                        _fmt(v.imag),
                    ]
                )
            )
    path = f"{cfg.directory}/smatrix.csv"
    _write_lines(path, _header(cfg, "scattering matrix", extra) + rows)
    print(f"wrote {path} ({2 * n_open}x{2 * n_open})")
    return EXIT_OK


def read_smatrix_csv(path: str):
    """Parse a cmd_smatrix artifact back into (open_levels, matrix)."""
    levels = []
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# open_levels="):
                levels = [int(x) for x in line.split("=", 1)[1].split(";")]
            elif line and not line.startswith("#") and not line.startswith("out_dir"):
                parts = line.split(",")
                entries.append(complex(float(parts[4]), float(parts[5])))
    dim = 2 * len(levels)
    return tuple(levels), np.asarray(entries).reshape(dim, dim)


# ---------------------------------------------------------------------------
# figure data


def cmd_figure2(cfg: RunConfig, args) -> int:
    for n in (2, 3, 4):
        ncfg = replace(cfg, n_levels=n, levels=None, coupling="all-ones-offdiag")
        delta = ncfg.delta
        low = replace(
            ncfg, e_min=delta / 20.0, e_max=3.0 * delta, grid="linear",
            count=max(2, cfg.count // 2),
        )
        high = replace(
            ncfg, e_min=3.0 * delta, e_max=cfg.e_max, grid="log",
            count=max(2, cfg.count // 2),
        )
        for tag, sub in (("low", low), ("high", high)):
            rows, _ = _sweep_rows(sub, args.threads)
            extra = []
            if tag == "low":
                marks = ";".join(_fmt(k * delta) for k in range(1, n))
                extra.append(f"gap_gridlines={marks}")
            path = f"{cfg.directory}/figure2_n{n}_{tag}.csv"
            _write_lines(path, _header(sub, f"figure data n={n} {tag}", extra) + rows)
            print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# thermal ensemble


def cmd_thermal(cfg: RunConfig, args) -> int:
    if cfg.beta_tilde is None:
        raise ConfigError("thermal subcommand needs thermodynamics.beta_tilde")
    spec = cfg.system_spec()
    dist = ParticleEnergyDistribution.thermal(
        cfg.beta_tilde,
        q=cfg.quadrature,
        e_max=cfg.e_max_factor / cfg.beta_tilde,
        breakpoints=gap_structure(spec, 0.0).gaps,
    )
    sm = stochastic_matrix(
        spec, dist, cfg.m_slices, cfg.threshold_tol,
        check_convergence=args.check_convergence,
    )
    th = thermal_state(spec, cfg.beta)
    db = detailed_balance_check(sm)
    hx = heat_exchange_ft_check(sm, th)
    extra = [
        f"beta_tilde={_fmt(cfg.beta_tilde)}",
        f"column_residual={_fmt(sm.column_residual())}",
        f"detailed_balance_residual={_fmt(db) if db is not None else 'n/a'}",
        f"heat_exchange_residual={_fmt(hx) if hx is not None else 'n/a'}",
    ]
    n = spec.n_levels
    rows = ["row," + ",".join(f"col_{j}" for j in range(n))]
    for jp in range(n):
        rows.append(
            ",".join([str(jp)] + [_fmt(sm.matrix[jp, j]) for j in range(n)])
        )
    path = f"{cfg.directory}/thermal.csv"
    _write_lines(path, _header(cfg, "thermal stochastic matrix", extra) + rows)
    print(f"wrote {path}")
    if db is not None and db > 1e-6:
        print(f"detailed balance residual {db:.3e} exceeds 1e-6", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="scatterflux",
        description="Multichannel scattering maps and energy-fluctuation statistics",
    )
    ap.add_argument("--config", help="TOML configuration file")
    ap.add_argument(
        "--set", action="append", metavar="BLOCK.KEY=VALUE",
        help="override one config entry, repeatable",
    )
    ap.add_argument("--seed", type=int, default=1234, help="seed for random-map checks")
    ap.add_argument("--threads", type=int, default=1, help="sweep worker pool size")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", help="energy sweep of fluctuation statistics")
    sub.add_parser("verify", help="run every module's invariant suite")
    sm = sub.add_parser("smatrix", help="export one S-matrix")
    sm.add_argument("--energy", type=float, required=True, help="total energy")
    sub.add_parser("figure2", help="emit low/high energy panel data for N=2,3,4")
    t = sub.add_parser("thermal", help="stochastic matrix and ensemble checks")
    t.add_argument(
        "--check-convergence", action="store_true",
        help="re-run with doubled quadrature and compare",
    )
    return ap


_COMMANDS = {
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "smatrix": cmd_smatrix,
    "figure2": cmd_figure2,
    "thermal": cmd_thermal,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        cfg = _apply_overrides(cfg, args.set)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureConvergenceError, IllConditionedCompositionError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ScatterfluxError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    raise SystemExit(main())
