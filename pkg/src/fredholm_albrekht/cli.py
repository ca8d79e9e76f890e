"""Command-line front end.

    fredholm-albrekht <basis|lqr|kernels|galerkin|simulate|verify> --config PATH [--out DIR]

The config file is line oriented, ``section.key = value`` with ``#`` comments.
Every subcommand computes all of its artifacts before writing any of them, then
writes each file atomically together with the resolved config.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .albrekht import AlbrekhtError, PolyExpansion, expand, solve_are
from .galerkin import AsPrintedUnavailable, NORMALIZATIONS, cost_table, format_cost_table, project, system_to_text
from .polytensor import SymTensor, format_coeff_text
from .simulate import FeedbackPolicy, SimConfig, SimulationDiverged, compare, decay_mask, integrate
from .spectral import VARIANTS, SpectralModel, build_basis, compute_kernels, kernel_on_grid, riccati_modes

SUBCOMMANDS = ("basis", "lqr", "kernels", "galerkin", "simulate", "verify")


class ConfigError(Exception):
    pass


class ParseError(ConfigError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class ValidationError(ConfigError):
    def __init__(self, key: str, msg: str = "invalid value"):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    N: int = 3
    Fmul: float = 0.0
    Gmul: float = 1.0
    nonlinearity: str = "point-square"
    normalization: str = "as-printed"
    d: int = 3
    variant: str = "paper-printed"
    grid_points: int = 51
    z0: tuple[float, ...] = (5.0, 5.0, 5.0)
    dt: float = 1e-4
    t_end: float = 5.0
    escape_radius: float = 1e3
    threshold: float = -20.0
    converge_tol: float = 1e-2
    stride: int = 100
    out_dir: str = "out"

    def sim_config(self) -> SimConfig:
        return SimConfig(self.z0, self.t_end, self.dt, self.escape_radius, self.converge_tol)

    def model(self) -> SpectralModel:
        return SpectralModel(build_basis(self.N), self.Fmul, self.Gmul)


# config key -> (field, type)
_KEYS = {
    "model.N": ("N", int),
    "model.Fmul": ("Fmul", float),
    "model.Gmul": ("Gmul", float),
    "model.nonlinearity": ("nonlinearity", str),
    "model.normalization": ("normalization", str),
    "expansion.d": ("d", int),
    "kernels.variant": ("variant", str),
    "kernels.grid_points": ("grid_points", int),
    "sim.z0": ("z0", tuple),
    "sim.dt": ("dt", float),
    "sim.t_end": ("t_end", float),
    "sim.escape_radius": ("escape_radius", float),
    "sim.threshold": ("threshold", float),
    "sim.converge_tol": ("converge_tol", float),
    "sim.stride": ("stride", int),
    "output.dir": ("out_dir", str),
}
_FIELD_KEY = {f: k for k, (f, _) in _KEYS.items()}


def _convert(key: str, kind, raw: str):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            return tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ValidationError(key, f"cannot parse {raw!r}") from None
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse and validate a config; absent keys take the documented defaults."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not eq or not key or not raw:
            raise ParseError(lineno, f"expected 'section.key = value', got {line!r}")
        if key not in _KEYS:
            raise ValidationError(key, "unknown key")
        field, kind = _KEYS[key]
        values[field] = _convert(key, kind, raw)
    if "z0" not in values:
        N = int(values.get("N", RunConfig.N))
        values["z0"] = tuple(5.0 if i < 3 else 0.0 for i in range(N))
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        vals = v if isinstance(v, tuple) else (v,)
        for x in vals:
            if isinstance(x, float) and not math.isfinite(x):
                raise ValidationError(_FIELD_KEY[f.name], "must be finite")
    checks = [
        ("N", cfg.N >= 1, "must be >= 1"),
        ("d", cfg.d in (1, 2, 3), "must be 1, 2 or 3"),
        ("nonlinearity", cfg.nonlinearity == "point-square", "only 'point-square' is supported"),
        ("normalization", cfg.normalization in NORMALIZATIONS, f"one of {NORMALIZATIONS}"),
        ("variant", cfg.variant in VARIANTS, f"one of {VARIANTS}"),
        ("grid_points", cfg.grid_points >= 2, "must be >= 2"),
        ("z0", len(cfg.z0) == cfg.N, f"needs {cfg.N} entries"),
        ("dt", cfg.dt > 0, "must be positive"),
        ("t_end", cfg.t_end >= cfg.dt, "must be >= sim.dt"),
        ("escape_radius", cfg.escape_radius > 0, "must be positive"),
        ("converge_tol", cfg.converge_tol > 0, "must be positive"),
        ("stride", cfg.stride >= 1, "must be >= 1"),
        ("Gmul", cfg.Gmul != 0, "must be nonzero"),
    ]
    for name, ok, msg in checks:
        if not ok:
            raise ValidationError(_FIELD_KEY[name], msg)


def format_config(cfg: RunConfig) -> str:
    lines = []
    for key, (field, kind) in _KEYS.items():
        v = getattr(cfg, field)
        if kind is tuple:
            v = ", ".join(_num(x) for x in v)
        elif kind is float:
            v = _num(v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


def _num(v: float) -> str:
    return f"{v:.9e}"


def _matrix_csv(M: np.ndarray) -> str:
    return "\n".join(",".join(_num(v) for v in row) for row in np.atleast_2d(M)) + "\n"


def expansion_files(exp: PolyExpansion, prefix: str = "expansion/") -> dict[str, str]:
    """One coefficient file per cost/feedback degree plus a manifest."""
    n, m = exp.cost.dim, len(exp.feedback)
    out = {f"{prefix}manifest.txt": f"degree={exp.degree} n={n} m={m}\n"}
    for k, t in exp.cost.terms.items():
        out[f"{prefix}cost_degree{k}.txt"] = format_coeff_text(t, kind="cost")
    for j, p in enumerate(exp.feedback):
        for k, t in p.terms.items():
            out[f"{prefix}feedback{j}_degree{k}.txt"] = format_coeff_text(t, kind="feedback", control=j)
    return out


# -- subcommands ------------------------------------------------------------


def cmd_basis(cfg: RunConfig):
    lam = build_basis(cfg.N).lambdas
    text = "i,lambda\n" + "".join(f"{i},{_num(v)}\n" for i, v in enumerate(lam))
    return {"basis.csv": text}, text


def cmd_lqr(cfg: RunConfig):
    model = cfg.model()
    Pi2, K1, mu = riccati_modes(model)
    lam = model.basis.lambdas
    table = "i,lambda,Pi_ii,mu\n" + "".join(
        f"{i},{_num(lam[i])},{_num(Pi2[i, i])},{_num(mu[i])}\n" for i in range(cfg.N)
    )
    files = {
        "lqr.csv": table,
        "pi2.txt": format_coeff_text(SymTensor.from_full(Pi2), N=cfg.N),
        "k1.csv": _matrix_csv(K1),
    }
    return files, table


def cmd_kernels(cfg: RunConfig):
    from .plotting import kernel_heatmap

    model = cfg.model()
    files: dict[str, object] = {}
    summary = []
    for variant in VARIANTS:
        kc = compute_kernels(model, variant)
        hdr = {"variant": variant, "N": cfg.N}
        files[f"pi3_{variant}.txt"] = format_coeff_text(kc.Pi3, **hdr)
        files[f"pi4_{variant}.txt"] = format_coeff_text(kc.Pi4, **hdr)
        files[f"k2_{variant}.txt"] = format_coeff_text(kc.K2, **hdr)
        files[f"k3_{variant}.txt"] = format_coeff_text(kc.K3, **hdr)
        summary.append(
            f"{variant}: Pi000={_num(kc.Pi3[(0, 0, 0)])} Pi0000={_num(kc.Pi4[(0, 0, 0, 0)])}"
        )
        if variant == cfg.variant:
            primary = kc
    grid = np.linspace(0.0, 1.0, cfg.grid_points)
    vals = kernel_on_grid(primary.Pi2, 2, grid)
    rows = ["x1,x2,value"]
    for a, x1 in enumerate(grid):
        for b, x2 in enumerate(grid):
            rows.append(f"{_num(x1)},{_num(x2)},{_num(vals[a, b])}")
    files["kernel_p2_grid.csv"] = "\n".join(rows) + "\n"
    files["kernel_p2.png"] = kernel_heatmap(grid, vals, f"quadratic cost kernel, N={cfg.N}")
    return files, "\n".join(summary) + "\n"


def _galerkin(cfg: RunConfig):
    gal = project(cfg.model(), cfg.N, cfg.normalization)
    lqr = solve_are(gal.sys)
    return gal, lqr, expand(gal.sys, cfg.d, lqr)


def cmd_galerkin(cfg: RunConfig):
    gal, _, exp = _galerkin(cfg)
    table = format_cost_table(cost_table(gal, cfg.d, exp))
    files = {"system.json": system_to_text(gal), "cost_table.csv": table}
    files.update(expansion_files(exp))
    return files, format_cost_table(cost_table(gal, cfg.d, exp), tol=5e-5)


def cmd_simulate(cfg: RunConfig):
    from .plotting import mode_traces

    gal, lqr, exp = _galerkin(cfg)
    sim = cfg.sim_config()
    full = integrate(gal, FeedbackPolicy.from_expansion(exp), sim)
    mask = decay_mask(lqr.mu, cfg.d, cfg.threshold)
    partial = integrate(gal, FeedbackPolicy.from_expansion(exp, mask=mask), sim)
    files: dict[str, object] = {
        "trajectory_full.csv": full.to_csv(cfg.stride),
        "trajectory_partial.csv": partial.to_csv(cfg.stride),
        "modes.png": mode_traces(full.subsample(cfg.stride), partial.subsample(cfg.stride),
                                 f"degree-{cfg.d} feedback, threshold {cfg.threshold:g}"),
    }
    summary = f"full: {full.label} |z(end)|={_num(full.final_norm)}\n"
    summary += f"partial: {partial.label} |z(end)|={_num(partial.final_norm)}\n"
    if full.times.shape == partial.times.shape:
        rep = compare(full, partial)
        files["comparison.csv"] = rep.to_text()
        summary += rep.to_text()
    return files, summary


def cmd_verify(cfg: RunConfig):
    from .acceptance import run_all

    results = run_all()
    lines = [r.line() for r in results]
    npass = sum(r.passed for r in results)
    lines.append(f"{npass}/{len(results)} criteria passed")
    text = "\n".join(lines) + "\n"
    return {"verify.txt": text}, text, npass == len(results)


def _write_atomic(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(subcommand: str, cfg: RunConfig, out_dir: str | None = None) -> int:
    handlers = {
        "basis": cmd_basis, "lqr": cmd_lqr, "kernels": cmd_kernels,
        "galerkin": cmd_galerkin, "simulate": cmd_simulate, "verify": cmd_verify,
    }
    if subcommand not in handlers:
        print(f"error: unknown subcommand {subcommand!r}", file=sys.stderr)
        return 2
    try:
        res = handlers[subcommand](cfg)
    except (AsPrintedUnavailable, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (AlbrekhtError, SimulationDiverged, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"computation failed in {subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    ok = True
    if len(res) == 3:
        files, summary, ok = res
    else:
        files, summary = res
    out = Path(out_dir or cfg.out_dir)
    files = dict(files)
    files["config.resolved.txt"] = format_config(cfg)
    for name in sorted(files):
        _write_atomic(out / name, files[name])
    sys.stdout.write(summary)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fredholm-albrekht", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="config file (defaults apply when omitted)")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text)
    except (OSError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return run(args.subcommand, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
