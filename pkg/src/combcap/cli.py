"""Experiment driver: ``comb-capacity run`` and ``comb-capacity presets``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
import scipy

from . import __version__, kernels
from .air import SUPPORTED_ORDERS, TrellisConfig, air_estimate, make_qam
from .bounds import McConfig, awgn_capacity, lower_bound_at, upper_bound_at
from .channel import ChannelParams
from .highsnr import HsnrConfig, gap_terms, u_hsnr
from .rngdist import RngStream

SCHEMA_VERSION = 1
BASE_CURVES = ("U", "L", "U_hsnr", "L_hsnr", "C_awgn")
TRELLIS_PRESETS = {
    "desk": TrellisConfig(64, 16, 500, 20),
    "full": TrellisConfig(512, 16, 2000, 20),
}
CSV_FIELDS = ("snr_per_sub_db", "curve", "bits_total", "bits_per_subchannel", "stderr",
              "converged", "params", "error")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    upper_starts: int = 5
    upper_max_evals: int = 400
    lower_starts: int = 5
    lower_max_evals: int = 400


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    M: int
    sigma2_c: float
    sigma2_r: float
    snr_grid_db: tuple[float, ...]
    curves: tuple[str, ...]
    mc: McConfig = field(default_factory=McConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    trellis: TrellisConfig = field(default_factory=lambda: TRELLIS_PRESETS["desk"])
    hsnr_samples: int = 1_000_000
    seed: int = 0
    workers: int = 1
    description: str = ""

    def __post_init__(self):
        grid = self.snr_grid_db
        if not grid:
            raise ConfigError("snr_grid_db is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("snr_grid_db must be strictly increasing")
        for c in self.curves:
            check_curve(c)
        if len(set(self.curves)) != len(self.curves):
            raise ConfigError("duplicate curve names")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        try:
            self.channel()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def channel(self) -> ChannelParams:
        return ChannelParams(self.M, self.sigma2_c, self.sigma2_r)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "channel": {"M": self.M, "sigma2_c": self.sigma2_c, "sigma2_r": self.sigma2_r},
            "snr_grid_db": list(self.snr_grid_db),
            "curves": list(self.curves),
            "mc": asdict(self.mc),
            "optimizer": asdict(self.optimizer),
            "trellis": asdict(self.trellis),
            "hsnr_samples": self.hsnr_samples,
            "seed": self.seed,
            "workers": self.workers,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"name", "channel", "snr_grid_db", "curves", "mc", "optimizer", "trellis",
                 "hsnr_samples", "seed", "workers", "description"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("channel", "snr_grid_db", "curves"):
            if key not in d:
                raise ConfigError(f"missing config key: {key}")
        M, s2c, s2r = _parse_channel(d["channel"])
        kw: dict[str, Any] = dict(
            name=str(d.get("name", "experiment")), M=M, sigma2_c=s2c, sigma2_r=s2r,
            snr_grid_db=_parse_grid(d["snr_grid_db"]), curves=tuple(d["curves"]),
            mc=_sub(McConfig, d.get("mc", {})), optimizer=_sub(OptimizerConfig, d.get("optimizer", {})),
            trellis=_parse_trellis(d.get("trellis", "desk")),
            description=str(d.get("description", "")),
        )
        for key in ("hsnr_samples", "seed", "workers"):
            if key in d:
                kw[key] = int(d[key])
        return cls(**kw)


def check_curve(name: str) -> None:
    if name in BASE_CURVES:
        return
    if name.startswith("AIR-"):
        try:
            order = int(name[4:])
        except ValueError:
            order = -1
        if order in SUPPORTED_ORDERS:
            return
    raise ConfigError(f"unknown curve {name!r}; use {', '.join(BASE_CURVES)} or AIR-<order> "
                      f"with order in {SUPPORTED_ORDERS}")


def _sub(cls, d):
    if not isinstance(d, dict):
        raise ConfigError(f"{cls.__name__} section must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _parse_channel(ch: dict) -> tuple[int, float, float]:
    if "M" not in ch:
        raise ConfigError("channel.M is required")
    has_var = "sigma2_c" in ch or "sigma2_r" in ch
    has_lw = "v_c" in ch or "v_r" in ch
    if has_var == has_lw:
        raise ConfigError("give either sigma2_c/sigma2_r or linewidths v_c/v_r")
    if has_lw:
        return int(ch["M"]), 2.0 * math.pi * float(ch["v_c"]), 2.0 * math.pi * float(ch["v_r"])
    return int(ch["M"]), float(ch["sigma2_c"]), float(ch["sigma2_r"])


def _parse_grid(g) -> tuple[float, ...]:
    if isinstance(g, dict):
        start, stop, step = float(g["start"]), float(g["stop"]), float(g["step"])
        if step <= 0:
            raise ConfigError("grid step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + i * step for i in range(count))
    return tuple(float(v) for v in g)


def _parse_trellis(t) -> TrellisConfig:
    if isinstance(t, str):
        if t not in TRELLIS_PRESETS:
            raise ConfigError(f"unknown trellis preset {t!r}; choose from {sorted(TRELLIS_PRESETS)}")
        return TRELLIS_PRESETS[t]
    return _sub(TrellisConfig, t)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def preset_names() -> list[str]:
    root = resources.files("combcap") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("combcap") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text())


def load_config(spec: str) -> ExperimentConfig:
    """Read a JSON config file, or a bundled preset when no such file exists."""
    path = Path(spec)
    if path.is_file():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    else:
        data = load_preset(spec)
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@dataclass
class ResultRow:
    snr_per_sub_db: float
    curve: str
    bits_total: float
    bits_per_subchannel: float
    stderr: float
    converged: bool
    params: dict
    error: str = ""
    wall_time: float = 0.0

    def csv_record(self) -> list[str]:
        return [repr(self.snr_per_sub_db), self.curve, _num(self.bits_total),
                _num(self.bits_per_subchannel), _num(self.stderr), str(self.converged).lower(),
                json.dumps(self.params, sort_keys=True), self.error]


def _num(v: float) -> str:
    return "nan" if v is None or not math.isfinite(v) else repr(float(v))


def rho_from_db(snr_db: float, M: int) -> float:
    return M * 10.0 ** (snr_db / 10.0)


def _point_job(args) -> ResultRow:
    cfg_dict, curve, k, snr_db, gap = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return evaluate_point(cfg, curve, k, snr_db, gap)


def evaluate_point(cfg: ExperimentConfig, curve: str, k: int, snr_db: float,
                   gap: Optional[float]) -> ResultRow:
    """One (curve, SNR) evaluation; failures are captured in the row."""
    M = cfg.M
    rho = rho_from_db(snr_db, M)
    p = cfg.channel()
    t0 = time.perf_counter()
    params: dict = {}
    stderr, converged = 0.0, True
    try:
        if curve == "C_awgn":
            total = awgn_capacity(rho, M)
        elif curve in ("U_hsnr", "L_hsnr"):
            total = u_hsnr(rho, HsnrConfig(M, cfg.sigma2_c, cfg.sigma2_r, cfg.hsnr_samples, cfg.seed))
            if curve == "L_hsnr":
                total -= gap
        elif curve == "U":
            r = upper_bound_at(rho, M, p, mc=cfg.mc, starts=cfg.optimizer.upper_starts,
                               max_evals=cfg.optimizer.upper_max_evals)
            total, converged, params = r.bits_total, r.converged, _clean(r.params)
            params["evals"] = r.evals
        elif curve == "L":
            r = lower_bound_at(rho, M, p, mc=cfg.mc, starts=cfg.optimizer.lower_starts,
                               max_evals=cfg.optimizer.lower_max_evals)
            total, converged, params = r.bits_total, r.converged, _clean(r.params)
            stderr = r.stderr
            params["evals"] = r.evals
        else:
            order = int(curve[4:])
            stream = RngStream(cfg.seed, 10_000 + order * 100 + k)
            r = air_estimate(make_qam(order), p, rho, cfg.trellis, stream)
            total, stderr = r.bits * M, r.stderr * M
        return ResultRow(snr_db, curve, float(total), float(total) / M, float(stderr), bool(converged),
                         params, "", time.perf_counter() - t0)
    except Exception as exc:  # recorded per row; the sweep continues
        return ResultRow(snr_db, curve, math.nan, math.nan, math.nan, False, params,
                         f"{type(exc).__name__}: {exc}", time.perf_counter() - t0)


def _clean(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, (np.floating, np.integer)):
            v = v.item()
        out[k] = v
    return out


def run_experiment(cfg: ExperimentConfig) -> tuple[list[ResultRow], dict]:
    """Evaluate every (SNR, curve) pair; rows come back in grid order."""
    gap = None
    gap_info: list = []
    if "L_hsnr" in cfg.curves:
        terms = gap_terms(HsnrConfig(cfg.M, cfg.sigma2_c, cfg.sigma2_r, cfg.hsnr_samples, cfg.seed))
        gap = sum(t.bits for t in terms)
        gap_info = [asdict(t) for t in terms]
    jobs = [(cfg.to_dict(), curve, k, snr, gap)
            for k, snr in enumerate(cfg.snr_grid_db) for curve in cfg.curves]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(_point_job, jobs))
    else:
        rows = [_point_job(j) for j in jobs]
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "versions": {"combcap": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": sys.version.split()[0]},
        "kernel_backend": kernels.BACKEND,
        "gap_terms": gap_info,
        "points": [{"snr_per_sub_db": r.snr_per_sub_db, "curve": r.curve, "converged": r.converged,
                    "params": r.params, "error": r.error, "wall_time_s": round(r.wall_time, 3)}
                   for r in rows],
    }
    return rows, manifest


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow(r.csv_record())
    return buf.getvalue()


def emit_figure_data(rows: list[ResultRow], curves: list[str], out_dir: Path) -> list[Path]:
    """One three-column CSV per curve: SNR, bits per subchannel, stderr."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in curves:
        path = out_dir / f"{c}.csv"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("snr_per_sub_db", "bits_per_subchannel", "stderr"))
        for r in rows:
            if r.curve == c:
                w.writerow((repr(r.snr_per_sub_db), _num(r.bits_per_subchannel), _num(r.stderr)))
        path.write_text(buf.getvalue())
        paths.append(path)
    return paths


def write_outputs(rows: list[ResultRow], manifest: dict, cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(rows_to_csv(rows))
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    emit_figure_data(rows, list(cfg.curves), out / "curves")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="comb-capacity",
                                 description="Capacity bounds and achievable rates for the comb channel.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="evaluate the curves of an experiment config")
    run.add_argument("--config", required=True, help="JSON config path or bundled preset name")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--curves", default=None, help="comma-separated subset of the config curves")
    pre = sub.add_parser("presets", help="list bundled presets")
    pre.add_argument("--show", default=None, help="print the JSON of one preset")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            if args.show:
                print(json.dumps(load_preset(args.show), indent=2))
                return 0
            for name in preset_names():
                d = load_preset(name)
                print(f"{name}\t{d.get('description', '')}")
            return 0
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed, mc=replace(cfg.mc, seed=args.seed))
        if args.curves:
            wanted = [c.strip() for c in args.curves.split(",") if c.strip()]
            for c in wanted:
                check_curve(c)
            missing = [c for c in wanted if c not in cfg.curves]
            if missing:
                raise ConfigError(f"curves not in config: {missing}")
            cfg = replace(cfg, curves=tuple(c for c in cfg.curves if c in wanted))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    rows, manifest = run_experiment(cfg)
    write_outputs(rows, manifest, cfg, Path(args.out))
    failed = sum(1 for r in rows if r.error)
    print(f"{len(rows)} rows written to {args.out} ({failed} failed)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
