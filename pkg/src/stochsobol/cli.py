"""Command-line driver: ``stochsobol {analyze,convergence,oracle,validate}``.

A run is described by an optional JSON config file plus flag overrides (flags
win). The merged config is validated against a schema before anything is
computed. Every output file starts with a metadata header holding the tool
version, the seed and a hash of the merged config; nothing time-dependent is
written, so repeated runs give byte-identical files.

Exit codes: 0 success, 1 runtime failure (a partial-results manifest is
written), 2 configuration error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .mars import MarsConfig
from .models import MODELS, get_model
from .pipeline import (
    Experiment,
    convergence_study,
    distribution_summary,
    run_algorithm2,
    run_time_resolved,
)
from .sampling import ORACLE, RngStream
from .sobol import moments

log = logging.getLogger("stochsobol")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

_COMMON = {
    "model": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "out": {"type": "string"},
    "workers": {"type": "integer", "minimum": 1},
    "L": {"type": "number", "exclusiveMinimum": 0},
    "deterministic": {"type": "boolean"},
}
_EXPERIMENT = {
    "n": {"type": "integer", "minimum": 10},
    "m": {"type": "integer", "minimum": 1},
    "surrogate": {"enum": ["mars", "pce"]},
    "pce_order": {"type": "integer", "minimum": 1},
    "pce_tau": {"type": "number", "exclusiveMinimum": 0},
    "max_terms": {"type": "integer", "minimum": 3},
    "threshold": {"type": "number", "minimum": 0},
    "penalty": {"type": "number", "minimum": 0},
    "bins": {"type": "integer", "minimum": 1},
    "oracle_size": {"type": "integer", "minimum": 1000},
}
SCHEMAS = {
    "analyze": {
        "type": "object",
        "properties": {
            **_COMMON,
            **_EXPERIMENT,
            "time_resolved": {"type": "boolean"},
            "t_final": {"type": "number", "exclusiveMinimum": 0},
            "dt": {"type": "number", "exclusiveMinimum": 0},
            "reuse_design": {"type": "boolean"},
        },
        "required": ["model", "n", "m", "out"],
        "additionalProperties": False,
    },
    "convergence": {
        "type": "object",
        "properties": {
            **_COMMON,
            **_EXPERIMENT,
            "n_values": {"type": "array", "items": {"type": "integer", "minimum": 10}, "minItems": 1},
            "replicates": {"type": "integer", "minimum": 1},
        },
        "required": ["model", "n_values", "m", "out"],
        "additionalProperties": False,
    },
    "oracle": {
        "type": "object",
        "properties": {
            **_COMMON,
            "L_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            "nodes": {"type": "integer", "minimum": 1000},
            "samples": {"type": "integer", "minimum": 0},
            "mc": {"type": "integer", "minimum": 0},
        },
        "required": ["model", "out"],
        "additionalProperties": False,
    },
}
DEFAULTS = {
    "analyze": {"seed": 0, "workers": 1, "surrogate": "mars", "bins": 50, "oracle_size": 1_000_000},
    "convergence": {"seed": 0, "workers": 1, "surrogate": "mars", "m": 200, "replicates": 500},
    "oracle": {"seed": 0, "workers": 1, "nodes": 1_000_000, "samples": 0, "mc": 0},
}
# keys that never change results and are left out of the config hash
_NEUTRAL = ("workers", "out")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config handling


def parse_grid(text: str) -> list[float]:
    """``a:b:k`` -> k equally spaced values from a to b inclusive."""
    try:
        a, b, k = text.split(":")
        a, b, k = float(a), float(b), int(k)
    except ValueError:
        raise ConfigError(f"grid must look like a:b:k, got {text!r}") from None
    if k < 1:
        raise ConfigError("grid needs at least one point")
    return np.linspace(a, b, k).tolist()


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def resolve_config(command: str, config_path: str | None, overrides: dict) -> dict:
    cfg = dict(DEFAULTS[command])
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        cfg.update(doc)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    validator = jsonschema.Draft202012Validator(SCHEMAS[command])
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        lines = [f"  {'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid configuration:\n" + "\n".join(lines))
    if cfg["model"] not in MODELS:
        raise ConfigError(f"unknown model {cfg['model']!r}; known: {sorted(MODELS)}")
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps({k: v for k, v in cfg.items() if k not in _NEUTRAL}, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def model_params(cfg: dict) -> dict:
    params = {}
    if cfg["model"] == "toy" and "L" in cfg:
        params["L"] = cfg["L"]
    if cfg["model"] == "gfunction" and "deterministic" in cfg:
        params["deterministic"] = cfg["deterministic"]
    if cfg["model"] == "oscillator" and "t_final" in cfg:
        params["t_final"] = cfg["t_final"]
    return params


def build_experiment(cfg: dict, n: int | None = None) -> Experiment:
    mars_kw = {k: cfg[k] for k in ("max_terms", "threshold", "penalty") if k in cfg}
    kw = dict(
        model=cfg["model"],
        n=int(n if n is not None else cfg["n"]),
        m=cfg["m"],
        surrogate=cfg["surrogate"],
        seed=cfg["seed"],
        model_params=model_params(cfg),
        mars=MarsConfig(**mars_kw),
        workers=cfg["workers"],
    )
    for key in ("pce_order", "pce_tau", "replicates", "t_final", "dt", "reuse_design"):
        if key in cfg:
            kw[key] = cfg[key]
    return Experiment(**kw)


# ---------------------------------------------------------------------------
# output


class RunDir:
    """Writes result files with a metadata header and keeps a manifest."""

    def __init__(self, path: str, command: str, cfg: dict):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.meta = {
            "tool": "stochsobol",
            "version": __version__,
            "command": command,
            "seed": cfg.get("seed"),
            "config_hash": config_hash(cfg),
        }
        self.cfg = {k: v for k, v in cfg.items() if k not in _NEUTRAL}

    def header(self) -> str:
        return f"stochsobol {__version__} seed={self.meta['seed']} config={self.meta['config_hash']}"

    def csv(self, name: str, body: str):
        if not body.startswith("#"):
            body = f"# {self.header()}\n" + body
        self._write(name, body)

    def json(self, name: str, doc: dict):
        self._write(name, json.dumps({"metadata": self.meta, **doc}, indent=2, sort_keys=True) + "\n")

    def _write(self, name, text):
        (self.path / name).write_text(text)
        self.files.append(name)

    def manifest(self, status: str, error: str | None = None):
        doc = {"status": status, "files": list(self.files)}
        if error:
            doc["error"] = error
        (self.path / "manifest.json").write_text(
            json.dumps({"metadata": self.meta, **doc}, indent=2, sort_keys=True) + "\n"
        )


def _fmt(v) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(cfg: dict, run: RunDir) -> None:
    exp = build_experiment(cfg)
    model = exp.build_model()
    run.json("metadata.json", {"config": run.cfg, "experiment": _jsonable(exp.describe())})
    time_resolved = cfg.get("time_resolved", hasattr(model, "simulate_design"))
    if time_resolved:
        _analyze_time_resolved(cfg, exp, model, run)
        return
    sample = run_algorithm2(exp, model=model)
    run.csv("indices.csv", sample.to_csv(run.header()))
    names = list(model.space.names) or [f"x{k + 1}" for k in range(sample.p)]
    m1, m2 = moments(sample, 1), moments(sample, 2)
    run.json("moments.json", {"variables": names, "first": m1.to_json(), "second": m2.to_json()})
    lines = ["variable,mean,variance,normalized_mean"]
    var = m2.values - m1.values**2
    for k, name in enumerate(names):
        lines.append(f"{name},{_fmt(m1.values[k])},{_fmt(var[k])},{_fmt(m1.values[k] / m1.values.sum())}")
    run.csv("means.csv", "\n".join(lines) + "\n")
    if sample.defined.sum() >= 30:
        summ = distribution_summary(sample, cfg["bins"], model if model.has_oracle else None,
                                    cfg["oracle_size"], cfg["seed"])
        run.json("histograms.json", {"variables": names, **summ})
    else:
        log.warning("fewer than 30 defined replicates: histograms skipped")
    expected = m1.values
    run.json("quality.json", {
        "evaluations": sample.meta["evaluations"],
        "expected_evaluations": exp.m * exp.n,
        "undefined": sample.meta["undefined"],
        "mean_terms": sample.meta["mean_terms"],
        "noise_coupling": sample.meta["noise_coupling"],
        "row_sums_max_deviation": float(np.max(np.abs(sample.valid().sum(axis=1) - 1.0)))
        if sample.defined.any() else None,
        "ranking": [names[k] for k in np.argsort(-expected)],
    })


def _analyze_time_resolved(cfg, exp, model, run: RunDir):
    res = run_time_resolved(exp, model=model)
    names = list(res.names)
    lines = ["time,replicate,omega_seed,variable,index"]
    for j, t in enumerate(res.times):
        for i in range(exp.m):
            val = res.values[j, i] if res.defined[j, i] else None
            for k, name in enumerate(names):
                cell = "undefined" if val is None else _fmt(val[k])
                lines.append(f"{t!r},{i},{int(res.omega_seeds[i])},{name},{cell}")
    run.csv("indices.csv", "\n".join(lines) + "\n")
    mean, var = res.mean(), res.variance()
    lines = ["time,variable,mean,variance,defined"]
    for j, t in enumerate(res.times):
        for k, name in enumerate(names):
            mu = "" if np.isnan(mean[j, k]) else _fmt(mean[j, k])
            vv = "" if np.isnan(var[j, k]) else _fmt(var[j, k])
            lines.append(f"{t!r},{name},{mu},{vv},{int(res.defined[j].sum())}")
    run.csv("means.csv", "\n".join(lines) + "\n")
    run.json("histograms.json", {
        "variables": names,
        "times": res.times.tolist(),
        "bins": cfg["bins"],
        "tensor": res.histogram_tensor(cfg["bins"]).tolist(),
    })
    run.json("quality.json", {
        "evaluations": res.meta["evaluations"],
        "expected_evaluations": exp.m * exp.n,
        "undefined_per_time": res.meta["undefined_per_time"],
        "noise_coupling": res.meta["noise_coupling"],
        "reuse_design": exp.reuse_design,
    })


def cmd_convergence(cfg: dict, run: RunDir) -> None:
    model = get_model(cfg["model"], **model_params(cfg))
    if not model.has_oracle:
        raise ConfigError(f"model {cfg['model']!r} has no analytic oracle; convergence needs one")
    template = build_experiment(cfg, n=cfg["n_values"][0])
    table = convergence_study(template, cfg["n_values"], cfg["replicates"])
    run.csv("convergence.csv", table.to_csv(run.header()))
    diffs = np.diff(table.mean_error)
    run.json("metadata.json", {
        "config": run.cfg,
        "rate": table.rate,
        "inversions": int(np.sum(diffs >= 0)),
        "exact_expected_indices": table.exact.tolist(),
    })


def cmd_oracle(cfg: dict, run: RunDir) -> None:
    from . import models

    name = cfg["model"]
    model = get_model(name, **model_params(cfg))
    if not model.has_oracle:
        raise ConfigError(f"model {name!r} has no analytic oracle")
    if name == "toy":
        grid = cfg.get("L_grid", [cfg.get("L", 1.0)])
        s = models.toy_expected_sigma_index(np.asarray(grid))
        cols = ["L", "expected_S_mu", "expected_S_sigma"]
        mc = None
        if cfg["mc"]:
            w = RngStream(cfg["seed"]).substream(ORACLE).generator().standard_normal(cfg["mc"])
            mc = [float(np.mean((L * w) ** 2 / (1.0 + (L * w) ** 2))) for L in grid]
            cols.append("mc_S_sigma")
        lines = [",".join(cols)]
        for a, L in enumerate(np.atleast_1d(grid)):
            row = [_fmt(L), _fmt(1.0 - np.atleast_1d(s)[a]), _fmt(np.atleast_1d(s)[a])]
            if mc is not None:
                row.append(_fmt(mc[a]))
            lines.append(",".join(row))
        run.csv("oracle.csv", "\n".join(lines) + "\n")
    else:
        ev = np.asarray(model.expected_indices(cfg["nodes"]))
        names = list(model.space.names)
        lines = ["variable,expected_index,normalized"]
        for k, nm in enumerate(names):
            lines.append(f"{nm},{_fmt(ev[k])},{_fmt(ev[k] / ev.sum())}")
        run.csv("oracle.csv", "\n".join(lines) + "\n")
        run.json("oracle.json", {"variables": names, "nodes": cfg["nodes"], "expected": ev.tolist(),
                                 "sum": float(ev.sum())})
    if cfg["samples"]:
        draws = model.oracle_sample(RngStream(cfg["seed"]).substream(ORACLE), cfg["samples"])
        names = list(model.space.names)
        lines = [",".join(f"S_{nm}" for nm in names)]
        lines += [",".join(_fmt(v) for v in row) for row in draws]
        run.csv("oracle_samples.csv", "\n".join(lines) + "\n")


def cmd_validate(args) -> int:
    from .validate import run_checks

    results = run_checks(quick=not args.full)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_RUNTIME


def _jsonable(d):
    if isinstance(d, dict):
        return {k: _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_jsonable(v) for v in d]
    if isinstance(d, np.generic):
        return d.item()
    return d


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override its entries")
    p.add_argument("--model")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("--L", type=float, help="toy model: width of the sigma range")
    p.add_argument("--deterministic", action="store_const", const=True,
                   help="g-function with coefficients frozen at their expectations")


def _add_experiment(p):
    p.add_argument("--m", type=int, help="noise replicates")
    p.add_argument("--surrogate", choices=["mars", "pce"])
    p.add_argument("--pce-order", type=int, dest="pce_order")
    p.add_argument("--pce-tau", type=float, dest="pce_tau")
    p.add_argument("--max-terms", type=int, dest="max_terms")
    p.add_argument("--threshold", type=float)
    p.add_argument("--penalty", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochsobol", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"stochsobol {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="sample the index distribution of a model")
    _add_common(p)
    _add_experiment(p)
    p.add_argument("--n", type=int, help="surrogate design size")
    p.add_argument("--bins", type=int)
    p.add_argument("--oracle-size", type=int, dest="oracle_size")
    p.add_argument("--time-resolved", action="store_const", const=True, dest="time_resolved")
    p.add_argument("--t-final", type=float, dest="t_final")
    p.add_argument("--dt", type=float)
    p.add_argument("--reuse-design", action="store_const", const=True, dest="reuse_design")

    p = sub.add_parser("convergence", help="error of the expected indices versus n")
    _add_common(p)
    _add_experiment(p)
    p.add_argument("--n-values", dest="n_values", help="comma-separated design sizes")
    p.add_argument("--replicates", type=int)
    p.add_argument("--quick", action="store_true", help="50 replicates")

    p = sub.add_parser("oracle", help="exact index expectations and samples")
    _add_common(p)
    p.add_argument("--L-grid", dest="L_grid", help="a:b:k grid of L values (toy)")
    p.add_argument("--nodes", type=int, help="quadrature nodes (g-function)")
    p.add_argument("--samples", type=int, help="also write this many exact index draws")
    p.add_argument("--mc", type=int, help="toy: Monte Carlo check with this many draws")

    p = sub.add_parser("validate", help="run the invariant checks")
    p.add_argument("--full", action="store_true", help="larger sample sizes")
    return ap


_SKIP = {"command", "config", "verbose", "quick", "full"}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate":
        return cmd_validate(args)
    overrides = {k: v for k, v in vars(args).items() if k not in _SKIP}
    try:
        if overrides.get("L_grid") is not None:
            overrides["L_grid"] = parse_grid(overrides["L_grid"])
        if overrides.get("n_values") is not None:
            overrides["n_values"] = parse_int_list(overrides["n_values"])
        if getattr(args, "quick", False) and overrides.get("replicates") is None:
            overrides["replicates"] = 50
        cfg = resolve_config(args.command, args.config, overrides)
    except ConfigError as exc:
        print(f"stochsobol: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = RunDir(cfg["out"], args.command, cfg)
    handler = {"analyze": cmd_analyze, "convergence": cmd_convergence, "oracle": cmd_oracle}[args.command]
    try:
        handler(cfg, run)
    except ConfigError as exc:
        print(f"stochsobol: {exc}", file=sys.stderr)
        run.manifest("config-error", str(exc))
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure: keep what was written
        log.exception("run failed")
        run.manifest("failed", f"{type(exc).__name__}: {exc}")
        print(f"stochsobol: run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    run.manifest("ok")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
