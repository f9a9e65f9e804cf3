"""``koopman`` command-line front end.

Every command reads one JSON experiment config, applies flag overrides and
writes CSV/JSON artifacts tagged with the SHA-256 of the effective config.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import sys
import warnings
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from .dataset import NoiseSpec, ObservableSet, Trajectory, add_noise, build_subspace_data, build_training_data, read_trajectory_csv
from .dynamics import pde_initial, simulate, system_from_dict
from .evaluation import GridSpec, MethodSpec, MonteCarloConfig, Scenario, SweepSpec, lambda_sweep, monte_carlo
from .kernels import kernel_from_dict
from .operator import METHODS, eigenvalues, fit, load_estimate, predict_observables, reconstruct_state_linear, save_estimate

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class ConfigError(Exception):
    pass


_POINTS = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 1}, "minItems": 1}
_ANCHORS = {
    "type": "object",
    "oneOf": [
        {"required": ["anchors"], "properties": {"anchors": _POINTS}},
        {
            "required": ["lattice"],
            "properties": {
                "lattice": {
                    "type": "object",
                    "required": ["origin", "step", "lo", "hi"],
                    "properties": {
                        "origin": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                        "step": {"type": "number", "exclusiveMinimum": 0},
                        "lo": {"type": "integer"},
                        "hi": {"type": "integer"},
                    },
                }
            },
        },
        {
            "required": ["random"],
            "properties": {
                "random": {
                    "type": "object",
                    "required": ["n"],
                    "properties": {"n": {"type": "integer", "minimum": 1}, "seed": {"type": "integer", "minimum": 0}},
                }
            },
        },
    ],
}
_METHOD = {
    "type": "object",
    "required": ["name"],
    "properties": {
        "name": {"enum": list(METHODS)},
        "lambda": {"type": "number", "minimum": 0},
        "rho": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
        "rank": {"type": ["integer", "null"], "minimum": 0},
        "loss_scale": {"type": "number", "exclusiveMinimum": 0},
    },
}
CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["system", "kernel", "trajectories", "observables"],
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "system": {"type": "object", "required": ["system"]},
        "kernel": {"type": "object", "required": ["kind"]},
        "trajectories": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "oneOf": [
                    {"required": ["x0", "n"]},
                    {"required": ["profile", "n"]},
                    {"required": ["file"]},
                ],
                "properties": {
                    "x0": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                    "profile": {"enum": ["sin_pi", "one_minus_exp"]},
                    "n": {"type": "integer", "minimum": 1},
                    "file": {"type": "string"},
                },
            },
        },
        "observables": _ANCHORS,
        "test_observables": _ANCHORS,
        "formulation": {"enum": ["subspace", "base"]},
        "noise": {
            "type": "object",
            "required": ["snr_db"],
            "properties": {"snr_db": {"type": ["number", "string"]}, "seed": {"type": "integer", "minimum": 0}},
        },
        "method": _METHOD,
        "evaluation": {
            "type": "object",
            "properties": {
                "grid": {
                    "type": "object",
                    "required": ["lower", "upper", "spacing"],
                    "properties": {k: {"type": "array", "items": {"type": "number"}} for k in ("lower", "upper", "spacing")},
                },
                "sweep": {
                    "type": "object",
                    "required": ["lambdas"],
                    "properties": {
                        "lambdas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                        "families": {"type": "array", "items": {"enum": ["operator", "frobenius", "nuclear"]}},
                        "top_k": {"type": "integer", "minimum": 1},
                    },
                },
                "mc": {
                    "type": "object",
                    "required": ["snr_db", "realizations", "methods"],
                    "properties": {
                        "snr_db": {"type": "array", "items": {"type": ["number", "string"]}, "minItems": 1},
                        "realizations": {"type": "integer", "minimum": 1},
                        "full_realizations": {"type": "integer", "minimum": 1},
                        "methods": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "object",
                                "required": ["name", "method"],
                                "properties": {"name": {"type": "string"}, "method": {"enum": list(METHODS)}},
                            },
                        },
                    },
                },
                "predict": {
                    "type": "object",
                    "required": ["n"],
                    "properties": {
                        "n": {"type": "integer", "minimum": 0},
                        "x0": {"type": "array", "items": {"type": "number"}},
                        "profile": {"enum": ["sin_pi", "one_minus_exp"]},
                        "reconstruct": {"type": "boolean"},
                    },
                },
            },
        },
        "output_dir": {"type": "string"},
    },
}


# ---------------------------------------------------------------- config plumbing


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def bundled_config(name: str) -> Path:
    return Path(str(resources.files("rkhs_koopman") / "configs" / f"{name}.json"))


def load_config(path: str) -> tuple[dict, Path]:
    p = Path(path)
    if not p.exists() and not p.suffix:
        candidate = bundled_config(path)
        if candidate.exists():
            p = candidate
    try:
        with open(p) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{p}: {exc.message} at {'/'.join(map(str, exc.absolute_path))}") from exc
    return cfg, p.resolve().parent


def _snr(v) -> float:
    if isinstance(v, str):
        if v.lower() in ("inf", "+inf", "none"):
            return math.inf
        raise ConfigError(f"bad snr_db {v!r}")
    return float(v)


def _anchors(spec: dict, dim: int) -> np.ndarray:
    if "anchors" in spec:
        return np.array(spec["anchors"], dtype=float)
    if "lattice" in spec:
        L = spec["lattice"]
        idx = range(L["lo"], L["hi"] + 1)
        return np.array([(L["origin"][0] + L["step"] * i, L["origin"][1] + L["step"] * j) for i in idx for j in idx])
    R = spec["random"]
    return np.random.default_rng(R.get("seed", 0)).standard_normal((R["n"], dim))


class Experiment:
    """Resolved objects of one config."""

    def __init__(self, cfg: dict, base_dir: Path):
        self.cfg = cfg
        self.base_dir = base_dir
        try:
            self.system = system_from_dict(cfg["system"])
            self.kernel = kernel_from_dict(cfg["kernel"])
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        self.dim = self.system.dim
        self.obs_anchors = _anchors(cfg["observables"], self.dim)
        self.test_anchors = _anchors(cfg["test_observables"], self.dim) if "test_observables" in cfg else self.obs_anchors
        if self.obs_anchors.shape[1] != self.dim:
            raise ConfigError(f"observable anchors have dimension {self.obs_anchors.shape[1]}, system has {self.dim}")
        self.method = dict(cfg.get("method", {"name": "frobenius", "lambda": 1e-6}))
        self.evaluation = cfg.get("evaluation", {})

    @property
    def observables(self) -> ObservableSet:
        return ObservableSet(self.kernel, self.obs_anchors)

    def _initial(self, t: dict) -> np.ndarray:
        if "profile" in t:
            return pde_initial(t["profile"], self.dim)
        x0 = np.array(t["x0"], dtype=float)
        if x0.size != self.dim:
            raise ConfigError(f"x0 has dimension {x0.size}, system has {self.dim}")
        return x0

    def trajectories(self) -> list[Trajectory]:
        out = []
        for t in self.cfg["trajectories"]:
            if "file" in t:
                path = self.base_dir / t["file"]
                try:
                    out.append(read_trajectory_csv(path))
                except (ValueError, IndexError) as exc:
                    raise ConfigError(f"{path}: {exc}") from exc
                continue
            x0 = self._initial(t)
            if hasattr(self.system, "matrix"):
                F = self.system.matrix()
                X = np.empty((t["n"] + 1, x0.size))
                X[0] = x0
                for k in range(t["n"]):
                    X[k + 1] = F @ X[k]
                out.append(Trajectory(X))
            else:
                out.append(simulate(self.system, x0, t["n"]))
        return out

    def training_data(self):
        trajs = self.trajectories()
        noise = self.cfg.get("noise")
        if noise is not None:
            snr = _snr(noise["snr_db"])
            trajs = [add_noise(t, NoiseSpec(snr, noise.get("seed", 0) + i)) for i, t in enumerate(trajs)]
        if self.cfg.get("formulation", "subspace") == "base":
            return build_training_data(self.kernel, trajs, self.observables)
        return build_subspace_data(self.kernel, trajs, self.observables, self.obs_anchors)

    def learn(self):
        m = self.method
        data = self.training_data()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return fit(data, m["name"], m.get("lambda", 1e-6), rho=m.get("rho"), rank=m.get("rank"), loss_scale=m.get("loss_scale", 1.0))

    def scenario(self) -> Scenario:
        grid = self.evaluation.get("grid")
        if grid is None:
            raise ConfigError("config has no evaluation.grid")
        xs = [tuple(t["x0"]) for t in self.cfg["trajectories"] if "x0" in t]
        ns = [t["n"] for t in self.cfg["trajectories"] if "x0" in t]
        if len(xs) != len(self.cfg["trajectories"]):
            raise ConfigError("Monte Carlo runs need simulated (x0, n) trajectories")
        return Scenario(
            self.cfg.get("name", "experiment"),
            self.system,
            self.kernel,
            tuple(xs),
            tuple(ns),
            self.obs_anchors,
            self.test_anchors,
            GridSpec(tuple(grid["lower"]), tuple(grid["upper"]), tuple(grid["spacing"])),
        )


# ---------------------------------------------------------------- writers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        r = repr(float(v))
        return r[:-2] if r.endswith(".0") else r
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence], chash: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash: {chash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_json(path: Path, obj: dict, chash: str) -> None:
    obj = dict(obj)
    obj["config_hash"] = chash
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o).__name__)


# ---------------------------------------------------------------- commands


def cmd_simulate(exp: Experiment, out: Path, chash: str) -> None:
    for i, tr in enumerate(exp.trajectories()):
        write_csv(out / f"trajectory_{i}.csv", [f"x{j + 1}" for j in range(tr.dim)], tr.states, chash)


def cmd_learn(exp: Experiment, out: Path, chash: str) -> None:
    est, res = exp.learn()
    save_estimate(est, out / "estimate.json", {"config_hash": chash, "method": exp.method})
    write_json(out / "diagnostics.json", res.diagnostics_json() | {"method": exp.method["name"]}, chash)


def _estimate(exp: Experiment, path: str | None):
    if path:
        return load_estimate(path)
    return exp.learn()[0]


def cmd_eigs(exp: Experiment, out: Path, chash: str, estimate: str | None) -> None:
    ev = eigenvalues(_estimate(exp, estimate))
    write_csv(out / "eigs.csv", ["re", "im", "abs"], [(e.real, e.imag, abs(e)) for e in ev], chash)


def cmd_predict(exp: Experiment, out: Path, chash: str, estimate: str | None) -> None:
    spec = exp.evaluation.get("predict")
    if spec is None:
        raise ConfigError("config has no evaluation.predict")
    est = _estimate(exp, estimate)
    x0 = exp._initial(spec) if ("profile" in spec or "x0" in spec) else exp.trajectories()[0].states[0]
    try:
        phi = predict_observables(est, x0, spec["n"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_csv(out / "predictions.csv", ["step"] + [f"g{l + 1}" for l in range(phi.shape[1])], [[m, *row] for m, row in enumerate(phi)], chash)
    if spec.get("reconstruct"):
        X = reconstruct_state_linear(exp.observables, phi)
        write_csv(out / "states.csv", [f"x{j + 1}" for j in range(X.shape[1])], X, chash)


def cmd_sweep(exp: Experiment, out: Path, chash: str) -> None:
    sw = exp.evaluation.get("sweep")
    if sw is None:
        raise ConfigError("config has no evaluation.sweep")
    spec = SweepSpec(tuple(sw["lambdas"]), tuple(sw.get("families", ("operator", "frobenius", "nuclear"))), sw.get("top_k", 3))
    rows = lambda_sweep(exp.training_data(), spec)
    header = ["lambda", "family"] + [f"gamma{i + 1}" for i in range(spec.top_k)] + ["rank", "norm_op", "norm_fro", "norm_nuc"]
    write_csv(out / "sweep.csv", header, [[r.get(h, "") for h in header] for r in rows], chash)


def cmd_mc(exp: Experiment, out: Path, chash: str, full: bool, seed: int) -> None:
    mc = exp.evaluation.get("mc")
    if mc is None:
        raise ConfigError("config has no evaluation.mc")
    methods = tuple(
        MethodSpec(m["name"], m["method"], float(m.get("lambda", 0.0)), m.get("rho"), m.get("rank")) for m in mc["methods"]
    )
    n = mc.get("full_realizations", mc["realizations"]) if full else mc["realizations"]
    cfg = MonteCarloConfig(tuple(_snr(s) for s in mc["snr_db"]), n, seed, methods)
    result = monte_carlo(cfg, exp.scenario())
    rows = [(r["method"], r["snr_db"], r["seed"], r["mse"]) for r in result["rows"]]
    write_csv(out / "mc.csv", ["method", "snr_db", "seed", "mse"], rows, chash)
    write_json(out / "mc_summary.json", {"summary": result["summary"], "failures": result["failures"], "realizations": n}, chash)


COMMANDS = ("simulate", "learn", "eigs", "predict", "sweep", "mc")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="koopman", description="Learn Koopman operators in an RKHS from trajectory data.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="config JSON path or bundled name (example1..example4)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--full", action="store_true", help="full-size Monte Carlo runs (120 or 450 realizations)")
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--method", default=None, choices=METHODS)
        if name in ("eigs", "predict"):
            p.add_argument("--estimate", default=None, help="estimate JSON written by 'learn'")
    return ap


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
        if "noise" in cfg:
            cfg["noise"]["seed"] = args.seed
    if args.method is not None or args.lam is not None:
        m = cfg.setdefault("method", {"name": "frobenius"})
        if args.method is not None:
            m["name"] = args.method
        if args.lam is not None:
            m["lambda"] = args.lam
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(exc.message) from exc
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, base_dir = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        chash = config_hash(cfg)
        out = Path(args.out or cfg.get("output_dir") or f"out/{cfg.get('name', 'experiment')}")
        out.mkdir(parents=True, exist_ok=True)
        exp = Experiment(cfg, base_dir)
        if args.command == "simulate":
            cmd_simulate(exp, out, chash)
        elif args.command == "learn":
            cmd_learn(exp, out, chash)
        elif args.command == "eigs":
            cmd_eigs(exp, out, chash, args.estimate)
        elif args.command == "predict":
            cmd_predict(exp, out, chash, args.estimate)
        elif args.command == "sweep":
            cmd_sweep(exp, out, chash)
        elif args.command == "mc":
            cmd_mc(exp, out, chash, args.full, cfg.get("seed", 0))
    except (ConfigError, ValueError) as exc:
        print(f"koopman: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"koopman: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
