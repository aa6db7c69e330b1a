"""Command-line entry point: ``dkpca <command> [options]``.

Every command validates its JSON config before computing, writes its outputs
plus ``manifest.json`` into ``--out`` and exits with 0 on success, 2 on a
validation error and 3 on a numerical failure. Outputs written by a failing
command are removed.
"""
from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__, _core
from . import analysis, dataio, downstream, generative
from .core import ArchitectureSpec, TrainConfig, analytic_two_level_linear
from .errors import ConditionViolatedError, DKPCAError, InvalidArgumentError, NumericalFailure
from .kernels import kernel_from_dict, kernel_matrix

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

# ---------------------------------------------------------------------------
# schemas

_KERNEL = {
    "oneOf": [
        {"type": "object", "properties": {"type": {"const": "linear"}}, "required": ["type"], "additionalProperties": False},
        {
            "type": "object",
            "properties": {"type": {"const": "rbf"}, "sigma2": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["type", "sigma2"],
            "additionalProperties": False,
        },
    ]
}

_DATA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"path": {"type": "string"}, "header": {"type": "boolean"}},
            "required": ["path"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "synth": {
                    "type": "object",
                    "properties": {
                        "kind": {"enum": ["square", "complex", "gaussian"]},
                        "n": {"type": "integer", "minimum": 1},
                        "d": {"type": "integer", "minimum": 1},
                        "seed": {"type": "integer", "minimum": 0},
                        "noise_std": {"type": "number", "minimum": 0},
                    },
                    "required": ["kind", "n"],
                    "additionalProperties": False,
                }
            },
            "required": ["synth"],
            "additionalProperties": False,
        },
    ]
}

_LEVEL = {
    "type": "object",
    "properties": {"kernel": _KERNEL, "s": {"type": "integer", "minimum": 1}, "eta": {"type": "number", "not": {"const": 0}}},
    "required": ["kernel", "s"],
    "additionalProperties": False,
}

_TRAIN = {
    "type": "object",
    "properties": {
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "max_iters": {"type": "integer", "minimum": 1},
        "alpha0": {"type": "number", "exclusiveMinimum": 0},
        "shrink": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "armijo_c": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "init": {"enum": ["shallow_warm_start", "random_orthonormal"]},
    },
    "additionalProperties": False,
}

_SEED = {"type": "integer", "minimum": 0}

FIT_SCHEMA = {
    "type": "object",
    "properties": {
        "data": _DATA,
        "levels": {"type": "array", "items": _LEVEL, "minItems": 1},
        "train": _TRAIN,
        "center": {"type": "boolean"},
        "seed": _SEED,
    },
    "required": ["data", "levels"],
    "additionalProperties": False,
}

_SIZE = {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "N"}]}

BOUNDS_SCHEMA = {
    "type": "object",
    "properties": {
        "data": _DATA,
        "kernel": _KERNEL,
        "center": {"type": "boolean"},
        "eta1": {"type": "number", "not": {"const": 0}},
        "eta2": {"type": "array", "items": {"type": "number", "not": {"const": 0}}, "minItems": 1},
        "s1": {"type": "array", "items": _SIZE, "minItems": 1},
        "s2": {"type": "array", "items": _SIZE, "minItems": 1},
        "seed": _SEED,
    },
    "required": ["data", "eta2"],
    "additionalProperties": False,
}

LEMMA2_SCHEMA = {
    "type": "object",
    "properties": {
        "data": _DATA,
        "kernel": _KERNEL,
        "center": {"type": "boolean"},
        "eta2": {"type": "number", "not": {"const": 0}},
        "eta2_factor": {"type": "number", "exclusiveMinimum": 0},
        "seed": _SEED,
    },
    "required": ["data"],
    "additionalProperties": False,
}

TRAVERSE_SCHEMA = {
    "type": "object",
    "properties": {
        "level": {"type": "integer", "minimum": 1},
        "component": {"type": "integer", "minimum": 1},
        "grid": {
            "oneOf": [
                {"type": "array", "items": {"type": "number"}, "minItems": 1},
                {
                    "type": "object",
                    "properties": {
                        "start": {"type": "number"},
                        "stop": {"type": "number"},
                        "num": {"type": "integer", "minimum": 1},
                    },
                    "required": ["start", "stop", "num"],
                    "additionalProperties": False,
                },
            ]
        },
        "base_index": {"type": "integer", "minimum": 0},
        "base": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["level", "component", "grid"],
    "additionalProperties": False,
}

DOWNSTREAM_SCHEMA = {
    "type": "object",
    "properties": {
        "levels": {"type": "array", "items": _LEVEL, "minItems": 1},
        "train": _TRAIN,
        "center": {"type": "boolean"},
        "task": {"enum": ["regression", "binary_classification"]},
        "ridge": {"type": "number", "minimum": 0},
        "split": {
            "type": "object",
            "properties": {
                "train": {"type": "number"},
                "val": {"type": "number"},
                "test": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "seed": _SEED,
    },
    "required": ["levels"],
    "additionalProperties": False,
}


class ValidationFailure(Exception):
    pass


def _json_path(err) -> str:
    path = "$"
    for p in err.absolute_path:
        path += f"[{p}]" if isinstance(p, int) else f".{p}"
    return path


def validate(doc, schema) -> None:
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        msgs = [f"{_json_path(e)}: {e.message}" for e in errors]
        raise ValidationFailure("config validation failed:\n  " + "\n  ".join(msgs))


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationFailure(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationFailure(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------
# run bookkeeping


class Run:
    """Tracks outputs and timing of one command; writes the manifest."""

    def __init__(self, command, out, config=None, seed=None):
        self.command = command
        self.out = Path(out)
        self.created_dir = not self.out.exists()
        self.out.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.seed = seed
        self.outputs = []
        self.summary = {}
        self.t0 = time.perf_counter()

    def path(self, name) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def write_json(self, name, obj):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2)

    def write_rows(self, name, rows):
        analysis.write_rows_csv(self.path(name), rows)

    def finish(self):
        cfg = json.dumps(self.config, sort_keys=True) if self.config is not None else ""
        manifest = {
            "command": self.command,
            "config": self.config,
            "config_sha256": hashlib.sha256(cfg.encode()).hexdigest(),
            "seed": self.seed,
            "versions": {
                "dkpca": __version__,
                "backend": _core.BACKEND,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "wall_time_s": time.perf_counter() - self.t0,
            "outputs": [p.name for p in self.outputs],
            "summary": self.summary,
        }
        with open(self.out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)

    def cleanup(self):
        for p in self.outputs + [self.out / "manifest.json"]:
            if p.exists():
                p.unlink()
        if self.created_dir and self.out.exists() and not any(self.out.iterdir()):
            self.out.rmdir()


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DKPCA_THREADS", "1")))
    except ValueError:
        return 1


def _load_data(src, header_flag=None, seed_override=None):
    if "path" in src:
        header = src.get("header", False) if header_flag is None else header_flag
        return dataio.load_csv(src["path"], header=header)
    s = src["synth"]
    seed = s.get("seed", 0) if seed_override is None else seed_override
    kind, n = s["kind"], s["n"]
    if kind == "square":
        return dataio.gen_synth_square(n, s.get("noise_std", dataio.DEFAULT_NOISE_STD), seed)
    if kind == "complex":
        return dataio.gen_synth_complex(n, seed, s.get("noise_std", dataio.DEFAULT_NOISE_STD))
    return dataio.gen_synth_gaussian(n, s.get("d", 140), seed)


def _centered(X, center):
    return X - X.mean(axis=0) if center else X


def _train_config(cfg, seed):
    return TrainConfig(seed=seed, **cfg.get("train", {}))


def _arch(cfg):
    return ArchitectureSpec.from_dict({"levels": cfg["levels"]})


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, run):
    n, seed = args.n, args.seed if args.seed is not None else 0
    if args.kind == "square":
        X = dataio.gen_synth_square(n, args.noise_std, seed)
    elif args.kind == "complex":
        X = dataio.gen_synth_complex(n, seed, args.noise_std)
    else:
        X = dataio.gen_synth_gaussian(n, args.d, seed)
    run.config = {"kind": args.kind, "n": n, "d": args.d, "noise_std": args.noise_std}
    run.seed = seed
    dataio.save_csv(run.path("data.csv"), X)
    run.summary = {"shape": list(X.shape)}


def cmd_fit(args, run):
    cfg = _read_json(args.config)
    validate(cfg, FIT_SCHEMA)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    run.config, run.seed = cfg, seed
    X = _load_data(cfg["data"], args.header, args.seed)
    arch = _arch(cfg)
    model, report = generative.fit_model(arch, X, _train_config(cfg, seed), center=cfg.get("center", False))
    run.write_json("model.json", generative.model_to_dict(model, report))
    run.write_json("fit_report.json", report.to_dict())
    run.summary = {
        "converged": report.converged,
        "iterations": report.iterations,
        "objective": report.objective_trace[-1],
        "max_orthonormality_error": report.max_orthonormality_error,
    }


def _load_model(path):
    doc = _read_json(path)
    try:
        return generative.model_from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise ValidationFailure(f"{path}: malformed model document ({exc})") from None


def cmd_variance(args, run):
    model, _ = _load_model(args.model)
    run.config = {"model": str(args.model)}
    X = _centered(model.train_data, model.mean is not None)
    K1 = kernel_matrix(model.arch.levels[0].kernel, X)
    reports = []
    for j in range(1, model.n_levels + 1):
        rep = analysis.level_variance(model.arch, model.state, K1, j)
        run.write_rows(f"variance_level{j}.csv", rep.rows())
        reports.append(rep.to_dict())
    shallow = analysis.shallow_variance(K1, model.arch.levels[0].s)
    run.write_rows("variance_shallow.csv", shallow.rows())
    run.write_json("variance.json", {"levels": reports, "shallow": shallow.to_dict()})
    run.summary = {"clamped": [r["clamped"] for r in reports]}


def _resolve(v, N):
    return N if v == "N" else int(v)


def cmd_bounds(args, run):
    cfg = _read_json(args.config)
    validate(cfg, BOUNDS_SCHEMA)
    run.config, run.seed = cfg, cfg.get("seed")
    X = _centered(_load_data(cfg["data"], args.header, args.seed), cfg.get("center", False))
    kernel = kernel_from_dict(cfg.get("kernel", {"type": "linear"}))
    eta1 = cfg.get("eta1", 1.0)
    K1 = kernel_matrix(kernel, X)
    N = K1.shape[0]
    points = [
        (e, _resolve(a, N), _resolve(b, N))
        for e, a, b in itertools.product(cfg["eta2"], cfg.get("s1", ["N"]), cfg.get("s2", ["N"]))
    ]
    for e, a, b in points:
        if not 1 <= b <= a <= N:
            raise InvalidArgumentError(f"need 1 <= s2 <= s1 <= N, got s1={a}, s2={b}")

    def one(p):
        e, a, b = p
        st = analytic_two_level_linear(K1, a, b, eta1, e)
        rep = analysis.bounds_lemma1(K1, st, e, a, b, eta1)
        return {"eta2": e, "s1": a, "s2": b, "lower": rep.lower, "actual": rep.actual, "upper": rep.upper,
                "r1": rep.r1, "holds": rep.holds}

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        rows = list(ex.map(one, points))
    run.write_rows("bounds.csv", rows)
    run.summary = {"all_hold": all(r["holds"] for r in rows), "points": len(rows)}


def cmd_lemma2(args, run):
    cfg = _read_json(args.config)
    validate(cfg, LEMMA2_SCHEMA)
    run.config, run.seed = cfg, cfg.get("seed")
    X = _centered(_load_data(cfg["data"], args.header, args.seed), cfg.get("center", False))
    K1 = kernel_matrix(kernel_from_dict(cfg.get("kernel", {"type": "linear"})), X)
    eta2 = cfg["eta2"] if "eta2" in cfg else analysis.lemma2_eta2(K1, cfg.get("eta2_factor", 1.01))
    rows = analysis.lemma2_table(K1, eta2)
    run.write_rows("lemma2.csv", rows)
    run.summary = {"eta2": eta2, "holds_all": all(r["holds"] for r in rows)}


def _data_arg(args, model):
    if args.data is None:
        return None
    X = dataio.load_csv(args.data, header=bool(args.header))
    if X.shape[1] != model.d:
        raise InvalidArgumentError(f"data has {X.shape[1]} columns, model expects {model.d}")
    return X


def cmd_reconstruct(args, run):
    model, _ = _load_model(args.model)
    run.config = {"model": str(args.model), "data": None if args.data is None else str(args.data)}
    X = _data_arg(args, model)
    if X is None:
        top = model.state.H[-1]
        mse = generative.reconstruction_error(model, training=True)
    else:
        top = generative.encode_many(model, X)[-1]
        mse = generative.reconstruction_error(model, X)
    Xh = np.vstack([generative.reconstruct(model, t) for t in top])
    dataio.save_csv(run.path("reconstruction.csv"), Xh)
    run.write_json("metrics.json", {"mse": mse, "training": X is None})
    run.summary = {"mse": mse}


def cmd_traverse(args, run):
    model, _ = _load_model(args.model)
    cfg = _read_json(args.config)
    validate(cfg, TRAVERSE_SCHEMA)
    run.config = cfg
    grid = cfg["grid"]
    if isinstance(grid, dict):
        grid = np.linspace(grid["start"], grid["stop"], grid["num"])
    spec = generative.TraversalSpec(cfg["level"], cfg["component"], grid, cfg.get("base"), cfg.get("base_index", 0))
    samples = generative.traverse(model, spec)
    generative.write_traversal(run.path("traversal.csv"), run.path("traversal_manifest.json"), samples, spec)
    run.summary = {"samples": int(samples.shape[0])}


def cmd_oos(args, run):
    model, _ = _load_model(args.model)
    run.config = {"model": str(args.model), "data": str(args.data)}
    X = _data_arg(args, model)
    latents = generative.encode_many(model, X)
    for j, L in enumerate(latents, start=1):
        dataio.save_csv(run.path(f"latents_level{j}.csv"), L)
    run.summary = {"rows": int(X.shape[0]), "method": "closed_form" if model.closed_form_available() else "smoother"}


def cmd_downstream(args, run):
    cfg = _read_json(args.config)
    validate(cfg, DOWNSTREAM_SCHEMA)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    run.config, run.seed = cfg, seed
    X, y = dataio.load_csv_with_target(args.data, args.target_col, header=bool(args.header))
    sp = cfg.get("split", {})
    split_spec = dataio.SplitSpec(sp.get("train", 0.6), sp.get("val", 0.2), sp.get("test", 0.2), seed)
    tr, va, te = dataio.split_indices(X.shape[0], split_spec)
    pspec = downstream.PredictorSpec(cfg.get("task", "binary_classification"), cfg.get("ridge", 1e-6))
    model, report = generative.fit_model(_arch(cfg), X[tr], _train_config(cfg, seed), center=cfg.get("center", False))
    Ftr = downstream.extract_features(model, is_training=True)
    out = {}
    for name, idx in (("val", va), ("test", te)):
        pred = downstream.fit_predict(Ftr, y[tr], downstream.extract_features(model, X[idx]), pspec)
        out[name] = downstream.metrics(pred, y[idx], pspec.task)
    run.write_json("metrics.json", out)
    run.summary = {**out, "converged": report.converged}


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dkpca", description="Deep kernel PCA toolkit")
    p.add_argument("--version", action="version", version=f"dkpca {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=False, model=False, data=False):
        sp.add_argument("--out", required=True, type=Path, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--header", action=argparse.BooleanOptionalAction, default=None,
                        help="CSV inputs have a header row")
        if config:
            sp.add_argument("--config", required=True, type=Path)
        if model:
            sp.add_argument("--model", required=True, type=Path, help="model.json written by fit")
        if data:
            sp.add_argument("--data", type=Path, default=None, help="CSV of inputs")
        return sp

    s = common(sub.add_parser("synth", help="generate a synthetic dataset"))
    s.add_argument("--kind", choices=["square", "complex", "gaussian"], required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--d", type=int, default=140, help="dimension (gaussian only)")
    s.add_argument("--noise-std", type=float, default=dataio.DEFAULT_NOISE_STD)
    s.set_defaults(func=cmd_synth)

    common(sub.add_parser("fit", help="train a model"), config=True).set_defaults(func=cmd_fit)
    common(sub.add_parser("variance", help="explained-variance report"), model=True).set_defaults(func=cmd_variance)
    common(sub.add_parser("bounds", help="approximation-error bounds sweep"), config=True).set_defaults(func=cmd_bounds)
    common(sub.add_parser("lemma2", help="deep vs shallow explained variance"), config=True).set_defaults(func=cmd_lemma2)
    common(sub.add_parser("reconstruct", help="decode training or new data"), model=True, data=True).set_defaults(
        func=cmd_reconstruct
    )
    common(sub.add_parser("traverse", help="latent traversal"), config=True, model=True).set_defaults(func=cmd_traverse)
    s = common(sub.add_parser("oos", help="encode new data"), model=True)
    s.add_argument("--data", type=Path, required=True)
    s.set_defaults(func=cmd_oos)
    s = common(sub.add_parser("downstream", help="supervised evaluation of deep features"), config=True)
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--target-col", required=True, help="target column name or index")
    s.set_defaults(func=cmd_downstream)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_VALIDATION
    run = Run(args.command, args.out, seed=args.seed)
    try:
        args.func(args, run)
        run.finish()
        return EXIT_OK
    except (ValidationFailure, InvalidArgumentError, FileNotFoundError) as exc:
        run.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalFailure, ConditionViolatedError, np.linalg.LinAlgError, FloatingPointError) as exc:
        run.cleanup()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DKPCAError as exc:
        run.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
