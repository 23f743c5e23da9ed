"""Command-line front end.

Every verb resolves its parameters as: command-line flag, then the JSON
``--config`` file, then the built-in default.  The merged result is written
as a ``*.config.json`` snapshot next to the outputs.  Exit codes are 0 on
success, 1 on runtime failure and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .dsuno import MaskDictionary, build_dictionary, select_mask
from .errors import KsadaptError
from .io import read_container, write_container
from .masks import (
    evaluate_mask,
    make_acs,
    make_equispaced,
    make_vdrs,
    rb_icd_optimize,
    table1_preset,
    write_trace_csv,
)
from .metrics import report, write_metrics_csv
from .phantom import PhantomSpec, simulate_slice
from .recon import RECON_METHODS, Reconstructor, default_unrolled_params
from .types import CineSeries, CoilSensitivities, MultiCoilKSpace, RbIcdParams, SamplingMask

logger = logging.getLogger("ksadapt")

SWEEPS = ("s", "n_iter", "lambda", "K")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    doc = json.loads(Path(args.config).read_text())
    if not isinstance(doc, dict):
        raise UsageError("--config must hold a JSON object")
    return doc


def _resolve(args, config: dict, defaults: dict) -> dict:
    out = {}
    for key, default in defaults.items():
        val = getattr(args, key, None)
        if val is None:
            val = config.get(key, default)
        out[key] = val
    return out


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _json_arg(value):
    """Parse a JSON literal, or read it from a file path."""
    if value is None or isinstance(value, dict):
        return value or {}
    text = value
    if not value.lstrip().startswith("{") and Path(value).exists():
        text = Path(value).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid JSON parameters: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("parameters must be a JSON object")
    return doc


def _snapshot(path: Path, verb: str, cfg: dict) -> None:
    doc = {"verb": verb, "version": __version__, "config": cfg}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _snapshot_next_to(out: Path, verb: str, cfg: dict) -> None:
    _snapshot(out.with_name(out.stem + ".config.json"), verb, cfg)


def _read(path, kind):
    obj = read_container(path)
    if not isinstance(obj, kind):
        raise KsadaptError(f"{path}: expected {kind.__name__}, found {type(obj).__name__}")
    return obj


def _read_sens(path):
    return None if path is None else _read(path, CoilSensitivities)


def _make_recon(method, params) -> Reconstructor:
    if method not in RECON_METHODS:
        raise UsageError(f"unknown method {method!r}; valid methods: {', '.join(RECON_METHODS)}")
    params = dict(params)
    if method == "unrolled":
        params = {**default_unrolled_params(), **params}
    return Reconstructor(method, params)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("KSADAPT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# verbs


def cmd_gen_phantom(args, config):
    cfg = _resolve(args, config, {"spec": None, "out": None, "nx": None, "ny": None, "nt": None, "nc": None,
                                  "noise_sigma": None, "seed": None})
    _require(cfg, "out")
    spec = PhantomSpec.load(cfg["spec"]) if cfg["spec"] else PhantomSpec()
    overrides = {k: cfg[k] for k in ("nx", "ny", "nt", "nc", "noise_sigma", "seed") if cfg[k] is not None}
    spec = replace(spec, **overrides)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    x, s, y = simulate_slice(spec)
    write_container(x, out / "cine.ksd")
    write_container(s, out / "sens.ksd")
    write_container(y, out / "kspace.ksd")
    _snapshot(out / "config.json", "gen-phantom", {"out": str(out), "spec": spec.to_dict()})
    logger.info("wrote phantom %s to %s", x.shape, out)


def cmd_baseline_mask(args, config):
    cfg = _resolve(args, config, {"kind": None, "ny": None, "budget": None, "seed": 0, "acs_fraction": 1 / 3,
                                  "decay_p": 3.0, "out": None})
    _require(cfg, "kind", "ny", "budget", "out")
    kind = cfg["kind"]
    if kind == "equispaced":
        m = make_equispaced(int(cfg["ny"]), int(cfg["budget"]), cfg["acs_fraction"])
    elif kind == "vdrs":
        m = make_vdrs(int(cfg["ny"]), int(cfg["budget"]), cfg["acs_fraction"], cfg["decay_p"], int(cfg["seed"]))
    elif kind == "acs":
        m = make_acs(int(cfg["ny"]), int(cfg["budget"]))
    else:
        raise UsageError(f"unknown mask kind {kind!r}; valid: equispaced, vdrs, acs")
    out = Path(cfg["out"])
    m.save(out)
    _snapshot_next_to(out, "baseline-mask", cfg)


def _check_rb_flags(cfg) -> None:
    explicit = [k for k in ("budget", "acs", "subset_size", "n_iter") if cfg.get(k) is not None]
    if cfg.get("preset") and explicit:
        raise UsageError("--preset cannot be combined with " + ", ".join("--" + k.replace("_", "-") for k in explicit))
    if not cfg.get("preset") and cfg.get("subset_size") is None:
        raise UsageError("either --preset or --subset-size is required")


def _rb_params(cfg, init: SamplingMask) -> RbIcdParams:
    _check_rb_flags(cfg)
    n_cand = int(cfg["n_cand"]) if cfg.get("n_cand") is not None else 20
    seed = int(cfg["seed"] or 0)
    if cfg.get("preset"):
        p = table1_preset(cfg["preset"], n_cand=n_cand, seed=seed)
    else:
        p = RbIcdParams(
            budget=int(cfg["budget"]) if cfg.get("budget") is not None else init.budget,
            acs_count=int(cfg["acs"]) if cfg.get("acs") is not None else len(init.acs),
            subset_size=int(cfg["subset_size"]),
            n_iter=int(cfg["n_iter"]) if cfg.get("n_iter") is not None else 3,
            n_cand=n_cand,
            seed=seed,
        )
    if cfg.get("exhaustive"):
        p = replace(p, exhaustive=True)
    return p


_OPT_KEYS = {"data": None, "gt": None, "sens": None, "init": None, "recon": "zero_filled", "recon_params": None,
             "loss": "nmse", "preset": None, "budget": None, "acs": None, "subset_size": None, "n_iter": None,
             "n_cand": None, "seed": 0, "exhaustive": None}


def cmd_optimize_mask(args, config):
    cfg = _resolve(args, config, {**_OPT_KEYS, "out": None, "trace": None})
    _require(cfg, "data", "gt", "init", "out")
    _check_rb_flags(cfg)
    recon = _make_recon(cfg["recon"], _json_arg(cfg["recon_params"]))
    y = _read(cfg["data"], MultiCoilKSpace)
    x = _read(cfg["gt"], CineSeries)
    s = _read_sens(cfg["sens"])
    init = SamplingMask.load(cfg["init"])
    p = _rb_params(cfg, init)
    m, trace = rb_icd_optimize(y, x, init, recon, cfg["loss"], p, sens=s, threads=_threads(args))
    out = Path(cfg["out"])
    m.save(out, initial_loss=trace[0].loss, final_loss=trace[-1].current_loss)
    if cfg["trace"]:
        write_trace_csv(trace, cfg["trace"])
    _snapshot_next_to(out, "optimize-mask", {**cfg, "rb_icd": p.to_dict(), "recon_params": recon.params})


def cmd_build_dict(args, config):
    cfg = _resolve(args, config, {"slices": None, "acs": None, "out": None})
    _require(cfg, "slices", "acs", "out")
    manifest = Path(cfg["slices"])
    items = json.loads(manifest.read_text())
    if isinstance(items, dict):
        items = items.get("slices", [])
    if not items:
        raise KsadaptError(f"manifest {manifest} lists no slices")
    base = manifest.parent
    training = []
    for i, rec in enumerate(items):
        y = _read(base / rec["kspace"], MultiCoilKSpace)
        m = SamplingMask.load(base / rec["mask"])
        training.append((rec.get("slice_id", f"slice_{i:03d}"), y, m))
    d = build_dictionary(training, int(cfg["acs"]))
    out = Path(cfg["out"])
    d.save(out)
    _snapshot(out / "config.json", "build-dict", cfg)


def cmd_infer_mask(args, config):
    cfg = _resolve(args, config, {"test_frame": None, "dict": None, "out": None})
    _require(cfg, "test_frame", "dict", "out")
    y = _read(cfg["test_frame"], MultiCoilKSpace)
    d = MaskDictionary.load(cfg["dict"])
    m, sid, best = select_mask(y.frame(0), d)
    out = Path(cfg["out"])
    m.save(out, neighbor_slice_id=sid, best_d=best)
    _snapshot_next_to(out, "infer-mask", cfg)


def cmd_recon(args, config):
    cfg = _resolve(args, config, {"data": None, "mask": None, "sens": None, "method": None, "params": None,
                                  "out": None})
    _require(cfg, "data", "mask", "method", "out")
    recon = _make_recon(cfg["method"], _json_arg(cfg["params"]))
    y = _read(cfg["data"], MultiCoilKSpace)
    m = SamplingMask.load(cfg["mask"])
    s = _read_sens(cfg["sens"])
    yu = MultiCoilKSpace(y.data * m.as_array()[None, :, None, None])
    x = recon(yu, s, m)
    out = Path(cfg["out"])
    write_container(x, out)
    _snapshot_next_to(out, "recon", {**cfg, "params": recon.params})


def _parse_roi(roi):
    if roi is None or isinstance(roi, (list, tuple)):
        return roi
    try:
        vals = [int(v) for v in str(roi).split(",")]
    except ValueError:
        raise UsageError(f"--roi expects x0,x1,y0,y1, got {roi!r}") from None
    if len(vals) != 4:
        raise UsageError(f"--roi expects 4 integers, got {roi!r}")
    return vals


def cmd_eval(args, config):
    cfg = _resolve(args, config, {"recon": None, "gt": None, "roi": None, "csv": None, "slice_id": "",
                                  "mask_name": "", "recon_name": "", "accel": None, "mask": None})
    _require(cfg, "recon", "gt", "csv")
    x_hat = _read(cfg["recon"], CineSeries)
    x = _read(cfg["gt"], CineSeries)
    accel = cfg["accel"]
    if accel is None and cfg["mask"]:
        accel = SamplingMask.load(cfg["mask"]).acceleration
    rep = report(x, x_hat, _parse_roi(cfg["roi"]))
    out = Path(cfg["csv"])
    write_metrics_csv(out, [rep.row(cfg["slice_id"], cfg["mask_name"], cfg["recon_name"],
                                    "" if accel is None else accel)])
    _snapshot_next_to(out, "eval", cfg)


def _parse_values(values, sweep):
    if values is None:
        raise UsageError("--values is required")
    items = values if isinstance(values, list) else str(values).split(",")
    conv = float if sweep == "lambda" else int
    try:
        return [conv(v) for v in items]
    except ValueError:
        raise UsageError(f"bad --values for sweep {sweep}: {values!r}") from None


def cmd_ablate(args, config):
    cfg = _resolve(args, config, {**_OPT_KEYS, "sweep": None, "values": None, "mask": None, "out": None})
    _require(cfg, "sweep", "data", "gt", "out")
    sweep = cfg["sweep"]
    if sweep not in SWEEPS:
        raise UsageError(f"unknown sweep {sweep!r}; valid: {', '.join(SWEEPS)}")
    values = _parse_values(cfg["values"], sweep)
    y = _read(cfg["data"], MultiCoilKSpace)
    x = _read(cfg["gt"], CineSeries)
    s = _read_sens(cfg["sens"])
    rows = []
    if sweep in ("s", "n_iter"):
        _require(cfg, "init")
        if cfg.get("preset"):
            raise UsageError("ablate derives RB-ICD parameters from explicit flags; --preset is not accepted")
        recon = _make_recon(cfg["recon"], _json_arg(cfg["recon_params"]))
        init = SamplingMask.load(cfg["init"])
        for v in values:
            c = dict(cfg)
            c["subset_size"] = v if sweep == "s" else (cfg["subset_size"] or 1)
            if sweep == "n_iter":
                c["n_iter"] = v
            p = _rb_params(c, init)
            t0 = time.perf_counter()
            m, trace = rb_icd_optimize(y, x, init, recon, cfg["loss"], p, sens=s, threads=_threads(args))
            elapsed = time.perf_counter() - t0
            rows.append((v, evaluate_mask(m, y, x, recon, "nmse", s), elapsed))
    else:
        _require(cfg, "mask")
        m = SamplingMask.load(cfg["mask"])
        base = {**default_unrolled_params(), **_json_arg(cfg["recon_params"])}
        for v in values:
            params = {**base, ("lam" if sweep == "lambda" else "K"): v}
            recon = Reconstructor("unrolled", params)
            t0 = time.perf_counter()
            loss = evaluate_mask(m, y, x, recon, "nmse", s)
            elapsed = time.perf_counter() - t0
            rows.append((v, loss, elapsed))
    out = Path(cfg["out"])
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("value", "nmse", "runtime_s"))
        for v, loss, elapsed in rows:
            w.writerow((v, repr(loss), f"{elapsed:.6f}"))
    _snapshot_next_to(out, "ablate", cfg)


# ---------------------------------------------------------------------------
# parser


def _add_opt_flags(p):
    p.add_argument("--data", help="fully sampled k-space (KSD1)")
    p.add_argument("--gt", help="ground-truth cine (KSD1)")
    p.add_argument("--sens", help="coil sensitivities (KSD1)")
    p.add_argument("--init", help="initial mask JSON")
    p.add_argument("--recon", help="reconstruction method used inside the optimizer")
    p.add_argument("--recon-params", dest="recon_params", help="JSON object or file with method parameters")
    p.add_argument("--loss", choices=("nmse", "l2"))
    p.add_argument("--preset", choices=("4x", "8x", "12x"))
    p.add_argument("--budget", type=int)
    p.add_argument("--acs", type=int, help="number of fixed central lines")
    p.add_argument("--subset-size", dest="subset_size", type=int)
    p.add_argument("--n-iter", dest="n_iter", type=int)
    p.add_argument("--n-cand", dest="n_cand", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--exhaustive", action="store_const", const=True, default=None,
                   help="enumerate every relocation instead of sampling candidates")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ksadapt", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: $KSADAPT_THREADS or all cores)")
    parser.add_argument("--log-level", default="WARNING")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def verb(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file with option defaults")
        p.set_defaults(func=func)
        return p

    p = verb("gen-phantom", cmd_gen_phantom, "simulate a cine phantom, coil maps and k-space")
    p.add_argument("--spec", help="phantom spec JSON")
    p.add_argument("--out", help="output directory")
    for name in ("nx", "ny", "nt", "nc", "seed"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)

    p = verb("baseline-mask", cmd_baseline_mask, "generate an equispaced, VDRS or ACS-only mask")
    p.add_argument("--kind", choices=("equispaced", "vdrs", "acs"))
    p.add_argument("--ny", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--acs-fraction", dest="acs_fraction", type=float)
    p.add_argument("--decay-p", dest="decay_p", type=float)
    p.add_argument("--out")

    p = verb("optimize-mask", cmd_optimize_mask, "run RB-ICD mask optimization")
    _add_opt_flags(p)
    p.add_argument("--out", help="optimized mask JSON")
    p.add_argument("--trace", help="trace CSV")

    p = verb("build-dict", cmd_build_dict, "build a mask dictionary from optimized training slices")
    p.add_argument("--slices", help="manifest JSON: [{slice_id, kspace, mask}, ...]")
    p.add_argument("--acs", type=int, help="central lines used for low-frequency references")
    p.add_argument("--out", help="dictionary directory")

    p = verb("infer-mask", cmd_infer_mask, "select a mask for a test scan by nearest-neighbor search")
    p.add_argument("--test-frame", dest="test_frame", help="test k-space (KSD1); frame 0 is used")
    p.add_argument("--dict", help="dictionary directory")
    p.add_argument("--out", help="selected mask JSON")

    p = verb("recon", cmd_recon, "reconstruct undersampled k-space")
    p.add_argument("--data", help="k-space (KSD1); the mask is applied before reconstruction")
    p.add_argument("--mask")
    p.add_argument("--sens")
    p.add_argument("--method", help="one of: " + ", ".join(RECON_METHODS))
    p.add_argument("--params", help="JSON object or file with method parameters")
    p.add_argument("--out")

    p = verb("eval", cmd_eval, "score a reconstruction against ground truth")
    p.add_argument("--recon")
    p.add_argument("--gt")
    p.add_argument("--roi", help="x0,x1,y0,y1 (half-open)")
    p.add_argument("--csv")
    p.add_argument("--slice-id", dest="slice_id")
    p.add_argument("--mask-name", dest="mask_name")
    p.add_argument("--recon-name", dest="recon_name")
    p.add_argument("--accel", type=float)
    p.add_argument("--mask", help="mask JSON used to fill the accel column")

    p = verb("ablate", cmd_ablate, "sweep one RB-ICD or reconstruction parameter")
    p.add_argument("--sweep", choices=SWEEPS)
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--mask", help="mask JSON for the lambda and K sweeps")
    _add_opt_flags(p)
    p.add_argument("--out", help="CSV output")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors, --help, --version
        return exc.code
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args)
        args.func(args, config)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ksadapt {args.verb}: error: {exc}", file=sys.stderr)
        return 2
    except (KsadaptError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"ksadapt {args.verb}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
