"""Command-line surface.

Subcommands: peel, edges, gcc, abstract, enhance, oracle-check. Exit codes
are 0 on success, 1 on usage/configuration errors, 2 on I/O errors, 3 when
the solver fails to converge. Every file is written atomically, and runs
that produce files also write a run.json manifest holding the resolved
configuration plus a timing block (the only part of the manifest that is
not byte-stable across identical runs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .applications import (
    AbstractionConfig,
    RetinexConfig,
    abstract,
    retinex_enhance,
    retinex_illumination,
)
from .errors import (
    ConvergenceFailure,
    EmptySequence,
    FormatError,
    InvalidParameter,
    IoError,
    ParseError,
    ShapeMismatch,
)
from .guidance import ScaleSchedule, edge_confidence, load_guidance
from .image import load_image, save_image
from .metrics import gcc as gcc_metric
from .metrics import hierarchy_report
from .oracles import oracle_check
from .peeler import PeelConfig
from .pipeline import guidance_sequence, peel, peel_with_external_guidance, save_hierarchy

__all__ = ["main", "load_config", "RunConfig"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract wants 1
    def error(self, message):
        raise _UsageError(message)


# configuration keys accepted in `key = value` files; flags use the same
# names with dashes. Booleans accept true/false/1/0/yes/no.
def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


CONFIG_KEYS: dict[str, type | object] = {
    "lambda_pre": float,
    "lambda_con": float,
    "beta_g": float,
    "epsilon": float,
    "cg_tol": float,
    "cg_max_iters": int,
    "alpha1": float,
    "eta": float,
    "T": int,
    "anchor": str,
    "solver": str,
    "threads": int,
    "seed": int,
    "output_dir": str,
    "scale_index": int,
    "quant_levels": int,
    "edge_overlay": _parse_bool,
    "edge_color": str,
    "scales": str,
    "weights": str,
    "gain": float,
    "offset": float,
}


def load_config(path: str | Path) -> dict:
    """Parse a flat `key = value` file with '#' comments.

    Unknown keys and untypable values raise ParseError carrying the line
    number. Returned values are already cast to their target types.
    """
    path = Path(path)
    if not path.is_file():
        raise IoError(f"no such config file: {path}")
    values: dict = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_KEYS:
            raise ParseError(f"unknown key {key!r}", line=lineno)
        try:
            values[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ParseError(f"bad value for {key!r}: {exc}", line=lineno) from exc
    return values


@dataclass
class RunConfig:
    """Resolved settings for one invocation: defaults, then config file,
    then explicit flags."""

    command: str
    input: Path | None = None
    output_dir: Path = Path(".")
    peel_config: PeelConfig = field(default_factory=PeelConfig)
    schedule: ScaleSchedule = field(default_factory=ScaleSchedule)
    anchor: str = "previous"
    solver: str = "auto"
    threads: int = 0
    seed: int = 7
    extras: dict = field(default_factory=dict)

    def as_manifest_dict(self) -> dict:
        cfg = self.peel_config
        sched = self.schedule
        out = {
            "command": self.command,
            "input": str(self.input) if self.input else None,
            "output_dir": str(self.output_dir),
            "lambda_pre": cfg.lambda_pre,
            "lambda_con": cfg.lambda_con,
            "beta_g": cfg.beta_g,
            "epsilon": cfg.epsilon,
            "cg_tol": cfg.cg_tol,
            "cg_max_iters": cfg.cg_max_iters,
            "alpha1": sched.alpha1,
            "eta": sched.eta,
            "T": sched.num_scales,
            "anchor": self.anchor,
            "solver": self.solver,
            "threads": self.threads,
            "version": __version__,
        }
        out.update(self.extras)
        return out


def _pick(args: argparse.Namespace, file_values: dict, key: str, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_values:
        return file_values[key]
    return default


def _resolve(args: argparse.Namespace, needs_schedule: bool = True) -> RunConfig:
    file_values = load_config(args.config) if getattr(args, "config", None) else {}
    try:
        peel_cfg = PeelConfig(
            lambda_pre=_pick(args, file_values, "lambda_pre", 0.4),
            lambda_con=_pick(args, file_values, "lambda_con", 4.0),
            beta_g=_pick(args, file_values, "beta_g", 1.5),
            epsilon=_pick(args, file_values, "epsilon", 0.005),
            cg_tol=_pick(args, file_values, "cg_tol", 1e-6),
            cg_max_iters=_pick(args, file_values, "cg_max_iters", None),
        )
        default_T = getattr(args, "default_T", 4)
        schedule = ScaleSchedule(
            alpha1=_pick(args, file_values, "alpha1", 0.3),
            eta=_pick(args, file_values, "eta", 1.5),
            num_scales=_pick(args, file_values, "T", default_T),
        ) if needs_schedule else ScaleSchedule()
    except InvalidParameter as exc:
        raise ParseError(str(exc)) from exc
    anchor = _pick(args, file_values, "anchor", "previous")
    solver = _pick(args, file_values, "solver", "auto")
    if anchor not in ("previous", "first"):
        raise ParseError(f"anchor must be 'previous' or 'first', got {anchor!r}")
    if solver not in ("auto", "cg", "direct"):
        raise ParseError(f"solver must be auto, cg, or direct, got {solver!r}")
    threads = _pick(args, file_values, "threads", None)
    if threads is None:
        env = os.environ.get("HIPE_THREADS", "").strip()
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ParseError(f"threads must be >= 1, got {threads}")
    run = RunConfig(
        command=args.command,
        input=Path(args.input) if getattr(args, "input", None) else None,
        output_dir=Path(_pick(args, file_values, "output_dir", getattr(args, "output_dir", None) or ".")),
        peel_config=peel_cfg,
        schedule=schedule,
        anchor=anchor,
        solver=solver,
        threads=int(threads),
        seed=int(_pick(args, file_values, "seed", 7)),
    )
    return run


def _ensure_outdir(run: RunConfig) -> None:
    run.output_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(run.output_dir, os.W_OK):
        raise IoError(f"output directory not writable: {run.output_dir}")


def _write_text_atomic(text: str, path: Path) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_json_atomic(data: dict, path: Path) -> None:
    _write_text_atomic(json.dumps(data, indent=2, sort_keys=True) + "\n", path)


def _write_manifest(run: RunConfig, outputs: list[Path], per_scale: list[float], total: float) -> Path:
    manifest = {
        "config": run.as_manifest_dict(),
        "outputs": [p.name for p in outputs],
        "timing": {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "per_scale_seconds": per_scale,
            "total_seconds": total,
        },
    }
    path = run.output_dir / "run.json"
    _write_json_atomic(manifest, path)
    return path


# -- subcommands -----------------------------------------------------------

def _cmd_peel(args) -> int:
    run = _resolve(args)
    started = time.perf_counter()
    img = load_image(run.input)
    _ensure_outdir(run)
    guides = [load_guidance(p) for p in (args.guide or [])]
    if guides:
        hierarchy = peel_with_external_guidance(img, guides, run.peel_config, method=run.solver)
        run.extras["guides"] = [str(p) for p in args.guide]
    else:
        ggr = load_guidance(args.ggr) if args.ggr else None
        if args.ggr:
            run.extras["ggr"] = str(args.ggr)
        hierarchy = peel(
            img, run.schedule, run.peel_config, ggr=ggr, anchor=run.anchor, method=run.solver
        )
    stem = run.input.stem
    outputs = save_hierarchy(hierarchy, run.output_dir, stem)
    report_path = run.output_dir / f"{stem}_gcc.json"
    _write_text_atomic(hierarchy_report(hierarchy).to_json() + "\n", report_path)
    outputs.append(report_path)
    run.extras["detail_encoding"] = "(value + 1) / 2"
    per_scale = [s.seconds for s in hierarchy.scales]
    _write_manifest(run, outputs, per_scale, time.perf_counter() - started)
    print(f"wrote {len(outputs)} files to {run.output_dir}")
    return 0


def _cmd_edges(args) -> int:
    run = _resolve(args)
    started = time.perf_counter()
    img = load_image(run.input)
    _ensure_outdir(run)
    maps, refs = [], []
    for ref, gmap in guidance_sequence(img, run.schedule, run.peel_config.beta_g):
        maps.append(gmap)
        refs.append(ref)
    confidence = edge_confidence(maps, refs)
    out_path = run.output_dir / f"{run.input.stem}_edges.png"
    save_image(confidence[:, :, None], out_path)
    _write_manifest(run, [out_path], [], time.perf_counter() - started)
    print(out_path)
    return 0


def _cmd_gcc(args) -> int:
    detail = load_image(args.detail)
    structure = load_image(args.structure)
    if args.detail_encoded:
        detail = 2.0 * detail - 1.0
    print(f"{gcc_metric(detail, structure):.10e}")
    return 0


def _cmd_abstract(args) -> int:
    run = _resolve(args)
    started = time.perf_counter()
    img = load_image(run.input)
    _ensure_outdir(run)
    try:
        color = tuple(float(v) for v in str(args.edge_color or "0,0,0").split(","))
        cfg = AbstractionConfig(
            scale_index=args.scale_index,
            quant_levels=args.levels if args.levels is not None else 8,
            edge_overlay=bool(args.overlay),
            edge_color=color,
        )
    except (ValueError, InvalidParameter) as exc:
        raise ParseError(str(exc)) from exc
    hierarchy = peel(img, run.schedule, run.peel_config, anchor=run.anchor, method=run.solver)
    result = abstract(hierarchy, cfg)
    out_path = run.output_dir / f"{run.input.stem}_abstract.png"
    save_image(result, out_path)
    run.extras.update({"quant_levels": cfg.quant_levels, "scale_index": cfg.scale_index})
    per_scale = [s.seconds for s in hierarchy.scales]
    _write_manifest(run, [out_path], per_scale, time.perf_counter() - started)
    print(out_path)
    return 0


def _cmd_enhance(args) -> int:
    run = _resolve(args)
    started = time.perf_counter()
    img = load_image(run.input)
    _ensure_outdir(run)
    try:
        indices = tuple(int(v) for v in args.scales.split(",")) if args.scales else None
        weights = tuple(float(v) for v in args.weights.split(",")) if args.weights else None
        cfg = RetinexConfig(
            scale_indices=indices,
            weights=weights,
            gain=args.gain if args.gain is not None else 1.0,
            offset=args.offset if args.offset is not None else 0.0,
        )
    except (ValueError, InvalidParameter) as exc:
        raise ParseError(str(exc)) from exc
    hierarchy = peel(img, run.schedule, run.peel_config, anchor=run.anchor, method=run.solver)
    enhanced = retinex_enhance(img, hierarchy, cfg)
    illumination = retinex_illumination(hierarchy, cfg)
    out_e = run.output_dir / f"{run.input.stem}_enhanced.png"
    out_i = run.output_dir / f"{run.input.stem}_illumination.png"
    save_image(enhanced, out_e)
    save_image(illumination, out_i)
    run.extras.update({"gain": cfg.gain, "offset": cfg.offset})
    per_scale = [s.seconds for s in hierarchy.scales]
    _write_manifest(run, [out_e, out_i], per_scale, time.perf_counter() - started)
    print(out_e)
    print(out_i)
    return 0


def _cmd_oracle_check(args) -> int:
    report = oracle_check(
        size=args.size, seed=args.seed, channels=args.channels, images=args.images
    )
    print(f"dense-solve max abs deviation: {report['dense_max_abs_dev']:.3e} "
          f"(tol 1e-6) {'ok' if report['dense_ok'] else 'FAIL'}")
    print(f"finite-difference gradient max rel error: {report['fd_max_rel_err']:.3e} "
          f"(tol 1e-4) {'ok' if report['fd_ok'] else 'FAIL'}")
    print(f"descent objective gap: {report['descent_objective_gap']:.3e} "
          f"(tol 1e-9) {'ok' if report['descent_ok'] else 'FAIL'}")
    return 0 if (report["dense_ok"] and report["fd_ok"] and report["descent_ok"]) else 1


# -- parser ----------------------------------------------------------------

def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda-pre", dest="lambda_pre", type=float, help="preservation weight (default: 0.4)")
    p.add_argument("--lambda-con", dest="lambda_con", type=float, help="consistency weight (default: 4)")
    p.add_argument("--beta-g", dest="beta_g", type=float, help="guidance balance; edge threshold is 1/(1+beta_g) (default: 1.5)")
    p.add_argument("--epsilon", type=float, help="division guard in the consistency weight (default: 0.005)")
    p.add_argument("--cg-tol", dest="cg_tol", type=float, help="relative residual bound per channel (default: 1e-6)")
    p.add_argument("--cg-max-iters", dest="cg_max_iters", type=int, help="CG iteration cap (default: 10*sqrt(pixels))")
    p.add_argument("--solver", choices=["auto", "cg", "direct"], help="linear solver backend (default: auto)")


def _add_schedule_flags(p: argparse.ArgumentParser, default_T: int = 4) -> None:
    p.add_argument("--alpha1", type=float, help="first peeling strength (default: 0.3)")
    p.add_argument("--eta", type=float, help="strength growth per scale (default: 1.5)")
    p.add_argument("--T", dest="T", type=int, help=f"number of scales (default: {default_T})")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output-dir", dest="output_dir", help="where outputs and run.json go (default: .)")
    p.add_argument("--config", help="flat key = value configuration file; flags override it")
    p.add_argument("--threads", type=int, help="solver threads; falls back to HIPE_THREADS then CPU count")
    p.add_argument("--anchor", choices=["previous", "first"], help="data-term anchor per scale (default: previous)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hipe",
        description="Hierarchical image peeling: disassemble an image into structure layers and detail components.",
    )
    parser.add_argument("--version", action="version", version=f"hipe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("peel", help="run the full multi-scale peel")
    p.add_argument("--input", required=True, help="input image (PNG/PPM/PGM)")
    p.add_argument("--ggr", help="annotation edge map; omitted means self-guidance")
    p.add_argument("--guide", action="append", help="external guidance map, repeat once per scale (order = scale order)")
    _add_solver_flags(p)
    _add_schedule_flags(p)
    _add_run_flags(p)
    p.set_defaults(func=_cmd_peel)

    p = sub.add_parser("edges", help="multi-scale edge confidence map (no peeling)")
    p.add_argument("--input", required=True, help="input image")
    p.add_argument("--beta-g", dest="beta_g", type=float, help="guidance balance (default: 1.5)")
    _add_schedule_flags(p, default_T=24)
    _add_run_flags(p)
    p.set_defaults(func=_cmd_edges, default_T=24)

    p = sub.add_parser("gcc", help="gradient correlation between two images")
    p.add_argument("--detail", required=True, help="detail/peeled image")
    p.add_argument("--structure", required=True, help="structure image")
    p.add_argument("--detail-encoded", dest="detail_encoded", action="store_true",
                   help="decode the detail file from (value+1)/2 storage (default: off)")
    p.set_defaults(func=_cmd_gcc)

    p = sub.add_parser("abstract", help="posterized abstraction of a structure layer")
    p.add_argument("--input", required=True, help="input image")
    p.add_argument("--scale-index", dest="scale_index", type=int, help="which structure layer (default: T)")
    p.add_argument("--levels", type=int, help="quantization levels per channel (default: 8)")
    p.add_argument("--overlay", action=argparse.BooleanOptionalAction, default=False,
                   help="paint guidance edges over the result (default: off)")
    p.add_argument("--edge-color", dest="edge_color", help="overlay color as R,G,B in [0,1] (default: 0,0,0)")
    _add_solver_flags(p)
    _add_schedule_flags(p)
    _add_run_flags(p)
    p.set_defaults(func=_cmd_abstract)

    p = sub.add_parser("enhance", help="multi-scale retinex low-light enhancement")
    p.add_argument("--input", required=True, help="input image")
    p.add_argument("--scales", help="comma-separated structure layers to use (default: all)")
    p.add_argument("--weights", help="comma-separated per-scale weights summing to 1 (default: uniform)")
    p.add_argument("--gain", type=float, help="output remap gain (default: 1)")
    p.add_argument("--offset", type=float, help="output remap offset (default: 0)")
    _add_solver_flags(p)
    _add_schedule_flags(p)
    _add_run_flags(p)
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("oracle-check", help="run the solver oracles and report deviations")
    p.add_argument("--size", type=int, default=8, help="side length of the random systems (default: 8)")
    p.add_argument("--seed", type=int, default=7, help="base seed (default: 7)")
    p.add_argument("--channels", type=int, default=3, choices=[1, 3], help="channels of the random images (default: 3)")
    p.add_argument("--images", type=int, default=3, help="number of random systems (default: 3)")
    p.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"hipe: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ParseError, InvalidParameter, ShapeMismatch, EmptySequence, _UsageError) as exc:
        print(f"hipe: {exc}", file=sys.stderr)
        return 1
    except (IoError, FormatError) as exc:
        print(f"hipe: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"hipe: {exc}", file=sys.stderr)
        return 2
    except ConvergenceFailure as exc:
        print(f"hipe: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
