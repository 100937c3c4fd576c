"""Benchmark harness CLI (``pointlk-bench``).

Subcommands reproduce the experiment families at desk scale: single
registrations, initial-angle sweeps, size scaling with fitted exponents,
phase profiling, quantization sweeps, and the accelerator model, plus
fixture helpers (pair/corpus/weights generation and blob inspection).

Every command is reproducible: flags and ``--seed`` fully determine the CSV
output except wall-clock columns. Plots are always rendered from the CSV
files they accompany, never from in-memory values, so the CSV stays the
single source of truth. CSV schemas are versioned by a leading
``# schema:`` comment line and documented in docs/csv_schemas.md.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import accel, data, geometry, icp, lk
from .fixedpoint import QFormat, QuantizedPointNet
from .pointnet import PointNetParams, feature_extractor, random_params

METHODS = ("pointnetlk-float", "pointnetlk-quant", "icp")
DEFAULT_ANGLES = tuple(range(0, 91, 10))
DEFAULT_SIZES = (256, 512, 1024, 2048, 4096)
DEFAULT_QFORMATS = (8, 10, 12, 14, 16)

REGISTER_FIELDS = [
    "method", "n_points", "angle_deg", "seed", "qformat_n",
    "rot_error_deg", "trans_error", "iterations", "converged",
    "residual_first", "residual_last", "wall_seconds",
    "feature_seconds", "jacobian_seconds", "solve_seconds", "transform_seconds",
    "nn_seconds", "fit_seconds",
]


class CliError(Exception):
    """User-facing failure; message printed to stderr, nonzero exit."""


# ---------------------------------------------------------------------------
# Small helpers
# ---------------------------------------------------------------------------


def _mix_seed(base: int, *parts) -> int:
    """Stable per-task seed derived from the base seed and task identity."""
    tag = "|".join(str(p) for p in parts)
    return (int(base) * 1000003 + zlib.crc32(tag.encode())) % (2**31)


def _write_csv(path: Path, schema: str, fieldnames: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        handle.write(f"# schema: {schema}\n")
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_csv(path) -> list[dict]:
    """Read one of this tool's CSV files, skipping schema comment lines."""
    with open(path, newline="") as handle:
        content = [line for line in handle if not line.startswith("#")]
    return list(csv.DictReader(content))


def _load_cloud(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".off":
        return data.load_off(path)
    try:
        return geometry.as_cloud(np.loadtxt(path, delimiter=","))
    except Exception as exc:
        raise CliError(f"cannot load point cloud from {path}: {exc}") from exc


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


@dataclass
class ConfigBundle:
    """Solver defaults, overridable from a JSON config file."""

    lk: dict = field(default_factory=dict)
    icp: dict = field(default_factory=dict)
    qformat_n: int = 16

    @classmethod
    def load(cls, path) -> "ConfigBundle":
        if path is None:
            return cls()
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
        bundle = cls()
        bundle.lk = dict(raw.get("lk", {}))
        bundle.icp = dict(raw.get("icp", {}))
        bundle.qformat_n = int(raw.get("qformat", {}).get("n", bundle.qformat_n))
        return bundle


def _resolve_params(weights_path, seed: int) -> tuple[PointNetParams, str]:
    """Load a weight blob, or fall back to seeded random parameters."""
    if weights_path is not None:
        try:
            params, _ = data.read_weights(weights_path)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot load weights from {weights_path}: {exc}") from exc
        return params, str(weights_path)
    return random_params(_mix_seed(seed, "weights")), "random"


def _registration_record(
    method: str,
    template: np.ndarray,
    source: np.ndarray,
    gt,
    *,
    seed: int,
    angle_deg,
    params: PointNetParams | None,
    bundle: ConfigBundle,
    qformat_n: int | None = None,
) -> dict:
    """Run one registration and flatten the outcome into a CSV row."""
    row = dict.fromkeys(REGISTER_FIELDS, "")
    row.update(method=method, n_points=len(source), seed=seed, angle_deg=_fmt(angle_deg))

    t0 = time.perf_counter()
    if method == "icp":
        result = icp.icp_register(template, source, icp.IcpConfig(**bundle.icp))
        row["nn_seconds"] = _fmt(result.phase_seconds["nn_search"])
        row["fit_seconds"] = _fmt(result.phase_seconds["fit"])
        row["transform_seconds"] = _fmt(result.phase_seconds["transform"])
    elif method in ("pointnetlk-float", "pointnetlk-quant"):
        if params is None:
            raise CliError(f"method {method} needs weights")
        if method == "pointnetlk-quant":
            n = qformat_n if qformat_n is not None else bundle.qformat_n
            feature_fn = QuantizedPointNet(params, QFormat(n)).extractor()
            row["qformat_n"] = n
        else:
            feature_fn = feature_extractor(params)
        result = lk.register(template, source, lk.LkConfig(feature_fn=feature_fn, **bundle.lk))
        for phase in ("feature", "jacobian", "solve", "transform"):
            row[f"{phase}_seconds"] = _fmt(result.phase_seconds[phase])
    else:
        raise CliError(f"unknown method {method!r}; choose from {METHODS}")
    row["wall_seconds"] = _fmt(time.perf_counter() - t0)

    row["iterations"] = result.iterations_used
    row["converged"] = int(result.converged)
    if result.residual_history:
        row["residual_first"] = _fmt(result.residual_history[0])
        row["residual_last"] = _fmt(result.residual_history[-1])
    if gt is not None:
        rot_err, trans_err = geometry.registration_error(gt, result.transform)
        row["rot_error_deg"] = _fmt(rot_err)
        row["trans_error"] = _fmt(trans_err)
    return row


def _synthetic_template(seed: int, vertices: int) -> np.ndarray:
    """Synthetic normalized template with exactly ``vertices`` points, so the
    pair generator's resampling is the identity and angle-0 pairs coincide."""
    kind = data.SHAPE_KINDS[seed % len(data.SHAPE_KINDS)]
    return data.normalize_unit_cube(data.synthetic_shape(kind, vertices, seed=seed))


def _corpus_paths(corpus_dir) -> list[Path]:
    corpus = sorted(Path(corpus_dir).glob("*.off"))
    if not corpus:
        raise CliError(f"corpus directory {corpus_dir} contains no .off files")
    return corpus


# ---------------------------------------------------------------------------
# register / gen-pair
# ---------------------------------------------------------------------------


def _cmd_register(args) -> int:
    bundle = ConfigBundle.load(args.config)
    if args.template is not None:
        template_full = data.normalize_unit_cube(_load_cloud(args.template))
    else:
        template_full = _synthetic_template(args.seed, args.n_points)

    if args.source is not None:
        template = data.resample(template_full, args.n_points, np.random.default_rng(args.seed))
        source = _load_cloud(args.source)
        gt = None
        if args.gt is not None:
            gt = geometry.require_rigid(np.array(json.loads(Path(args.gt).read_text())))
        angle = ""
    else:
        spec = data.PairSpec(
            initial_angle_deg=args.angle,
            translation_bound=args.translation_bound,
            seed=args.seed,
            n_points=args.n_points,
        )
        template, source, gt = data.make_pair(template_full, spec)
        angle = args.angle

    params = None
    if args.method != "icp":
        params, _ = _resolve_params(args.weights, args.seed)
    row = _registration_record(
        args.method, template, source, gt,
        seed=args.seed, angle_deg=angle, params=params, bundle=bundle,
        qformat_n=args.qformat_n,
    )
    out_dir = Path(args.out_dir)
    _write_csv(out_dir / "register.csv", "register-v1", REGISTER_FIELDS, [row])
    writer = csv.DictWriter(sys.stdout, fieldnames=REGISTER_FIELDS)
    writer.writeheader()
    writer.writerow(row)
    return 0


def _cmd_gen_pair(args) -> int:
    if args.template is not None:
        template_full = data.normalize_unit_cube(_load_cloud(args.template))
    else:
        template_full = _synthetic_template(args.seed, args.n_points)
    spec = data.PairSpec(
        initial_angle_deg=args.angle,
        translation_bound=args.translation_bound,
        seed=args.seed,
        n_points=args.n_points,
    )
    template, source, gt = data.make_pair(template_full, spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_dir / "template.csv", template, delimiter=",", fmt="%.17g")
    np.savetxt(out_dir / "source.csv", source, delimiter=",", fmt="%.17g")
    (out_dir / "gt.json").write_text(json.dumps(gt.tolist(), indent=2) + "\n")
    print(f"wrote pair fixture (N={len(template)}, angle={args.angle} deg) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# sweep-angle
# ---------------------------------------------------------------------------


def _run_sweep_task(task: dict) -> dict:
    """One (model, angle, trial) registration; module-level for pickling."""
    bundle = ConfigBundle.load(task.get("config"))
    template_full = data.normalize_unit_cube(data.load_off(task["model_path"]))
    spec = data.PairSpec(
        initial_angle_deg=task["angle"],
        seed=task["pair_seed"],
        n_points=task["n_points"],
    )
    template, source, gt = data.make_pair(template_full, spec)
    params = None
    if task["method"] != "icp":
        if task["weights"] == "random":
            params = random_params(_mix_seed(task["base_seed"], "weights"))
        else:
            params, _ = data.read_weights(task["weights"])
    return _registration_record(
        task["method"], template, source, gt,
        seed=task["pair_seed"], angle_deg=task["angle"], params=params, bundle=bundle,
        qformat_n=task.get("qformat_n"),
    )


def _run_tasks(tasks: list[dict], workers: int) -> list[dict]:
    if workers <= 1:
        return [_run_sweep_task(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_sweep_task, tasks))


def _cmd_sweep_angle(args) -> int:
    corpus = _corpus_paths(args.corpus)
    methods = args.methods.split(",")
    for method in methods:
        if method not in METHODS:
            raise CliError(f"unknown method {method!r}; choose from {METHODS}")
    angles = [int(a) for a in args.angles.split(",")]
    weights = args.weights if args.weights is not None else "random"

    tasks = []
    for method in methods:
        for angle in angles:
            for trial in range(args.trials):
                model = corpus[trial % len(corpus)]
                tasks.append(
                    {
                        "method": method,
                        "angle": angle,
                        "model_path": str(model),
                        "pair_seed": _mix_seed(args.seed, model.name, angle, trial),
                        "base_seed": args.seed,
                        "n_points": args.n_points,
                        "weights": weights,
                        "config": args.config,
                        "qformat_n": args.qformat_n,
                    }
                )
    records = _run_tasks(tasks, args.workers)

    rows = []
    for method in methods:
        for angle in angles:
            group = [
                r for r, t in zip(records, tasks)
                if t["method"] == method and t["angle"] == angle
            ]
            rows.append(
                {
                    "method": method,
                    "angle_deg": angle,
                    "trials": len(group),
                    "mean_rot_error_deg": _fmt(statistics.mean(float(r["rot_error_deg"]) for r in group)),
                    "mean_trans_error": _fmt(statistics.mean(float(r["trans_error"]) for r in group)),
                    "mean_iterations": _fmt(statistics.mean(float(r["iterations"]) for r in group)),
                }
            )
    out_dir = Path(args.out_dir)
    csv_path = out_dir / "sweep_angle.csv"
    fields = ["method", "angle_deg", "trials", "mean_rot_error_deg", "mean_trans_error", "mean_iterations"]
    _write_csv(csv_path, "sweep-angle-v1", fields, rows)
    print(f"wrote {csv_path} ({len(rows)} rows)")
    if args.format == "svg":
        _plot_sweep(csv_path, out_dir / "sweep_angle.svg")
    return 0


def _plot_sweep(csv_path: Path, svg_path: Path) -> None:
    rows = read_csv(csv_path)
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_rot, ax_trans) = plt.subplots(1, 2, figsize=(9, 3.6))
    for method in sorted({r["method"] for r in rows}):
        series = sorted((r for r in rows if r["method"] == method), key=lambda r: float(r["angle_deg"]))
        angles = [float(r["angle_deg"]) for r in series]
        ax_rot.plot(angles, [float(r["mean_rot_error_deg"]) for r in series], marker="o", label=method)
        ax_trans.plot(angles, [float(r["mean_trans_error"]) for r in series], marker="o", label=method)
    ax_rot.set_xlabel("initial angle (deg)")
    ax_rot.set_ylabel("rotation error (deg, per-model mean)")
    ax_trans.set_xlabel("initial angle (deg)")
    ax_trans.set_ylabel("translation error (per-model mean)")
    ax_rot.legend()
    fig.tight_layout()
    fig.savefig(svg_path)
    plt.close(fig)
    print(f"wrote {svg_path}")


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------


def _cmd_scaling(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    if len(sizes) < 3:
        raise CliError("scaling needs at least 3 sizes to fit an exponent")
    methods = args.methods.split(",")
    bundle = ConfigBundle.load(args.config)
    params, _ = _resolve_params(args.weights, args.seed)

    for method in methods:
        if method not in METHODS:
            raise CliError(f"unknown method {method!r}; choose from {METHODS}")
    tasks = []
    for method in methods:
        for n_points in sizes:
            template_full = _synthetic_template(args.seed, n_points)
            spec = data.PairSpec(
                initial_angle_deg=args.angle,
                seed=_mix_seed(args.seed, method, n_points),
                n_points=n_points,
            )
            template, source, gt = data.make_pair(template_full, spec)
            tasks.append((method, n_points, spec.seed, template, source, gt, []))
    # Repetitions are interleaved round-robin across all (method, size)
    # points so bursty machine load spreads evenly instead of biasing the
    # fitted exponent; the first round warms caches and goes untimed.
    for rep in range(args.reps + 1):
        for method, n_points, seed, template, source, gt, times in tasks:
            t0 = time.perf_counter()
            _registration_record(
                method, template, source, gt,
                seed=seed, angle_deg=args.angle, params=params, bundle=bundle,
                qformat_n=args.qformat_n,
            )
            if rep > 0:
                times.append(time.perf_counter() - t0)
    reducers = {"median": statistics.median, "min": min, "mean": statistics.mean}
    rows = [
        {
            "method": method,
            "n_points": n_points,
            "reps": args.reps,
            "stat": args.stat,
            "stat_seconds": _fmt(reducers[args.stat](times)),
            "median_seconds": _fmt(statistics.median(times)),
            "min_seconds": _fmt(min(times)),
            "max_seconds": _fmt(max(times)),
        }
        for method, n_points, seed, template, source, gt, times in tasks
    ]
    out_dir = Path(args.out_dir)
    csv_path = out_dir / "scaling.csv"
    fields = ["method", "n_points", "reps", "stat", "stat_seconds", "median_seconds", "min_seconds", "max_seconds"]
    _write_csv(csv_path, "scaling-v1", fields, rows)
    print(f"wrote {csv_path}")

    fit_rows = scaling_exponents(csv_path)
    _write_csv(out_dir / "scaling_fit.csv", "scaling-fit-v1", ["method", "exponent"], fit_rows)
    for row in fit_rows:
        print(f"{row['method']}: fitted log-log exponent {float(row['exponent']):.3f}")
    if args.format == "svg":
        _plot_scaling(csv_path, out_dir / "scaling.svg")
    return 0


def scaling_exponents(csv_path) -> list[dict]:
    """Least-squares log-log slope per method from a scaling CSV."""
    rows = read_csv(csv_path)
    out = []
    for method in sorted({r["method"] for r in rows}):
        series = [r for r in rows if r["method"] == method]
        logn = np.log([float(r["n_points"]) for r in series])
        logt = np.log([float(r["stat_seconds"]) for r in series])
        slope = float(np.polyfit(logn, logt, 1)[0])
        out.append({"method": method, "exponent": _fmt(slope)})
    return out


def _plot_scaling(csv_path: Path, svg_path: Path) -> None:
    rows = read_csv(csv_path)
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.6))
    for method in sorted({r["method"] for r in rows}):
        series = sorted((r for r in rows if r["method"] == method), key=lambda r: int(r["n_points"]))
        ax.loglog(
            [int(r["n_points"]) for r in series],
            [float(r["stat_seconds"]) for r in series],
            marker="o",
            label=method,
        )
    ax.set_xlabel("points per cloud")
    ax.set_ylabel("median wall time (s)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(svg_path)
    plt.close(fig)
    print(f"wrote {svg_path}")


# ---------------------------------------------------------------------------
# profile
# ---------------------------------------------------------------------------


def _cmd_profile(args) -> int:
    bundle = ConfigBundle.load(args.config)
    params = None
    if args.method != "icp":
        params, _ = _resolve_params(args.weights, args.seed)
    if args.template is not None:
        template_full = data.normalize_unit_cube(_load_cloud(args.template))
    else:
        template_full = _synthetic_template(args.seed, args.n_points)
    spec = data.PairSpec(initial_angle_deg=args.angle, seed=args.seed, n_points=args.n_points)
    template, source, gt = data.make_pair(template_full, spec)

    record = _registration_record(
        args.method, template, source, gt,
        seed=args.seed, angle_deg=args.angle, params=params, bundle=bundle,
        qformat_n=args.qformat_n,
    )
    wall = float(record["wall_seconds"])
    if args.method == "icp":
        phase_cols = {"nn_search": "nn_seconds", "fit": "fit_seconds", "transform": "transform_seconds"}
    else:
        phase_cols = {p: f"{p}_seconds" for p in ("feature", "jacobian", "solve", "transform")}
    phases = {name: float(record[col]) for name, col in phase_cols.items()}
    phases["other"] = max(0.0, wall - sum(phases.values()))
    rows = [
        {
            "method": args.method,
            "n_points": args.n_points,
            "phase": name,
            "seconds": _fmt(seconds),
            "share_pct": _fmt(100.0 * seconds / wall if wall else 0.0),
        }
        for name, seconds in phases.items()
    ]
    csv_path = Path(args.out_dir) / "profile.csv"
    _write_csv(csv_path, "profile-v1", ["method", "n_points", "phase", "seconds", "share_pct"], rows)
    for row in rows:
        print(f"{row['phase']:>10s}: {float(row['seconds']):8.4f} s ({float(row['share_pct']):5.1f}%)")
    print(f"wrote {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# quant-eval
# ---------------------------------------------------------------------------


def _cmd_quant_eval(args) -> int:
    if args.weights is None:
        raise CliError(
            "quant-eval needs a weight blob (--weights). Train one with the trainer "
            "package (see trainer/README.md) or generate a random blob via gen-weights."
        )
    corpus = _corpus_paths(args.corpus)
    formats = [int(n) for n in args.formats.split(",")]
    angles = [int(a) for a in args.angles.split(",")]

    tasks = []
    for n in formats:
        for angle in angles:
            for trial in range(args.trials):
                model = corpus[trial % len(corpus)]
                tasks.append(
                    {
                        "method": "pointnetlk-quant",
                        "angle": angle,
                        "model_path": str(model),
                        # Same pair seed across formats: paired comparison.
                        "pair_seed": _mix_seed(args.seed, model.name, angle, trial),
                        "base_seed": args.seed,
                        "n_points": args.n_points,
                        "weights": str(args.weights),
                        "config": args.config,
                        "qformat_n": n,
                    }
                )
    records = _run_tasks(tasks, args.workers)

    rows = []
    for n in formats:
        for angle in angles:
            group = [
                r for r, t in zip(records, tasks)
                if t["qformat_n"] == n and t["angle"] == angle
            ]
            rows.append(
                {
                    "qformat_n": n,
                    "total_bits": 2 * n,
                    "angle_deg": angle,
                    "trials": len(group),
                    "mean_rot_error_deg": _fmt(statistics.mean(float(r["rot_error_deg"]) for r in group)),
                    "mean_trans_error": _fmt(statistics.mean(float(r["trans_error"]) for r in group)),
                }
            )
    out_dir = Path(args.out_dir)
    csv_path = out_dir / "quant_eval.csv"
    fields = ["qformat_n", "total_bits", "angle_deg", "trials", "mean_rot_error_deg", "mean_trans_error"]
    _write_csv(csv_path, "quant-eval-v1", fields, rows)
    print(f"wrote {csv_path} ({len(rows)} rows)")

    overall = {
        n: statistics.mean(float(r["mean_rot_error_deg"]) for r in rows if int(r["qformat_n"]) == n)
        for n in formats
    }
    ordered = sorted(formats)
    monotone = all(overall[b] <= overall[a] + 1e-12 for a, b in zip(ordered, ordered[1:]))
    for n in ordered:
        print(f"{2 * n:2d}-bit: mean rotation error {overall[n]:.4f} deg")
    print(f"monotone non-increasing with precision: {'yes' if monotone else 'no'}")
    if args.format == "svg":
        _plot_quant(csv_path, out_dir / "quant_eval.svg")
    return 0


def _plot_quant(csv_path: Path, svg_path: Path) -> None:
    rows = read_csv(csv_path)
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for n in sorted({int(r["qformat_n"]) for r in rows}):
        series = sorted((r for r in rows if int(r["qformat_n"]) == n), key=lambda r: float(r["angle_deg"]))
        ax.plot(
            [float(r["angle_deg"]) for r in series],
            [float(r["mean_rot_error_deg"]) for r in series],
            marker="o",
            label=f"{2 * n}-bit",
        )
    ax.set_xlabel("initial angle (deg)")
    ax.set_ylabel("rotation error (deg, per-model mean)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(svg_path)
    plt.close(fig)
    print(f"wrote {svg_path}")


# ---------------------------------------------------------------------------
# accel
# ---------------------------------------------------------------------------


def _cmd_accel(args) -> int:
    calibration = accel.load_calibration(args.profile)
    specs = accel.network_schedule(calibration)
    report = accel.pipeline_schedule(specs, args.n_points)
    comparison = accel.compare_designs(args.n_points, calibration)
    estimate = accel.estimate_resources(specs, args.width_bits, calibration)

    module_rows = [
        {
            "config_id": "calibrated",
            "module": label,
            "b": spec.b,
            "latency_us": _fmt(latency),
            "model": model,
            "bottleneck": int(i == report.bottleneck_index),
        }
        for i, (label, latency, model, spec) in enumerate(
            zip(report.module_labels, report.module_latencies_us, report.module_models, specs)
        )
    ]
    out_dir = Path(args.out_dir)
    _write_csv(
        out_dir / "accel_modules.csv", "accel-modules-v1",
        ["config_id", "module", "b", "latency_us", "model", "bottleneck"], module_rows,
    )

    summary = {
        "config_id": "calibrated",
        "n_points": args.n_points,
        "interval_us": _fmt(report.interval_us),
        "bottleneck": report.bottleneck_label,
        "pipelined_us": _fmt(comparison.pipelined_us),
        "intra_us": _fmt(comparison.intra_us),
        "naive_us": _fmt(comparison.naive_us),
        "intra_speedup": _fmt(comparison.intra_speedup),
        "pipeline_speedup": _fmt(comparison.pipeline_speedup),
        "total_speedup": _fmt(comparison.total_speedup),
    }
    board = calibration.boards.get(args.board) if args.board else None
    if board is not None:
        for name, pct in estimate.utilization(board).items():
            summary[f"{name}_pct"] = _fmt(pct)
    fields = list(summary.keys())
    _write_csv(out_dir / "accel_summary.csv", "accel-summary-v1", fields, [summary])

    print(f"{'module':>14s} {'B':>4s} {'latency (us)':>13s}  model")
    for row in module_rows:
        marker = " <- bottleneck" if row["bottleneck"] else ""
        print(f"{row['module']:>14s} {row['b']:>4d} {float(row['latency_us']):>13.2f}  {row['model']}{marker}")
    print(
        f"N={args.n_points}: pipelined {comparison.pipelined_us / 1e3:.2f} ms, "
        f"intra-only {comparison.intra_us / 1e3:.2f} ms, naive {comparison.naive_us / 1e3:.2f} ms"
    )
    print(
        f"speedups: intra {comparison.intra_speedup:.2f}x, "
        f"pipeline {comparison.pipeline_speedup:.2f}x, total {comparison.total_speedup:.2f}x"
    )
    if board is not None:
        use = estimate.utilization(board)
        print(
            f"{args.board} utilization at {args.width_bits}-bit: "
            + ", ".join(f"{k.upper()} {v:.2f}%" for k, v in use.items())
        )

    if args.explore:
        budget = board
        shapes = accel.distinct_shapes()
        space = {shape: accel.power_of_two_choices(shape[1], cap=128) for shape in shapes}
        # Bound the sweep: element-wise modules only vary near their profile B.
        for shape in shapes:
            if shape[0] != accel.ModuleKind.FC:
                entry = calibration.lookup(*shape)
                base = entry["b"] if entry else 1
                space[shape] = tuple(sorted({1, base, min(2 * base, shape[1])}))
        points = accel.explore_design(
            space, budget, args.n_points,
            width_bits=args.width_bits, calibration=calibration, limit=args.explore_limit,
        )
        if not points:
            print("design exploration: no feasible configuration under the budget")
        else:
            explore_rows = [
                {
                    "config_id": p.config_id,
                    "total_us": _fmt(p.report.total_us),
                    "interval_us": _fmt(p.report.interval_us),
                    "bottleneck": p.report.bottleneck_label,
                    "dsp": _fmt(p.resources.dsp),
                    "bram": _fmt(p.resources.bram),
                    "ff": _fmt(p.resources.ff),
                    "lut": _fmt(p.resources.lut),
                }
                for p in points
            ]
            _write_csv(
                out_dir / "accel_explore.csv", "accel-explore-v1",
                ["config_id", "total_us", "interval_us", "bottleneck", "dsp", "bram", "ff", "lut"],
                explore_rows,
            )
            print(f"explored {len(points)} feasible configurations; best: {points[0].config_id}")
    return 0


# ---------------------------------------------------------------------------
# fixtures: gen-corpus / gen-weights / weights-info
# ---------------------------------------------------------------------------


def _cmd_gen_corpus(args) -> int:
    paths = data.write_synthetic_corpus(args.out_dir, count=args.count, vertices=args.vertices, seed=args.seed)
    print(f"wrote {len(paths)} synthetic meshes to {args.out_dir}")
    return 0


def _cmd_gen_weights(args) -> int:
    params = random_params(args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.write_weights(out, params, width_bits=args.width, qformat_n=args.qformat_n)
    print(f"wrote random weight blob (seed={args.seed}, width={args.width}) to {out}")
    return 0


def _cmd_weights_info(args) -> int:
    try:
        params, meta = data.read_weights(args.path)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read {args.path}: {exc}") from exc
    print(f"version:   {meta.version[0]}.{meta.version[1]}")
    print(f"width:     {meta.width_bits}-bit")
    print(f"qformat:   {'float pipeline' if meta.qformat_n == 0 else f'n={meta.qformat_n} ({2 * meta.qformat_n}-bit)'}")
    print(f"layers:    {', '.join(f'{lp.in_features}->{lp.out_features}' for lp in params.layers)}")
    print(f"epsilon:   {params.layers[0].epsilon:g}")
    print("checksum:  ok")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed")
    parser.add_argument("--out-dir", default="bench_out", help="output directory")
    parser.add_argument("--format", choices=("csv", "svg"), default="svg",
                        help="csv: tables only; svg: tables plus plots")
    parser.add_argument("--config", default=None, help="JSON config overriding solver defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointlk-bench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="run one registration and print its record")
    _add_common(p)
    p.add_argument("--template", default=None, help="template mesh/cloud (.off or .csv); synthetic if omitted")
    p.add_argument("--source", default=None, help="source cloud file; generated from the template if omitted")
    p.add_argument("--gt", default=None, help="ground-truth 4x4 transform (JSON) when --source is a file")
    p.add_argument("--method", choices=METHODS, default="icp")
    p.add_argument("--weights", default=None, help="weight blob; seeded random weights if omitted")
    p.add_argument("--angle", type=float, default=30.0)
    p.add_argument("--translation-bound", type=float, default=0.3)
    p.add_argument("--n-points", type=int, default=1024)
    p.add_argument("--qformat-n", type=int, default=None)
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("sweep-angle", help="mean errors per method over initial angles")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="directory of .off meshes")
    p.add_argument("--methods", default="pointnetlk-float,icp")
    p.add_argument("--angles", default=",".join(str(a) for a in DEFAULT_ANGLES))
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--n-points", type=int, default=1024)
    p.add_argument("--weights", default=None)
    p.add_argument("--qformat-n", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_sweep_angle)

    p = sub.add_parser("scaling", help="wall time vs cloud size with fitted exponents")
    _add_common(p)
    p.add_argument("--sizes", default=",".join(str(s) for s in DEFAULT_SIZES))
    p.add_argument("--methods", default="pointnetlk-float,icp")
    p.add_argument("--angle", type=float, default=30.0)
    p.add_argument("--reps", type=int, default=3, help="timed repetitions per point, after one warm-up")
    p.add_argument("--stat", choices=("median", "min", "mean"), default="median",
                   help="statistic fitted and plotted across repetitions")
    p.add_argument("--weights", default=None)
    p.add_argument("--qformat-n", type=int, default=None)
    p.set_defaults(func=_cmd_scaling)

    p = sub.add_parser("profile", help="per-phase time breakdown of one registration")
    _add_common(p)
    p.add_argument("--template", default=None)
    p.add_argument("--method", choices=METHODS, default="pointnetlk-float")
    p.add_argument("--angle", type=float, default=30.0)
    p.add_argument("--n-points", type=int, default=1024)
    p.add_argument("--weights", default=None)
    p.add_argument("--qformat-n", type=int, default=None)
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("quant-eval", help="registration error vs fixed-point precision")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--weights", default=None, help="weight blob (required)")
    p.add_argument("--formats", default=",".join(str(n) for n in DEFAULT_QFORMATS))
    p.add_argument("--angles", default="0,30,60,90")
    p.add_argument("--trials", type=int, default=2)
    p.add_argument("--n-points", type=int, default=256)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_quant_eval)

    p = sub.add_parser("accel", help="pipeline latency/resource model report")
    _add_common(p)
    p.add_argument("--profile", default=None, help="calibration profile JSON; shipped profile if omitted")
    p.add_argument("--n-points", type=int, default=1024)
    p.add_argument("--board", choices=("zcu104", "ultra96v2"), default="zcu104")
    p.add_argument("--width-bits", type=int, default=32)
    p.add_argument("--explore", action="store_true", help="also run a bounded design-space exploration")
    p.add_argument("--explore-limit", type=int, default=20)
    p.set_defaults(func=_cmd_accel)

    p = sub.add_parser("gen-pair", help="write a template/source/gt fixture")
    _add_common(p)
    p.add_argument("--template", default=None)
    p.add_argument("--angle", type=float, default=30.0)
    p.add_argument("--translation-bound", type=float, default=0.3)
    p.add_argument("--n-points", type=int, default=1024)
    p.set_defaults(func=_cmd_gen_pair)

    p = sub.add_parser("gen-corpus", help="write a synthetic OFF corpus")
    _add_common(p)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--vertices", type=int, default=512)
    p.set_defaults(func=_cmd_gen_corpus)

    p = sub.add_parser("gen-weights", help="write a seeded random weight blob")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, choices=(32, 64), default=64)
    p.add_argument("--qformat-n", type=int, default=0)
    p.set_defaults(func=_cmd_gen_weights)

    p = sub.add_parser("weights-info", help="inspect a weight blob header")
    p.add_argument("path")
    p.set_defaults(func=_cmd_weights_info)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, data.OffParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
