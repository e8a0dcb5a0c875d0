"""Command-line entry point.

Subcommands: phosphenize images, run ideal-observer simulation sweeps,
analyze trial logs (ANOVA + post hoc + acuity + box-plot series), serve the
live session service, and benchmark the frame pipeline.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acuity import estimate_acuity
from .frames import Frame, HeadPose, read_pgm, write_pgm
from .phosphenes import (
    Condition,
    build_phosphene_map,
    paper_conditions,
    phosphenize,
    resolve_condition,
)
from .session import (
    IdealResponder,
    block_report,
    read_trial_log,
    run_block,
    summarize,
    write_summary,
    write_trial_log,
)
from .stats import FactorialData, anova2, significance_stars, tukey_hsd
from .stimuli import TestFamily

DEFAULT_TRIALS = 24
DEFAULT_SRC_PX_PER_DEG = 3.0


@dataclass
class RunConfig:
    conditions: list[Condition] = field(default_factory=lambda: list(paper_conditions().values()))
    tests: list[TestFamily] = field(default_factory=lambda: list(TestFamily))
    trials_per_block: int = DEFAULT_TRIALS
    seed: int = 0
    out_dir: Path = Path("out")
    src_px_per_deg: float = DEFAULT_SRC_PX_PER_DEG
    subjects: int = 1
    timing: dict | None = None
    condition_order: str = "given"  # or "shuffled" per subject

    _ORDERS = ("given", "shuffled")

    def __post_init__(self):
        if not self.conditions:
            raise ValueError("need at least one condition")
        if not self.tests:
            raise ValueError("need at least one test")
        if self.trials_per_block < 1:
            raise ValueError("trials_per_block must be >= 1")
        if self.subjects < 1:
            raise ValueError("subjects must be >= 1")
        if self.condition_order not in self._ORDERS:
            raise ValueError(f"condition_order must be one of {self._ORDERS}")


def _parse_conditions(text: str) -> list[Condition]:
    return [resolve_condition(tok.strip()) for tok in text.split(",") if tok.strip()]


def _parse_tests(text: str) -> list[TestFamily]:
    return [TestFamily(tok.strip()) for tok in text.split(",") if tok.strip()]


def config_from_args(args) -> RunConfig:
    """Config file first (same keys as the flags), then flag overrides."""
    doc = {}
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())

    conditions = None
    if doc.get("conditions"):
        conditions = [resolve_condition(c) for c in doc["conditions"]]
    if getattr(args, "conditions", None):
        conditions = _parse_conditions(args.conditions)
    if getattr(args, "phosphenes", None) or getattr(args, "fov", None):
        if not (args.phosphenes and args.fov):
            raise ValueError("--phosphenes and --fov must be given together")
        conditions = [Condition(args.phosphenes, args.fov)]

    tests = None
    if doc.get("tests"):
        tests = [TestFamily(t) for t in doc["tests"]]
    if getattr(args, "tests", None):
        tests = _parse_tests(args.tests)

    kwargs = {}
    if conditions is not None:
        kwargs["conditions"] = conditions
    if tests is not None:
        kwargs["tests"] = tests
    for key, attr in [("trials_per_block", "trials"), ("seed", "seed"),
                      ("src_px_per_deg", "src_px_per_deg"), ("subjects", "subjects"),
                      ("condition_order", "condition_order")]:
        if doc.get(key) is not None:
            kwargs[key] = doc[key]
        if getattr(args, attr, None) is not None:
            kwargs[key] = getattr(args, attr)
    if doc.get("out_dir"):
        kwargs["out_dir"] = Path(doc["out_dir"])
    if getattr(args, "out", None):
        kwargs["out_dir"] = Path(args.out)
    if doc.get("timing"):
        kwargs["timing"] = doc["timing"]
    return RunConfig(**kwargs)


# ---------------------------------------------------------------------------
# phosphenize


def _load_image(path: Path, px_per_deg: float) -> Frame:
    if path.suffix.lower() == ".pgm":
        return read_pgm(path, px_per_deg=None if _pgm_has_calibration(path) else px_per_deg)
    from PIL import Image

    img = Image.open(path).convert("L")
    pixels = np.asarray(img, dtype=np.float64) / 255.0
    return Frame(img.width, img.height, px_per_deg, pixels)


def _pgm_has_calibration(path: Path) -> bool:
    head = path.open("rb").read(4096)
    return b"px_per_deg" in head


def _write_image(path: Path, frame: Frame, png: bool) -> None:
    if png:
        from PIL import Image

        Image.fromarray(frame.to_u8(), mode="L").save(path.with_suffix(".png"))
    else:
        write_pgm(path.with_suffix(".pgm"), frame)


def cmd_phosphenize(args) -> int:
    cfg = config_from_args(args)
    inputs = []
    src = Path(args.input)
    if src.is_dir():
        inputs = sorted(p for p in src.iterdir()
                        if p.suffix.lower() in (".pgm", ".png", ".jpg", ".jpeg", ".bmp"))
        if not inputs:
            raise FileNotFoundError(f"no images in {src}")
    elif src.exists():
        inputs = [src]
    else:
        raise FileNotFoundError(f"input not found: {src}")

    out_dir = Path(args.out or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    pose = HeadPose(args.yaw, args.pitch)
    for path in inputs:
        frame = _load_image(path, cfg.src_px_per_deg)
        for cond in cfg.conditions:
            percept = phosphenize(frame, pose, cond, args.out_px_per_deg)
            name = f"{path.stem}_{cond.name}"
            _write_image(out_dir / name, percept, args.png)
            print(f"{path.name} -> {name}.{'png' if args.png else 'pgm'}")
    return 0


# ---------------------------------------------------------------------------
# simulate


def block_seed(master: int, subject: int, test: TestFamily, cond: Condition) -> int:
    """Stable per-block seed derived from the master seed."""
    key = f"{subject}|{test.value}|{cond.name}"
    h = 1469598103934665603  # FNV-1a 64-bit
    for ch in key.encode():
        h = ((h ^ ch) * 1099511628211) % (1 << 64)
    return (master * 0x9E3779B97F4A7C15 + h) % (1 << 63)


def cmd_simulate(args) -> int:
    cfg = config_from_args(args)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for subject in range(cfg.subjects):
        session_id = f"S{subject:02d}"
        conditions = list(cfg.conditions)
        if cfg.condition_order == "shuffled":
            np.random.default_rng(block_seed(cfg.seed, subject, TestFamily.LIGHT,
                                             conditions[0])).shuffle(conditions)
        for test in cfg.tests:
            for cond in conditions:
                seed = block_seed(cfg.seed, subject, test, cond)
                result = run_block(
                    test, cond, n_trials=cfg.trials_per_block,
                    responder=IdealResponder(), seed=seed,
                    session_id=session_id, timing=cfg.timing)
                stem = f"{session_id}_{test.value}_{cond.name}"
                write_trial_log(out / f"{stem}.csv", result.records)
                doc = block_report(result.records, aborted=result.aborted)
                reports.append(doc)
                perf = doc["summary"]["performance_pct"]
                print(f"{stem}: performance {perf:.1f}%")
    write_summary(out / "summary.json", {"blocks": reports, "seed": cfg.seed})
    print(f"wrote {len(reports)} blocks to {out}")
    return 0


# ---------------------------------------------------------------------------
# analyze


def _condition_factors(label: str) -> tuple[int, float]:
    cond = resolve_condition(label)
    return cond.phosphene_count, cond.fov_deg


def collect_block_rows(paths) -> list[dict]:
    rows = []
    for path in paths:
        records = read_trial_log(path)
        if not records:
            continue
        by_block: dict[tuple, list] = {}
        for r in records:
            by_block.setdefault(
                (r.session_id, r.test_family, r.condition_label), []).append(r)
        for (sid, test, cond_label), recs in sorted(by_block.items()):
            s = summarize(recs)
            count, fov = _condition_factors(cond_label)
            row = {
                "session": sid, "test": test.value, "condition": cond_label,
                "resolution": count, "fov": fov,
                "performance": s.performance_pct, "mean_rt_s": s.mean_rt_s,
                "n_trials": s.n_trials,
            }
            if test == TestFamily.LANDOLT:
                row["acuity_logmar"] = estimate_acuity(recs).logmar
            rows.append(row)
    if not rows:
        raise ValueError("no trial records found in the given logs")
    return rows


def build_factorial(rows: list[dict], dv: str) -> FactorialData:
    resolutions = sorted({r["resolution"] for r in rows})
    fovs = sorted({r["fov"] for r in rows})
    cells = []
    for res in resolutions:
        row_cells = []
        for fov in fovs:
            vals = [r[dv] for r in rows
                    if r["resolution"] == res and r["fov"] == fov
                    and r[dv] is not None]
            row_cells.append(vals)
        cells.append(row_cells)
    return FactorialData(resolutions, fovs, cells,
                         factor_a="resolution", factor_b="fov")


def quartiles(values) -> tuple[float, float, float]:
    """25/50/75th percentiles with linear interpolation."""
    q = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75],
                      method="linear")
    return float(q[0]), float(q[1]), float(q[2])


def _anova_text(table, title: str) -> str:
    def num(x, width, spec=".4f"):
        if x is None or (isinstance(x, float) and math.isnan(x)):
            return " " * width
        if isinstance(x, float) and math.isinf(x):
            return f"{'inf':>{width}}"
        return f"{x:{width}{spec}}"

    lines = [title, f"{'source':<16}{'SS':>14}{'df':>6}{'MS':>14}{'F':>12}{'p':>14}  sig"]
    for name in ("A", "B", "A:B", "residual", "total"):
        r = table.rows[name]
        label = {"A": table.factor_a, "B": table.factor_b,
                 "A:B": f"{table.factor_a}:{table.factor_b}"}.get(name, name)
        stars = significance_stars(r.p) if not math.isnan(r.p) else ""
        lines.append(f"{label:<16}{r.sum_sq:14.4f}{r.df:>6}"
                     f"{num(r.mean_sq, 14)}{num(r.F, 12)}{num(r.p, 14, '.6g')}  {stars}")
    return "\n".join(lines)


def analyze_blocks(rows: list[dict]) -> tuple[dict, str]:
    """ANOVA + post hoc per test and dependent variable, plus acuity table."""
    doc: dict = {"tests": {}}
    text: list[str] = []
    tests = sorted({r["test"] for r in rows})
    for test in tests:
        trows = [r for r in rows if r["test"] == test]
        entry: dict = {}
        for dv in ("performance", "mean_rt_s"):
            vals = [r for r in trows if r[dv] is not None]
            if not vals:
                continue
            data = build_factorial(vals, dv)
            if data.cell_n < 2 or not data.is_balanced():
                entry[dv] = {"error": "need >= 2 balanced observations per cell "
                                      "(run simulate with --subjects >= 2)"}
                continue
            table = anova2(data)
            labels = sorted({r["condition"] for r in vals})
            groups = [[r[dv] for r in vals if r["condition"] == lab] for lab in labels]
            tuk = tukey_hsd(groups, labels=labels)
            entry[dv] = {"anova": table.as_dict(), "tukey": tuk.as_dict()}
            text.append(_anova_text(table, f"== {test} / {dv} =="))
            text.append("pairwise (Tukey HSD):")
            for c in tuk.comparisons:
                text.append(f"  {c.group_i} vs {c.group_j}: diff {c.mean_diff:+.4f}  "
                            f"q {c.q_stat:.3f}  p {c.p_adj:.4g} {significance_stars(c.p_adj)}")
            text.append("")
        if test == TestFamily.LANDOLT.value:
            acuity_table = {}
            for cond in sorted({r["condition"] for r in trows}):
                vals = [r["acuity_logmar"] for r in trows if r["condition"] == cond]
                acuity_table[cond] = {"mean_logmar": float(np.mean(vals)),
                                      "sd_logmar": float(np.std(vals, ddof=1)) if len(vals) > 1 else None,
                                      "n": len(vals)}
            entry["acuity"] = acuity_table
            text.append("== acuity (logMAR) per condition ==")
            for cond, st in acuity_table.items():
                sd = f" +- {st['sd_logmar']:.3f}" if st["sd_logmar"] is not None else ""
                text.append(f"  {cond}: {st['mean_logmar']:.3f}{sd} (n={st['n']})")
            text.append("")
        doc["tests"][test] = entry
    return doc, "\n".join(text)


def boxplot_series(rows: list[dict], dv: str) -> str:
    """CSV series for box plots: one row per (test, condition)."""
    out = ["test,condition,n,min,q25,median,q75,max,mean,sd"]
    for test in sorted({r["test"] for r in rows}):
        for cond in sorted({r["condition"] for r in rows if r["test"] == test}):
            vals = [r[dv] for r in rows
                    if r["test"] == test and r["condition"] == cond
                    and r[dv] is not None]
            if not vals:
                continue
            arr = np.asarray(vals, dtype=np.float64)
            q25, med, q75 = quartiles(arr)
            sd = float(np.std(arr, ddof=1)) if arr.size > 1 else ""
            out.append(f"{test},{cond},{arr.size},{arr.min()},{q25},{med},{q75},"
                       f"{arr.max()},{arr.mean()},{sd}")
    return "\n".join(out) + "\n"


def cmd_analyze(args) -> int:
    paths = []
    for pat in args.logs:
        p = Path(pat)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.csv")))
        elif p.exists():
            paths.append(p)
        else:
            raise FileNotFoundError(f"log not found: {pat}")
    rows = collect_block_rows(paths)
    doc, text = analyze_blocks(rows)

    out = Path(args.out or "analysis")
    out.mkdir(parents=True, exist_ok=True)
    write_summary(out / "analysis.json", doc)
    (out / "report.txt").write_text(text)
    for dv in ("performance", "mean_rt_s"):
        (out / f"boxplot_{dv}.csv").write_text(boxplot_series(rows, dv))
    print(text)
    print(f"analysis written to {out}")
    return 0


# ---------------------------------------------------------------------------
# bench


def bench_pipeline(phosphene_count: int = 1000, fov_deg: float = 20.0,
                   out_side_px: int = 512, seconds: float = 2.0,
                   seed: int = 0) -> float:
    """Steady-state single-threaded frames per second of the full pipeline."""
    cond = Condition(phosphene_count, fov_deg)
    rng = np.random.default_rng(seed)
    side = int(fov_deg * DEFAULT_SRC_PX_PER_DEG * 2)
    src = Frame(side, side, DEFAULT_SRC_PX_PER_DEG, rng.random((side, side)))
    out_ppd = out_side_px / fov_deg
    poses = [HeadPose(float(x), float(y))
             for x, y in rng.uniform(-2, 2, size=(64, 2))]
    # warm caches (map, sampling plan, splat kernels)
    phosphenize(src, poses[0], cond, out_ppd)
    n = 0
    t0 = time.perf_counter()
    while True:
        phosphenize(src, poses[n % len(poses)], cond, out_ppd)
        n += 1
        elapsed = time.perf_counter() - t0
        if elapsed >= seconds:
            return n / elapsed


def cmd_bench(args) -> int:
    fps = bench_pipeline(args.phosphenes or 1000, args.fov or 20.0,
                         args.out_px, args.seconds)
    print(f"phosphenize: {fps:.1f} frames/s "
          f"({args.phosphenes or 1000} phosphenes, {args.out_px}x{args.out_px} output)")
    return 0


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = config_from_args(args)
    host, _, port = args.bind.partition(":")
    app = create_app(cfg)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8765),
                ws_ping_interval=5.0, ws_ping_timeout=5.0, log_level="warning")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spvbench",
                                     description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--conditions", help="comma list: C1..C6 or count@fov")
        p.add_argument("--phosphenes", type=int, help="ad-hoc condition: count")
        p.add_argument("--fov", type=float, help="ad-hoc condition: field of view (deg)")
        p.add_argument("--tests", help="comma list: light,time,location,motion,landolt")
        p.add_argument("--trials", type=int, help="trials per block (default 24)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--src-px-per-deg", dest="src_px_per_deg", type=float,
                       help="source calibration (default 3)")
        p.add_argument("--subjects", type=int, help="virtual subjects per sweep")
        p.add_argument("--condition-order", dest="condition_order",
                       choices=["given", "shuffled"],
                       help="condition order within a subject (default given)")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("phosphenize", help="render images as phosphene percepts")
    p.add_argument("input", help="image file or directory (PGM/PNG)")
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--pitch", type=float, default=0.0)
    p.add_argument("--out-px-per-deg", dest="out_px_per_deg", type=float, default=12.0)
    p.add_argument("--png", action="store_true", help="write PNG instead of PGM")
    add_common(p)
    p.set_defaults(func=cmd_phosphenize)

    p = sub.add_parser("simulate", help="run the ideal-observer experiment sweep")
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="ANOVA/Tukey + acuity report from trial logs")
    p.add_argument("logs", nargs="+", help="trial log CSVs or directories")
    p.add_argument("--out", help="output directory (default ./analysis)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("serve", help="run the live session websocket service")
    p.add_argument("--bind", default="127.0.0.1:8765")
    add_common(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="frame pipeline throughput")
    p.add_argument("--phosphenes", type=int, default=1000)
    p.add_argument("--fov", type=float, default=20.0)
    p.add_argument("--out-px", dest="out_px", type=int, default=512)
    p.add_argument("--seconds", type=float, default=2.0)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
