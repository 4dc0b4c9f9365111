"""Command-line entry point: ``run <config>``, ``plot <summary.csv> <out.svg>``, ``list-systems``.

Configuration files are flat ``key = value`` text; ``#`` starts a comment.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

from .errors import AdaptiveLQRError, ConfigError, InvalidValue, MalformedCsv, ParseError, UnknownBenchmark, UnknownKey
from .harness import AgentSpec, ExperimentConfig, auto_c, benchmark_names, benchmark_registry, run_experiment, write_report
from .agents import AGENT_KINDS
from .system import fmt

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

DEFAULTS = {
    "agents": "rbmle, ofu, ts",
    "T": "2000",
    "warmup": "10",
    "seeds": "200",
    "base_seed": "0",
    "delta": "0.05",
    "lambda": "1",
    "L": "1",
    "c": "auto",
    "alpha0": "1",
    "out_dir": "out",
}
KEYS = ("system", *DEFAULTS)


def _int(raw, key, line, minimum):
    try:
        v = int(raw)
    except ValueError:
        raise InvalidValue(f"{key} must be an integer, got {raw!r}", line) from None
    if v < minimum:
        raise InvalidValue(f"{key} must be at least {minimum}, got {v}", line)
    return v


def _float(raw, key, line):
    try:
        v = float(raw)
    except ValueError:
        raise InvalidValue(f"{key} must be a number, got {raw!r}", line) from None
    if not math.isfinite(v):
        raise InvalidValue(f"{key} must be finite, got {raw!r}", line)
    return v


def _list(raw):
    return [p.strip() for p in raw.split(",")]


def _variant_label(alpha0: float) -> str:
    text = repr(float(alpha0))
    return "rbmle_a" + (text[:-2] if text.endswith(".0") else text)


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text into a validated :class:`ExperimentConfig`.

    Missing keys take the values in :data:`DEFAULTS`; ``system`` is required.
    ``c = auto`` becomes twice the Frobenius norm of the benchmark's true
    parameters. A comma list for ``alpha0`` turns every ``rbmle`` entry into
    one variant per value, labelled like ``rbmle_a0.1``.

    Raises:
        UnknownKey, InvalidValue, ParseError: with the offending line number.
    """
    raw, where = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in KEYS:
            raise UnknownKey(f"unknown key {key!r}", lineno)
        if key in raw:
            raise ParseError(f"duplicate key {key!r} (first set on line {where[key]})", lineno)
        if not value:
            raise InvalidValue(f"empty value for {key!r}", lineno)
        raw[key], where[key] = value, lineno
    if "system" not in raw:
        raise ParseError("missing required key 'system'")
    vals = {**DEFAULTS, **raw}

    def line(key):
        return where.get(key)

    system = vals["system"]
    try:
        true_params, _ = benchmark_registry(system)
    except UnknownBenchmark:
        raise InvalidValue(f"unknown system {system!r}; known: {', '.join(benchmark_names())}",
                           line("system")) from None

    kinds = _list(vals["agents"])
    for k in kinds:
        if k not in AGENT_KINDS:
            raise InvalidValue(f"unknown agent {k!r}; known: {', '.join(AGENT_KINDS)}", line("agents"))
    if len(set(kinds)) != len(kinds):
        raise InvalidValue("agents are listed more than once", line("agents"))

    alphas = [_float(a, "alpha0", line("alpha0")) for a in _list(vals["alpha0"])]
    if any(a < 0 for a in alphas):
        raise InvalidValue("alpha0 must be nonnegative", line("alpha0"))
    if len(alphas) > 1 and "rbmle" not in kinds:
        raise InvalidValue("an alpha0 sweep needs the rbmle agent", line("alpha0"))
    if len(set(alphas)) != len(alphas):
        raise InvalidValue("alpha0 values must be distinct", line("alpha0"))
    agents = []
    for k in kinds:
        if k != "rbmle":
            agents.append(AgentSpec(k))
        elif len(alphas) == 1:
            agents.append(AgentSpec(k, alphas[0]))
        else:
            agents += [AgentSpec(k, a, _variant_label(a)) for a in alphas]

    delta = _float(vals["delta"], "delta", line("delta"))
    if not 0 < delta < 1:
        raise InvalidValue(f"delta must lie in (0, 1), got {delta}", line("delta"))
    lam = _float(vals["lambda"], "lambda", line("lambda"))
    L = _float(vals["L"], "L", line("L"))
    for key, v in (("lambda", lam), ("L", L)):
        if v <= 0:
            raise InvalidValue(f"{key} must be positive, got {v}", line(key))
    if vals["c"].lower() == "auto":
        c = auto_c(true_params)
    else:
        c = _float(vals["c"], "c", line("c"))
        if c <= 0:
            raise InvalidValue(f"c must be positive, got {c}", line("c"))

    try:
        return ExperimentConfig(
            system=system,
            agents=agents,
            T=_int(vals["T"], "T", line("T"), 1),
            warmup=_int(vals["warmup"], "warmup", line("warmup"), 0),
            seeds=_int(vals["seeds"], "seeds", line("seeds"), 1),
            base_seed=_int(vals["base_seed"], "base_seed", line("base_seed"), 0),
            delta=delta,
            lam=lam,
            L=L,
            c=c,
            out_dir=vals["out_dir"],
        )
    except ParseError:
        raise
    except ConfigError as exc:
        raise ParseError(str(exc)) from exc


def render_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` for configs built on a benchmark key."""
    if cfg.system is None or cfg.true_params is not None:
        raise ConfigError("only benchmark-based configs can be rendered")
    kinds = []
    for a in cfg.agents:
        if a.kind not in kinds:
            kinds.append(a.kind)
    alphas = [a.alpha0 for a in cfg.agents if a.kind == "rbmle"] or [1.0]
    c = cfg.c if cfg.c is not None else auto_c(cfg.resolve()[0])
    pairs = [
        ("system", cfg.system),
        ("agents", ", ".join(kinds)),
        ("T", cfg.T),
        ("warmup", cfg.warmup),
        ("seeds", cfg.seeds),
        ("base_seed", cfg.base_seed),
        ("delta", fmt(cfg.delta)),
        ("lambda", fmt(cfg.lam)),
        ("L", fmt(cfg.L)),
        ("c", fmt(c)),
        ("alpha0", ", ".join(fmt(a) for a in alphas)),
        ("out_dir", cfg.out_dir),
    ]
    return "".join(f"{k} = {v}\n" for k, v in pairs)


def cmd_run(config_path, out_dir=None, threads=None, stdout=None, stderr=None) -> int:
    """Run the experiment in ``config_path`` and write its CSVs.

    A relative ``out_dir`` is taken relative to the working directory.
    """
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = parse_config(Path(config_path).read_text())
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=stderr)
        return EXIT_CONFIG
    except AdaptiveLQRError as exc:
        print(f"error: {config_path}: {exc}", file=stderr)
        return EXIT_CONFIG
    if out_dir is not None:
        cfg.out_dir = str(out_dir)
    try:
        threads = int(threads) if threads is not None else None
        report = run_experiment(cfg, threads=threads)
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_CONFIG
    try:
        write_report(report, cfg.out_dir)
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=stderr)
        return EXIT_CONFIG
    for a in report.agents:
        med = fmt(a.median[-1]) if a.seeds else "n/a"
        print(f"{a.label}: median regret at T={cfg.T} = {med} "
              f"(failed {len(a.failures)}/{cfg.seeds}, diverged {len(a.diverged)})", file=stdout)
    if all(not a.seeds for a in report.agents):
        print("error: every trial failed", file=stderr)
        return EXIT_RUNTIME
    return EXIT_OK


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
_W, _H, _ML, _MR, _MT, _MB = 640, 400, 70, 130, 20, 50


def read_summary(text: str) -> dict[str, list[tuple[float, float]]]:
    """Median regret series per agent, in first-appearance order."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise MalformedCsv("summary is empty")
    header = [h.strip() for h in rows[0]]
    try:
        it, ia, im = header.index("t"), header.index("agent"), header.index("median")
    except ValueError:
        raise MalformedCsv(f"summary header needs t, agent and median columns, got {header}") from None
    series: dict[str, list] = {}
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise MalformedCsv(f"row {i} has {len(row)} fields, expected {len(header)}")
        try:
            t, med = float(row[it]), float(row[im])
        except ValueError:
            raise MalformedCsv(f"row {i} is not numeric") from None
        series.setdefault(row[ia], []).append((t, med))
    if not series:
        raise MalformedCsv("summary has no data rows")
    return series


def _coord(v: float) -> str:
    return f"{v:.2f}"


def render_svg(series: dict[str, list[tuple[float, float]]]) -> str:
    """Line chart of the series; points with non-finite values are left out."""
    pts = [(t, y) for s in series.values() for t, y in s if math.isfinite(t) and math.isfinite(y)]
    if not pts:
        raise MalformedCsv("no finite data to plot")
    t0, t1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    t1 = t1 if t1 > t0 else t0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def sx(t):
        return _ML + (t - t0) / (t1 - t0) * pw

    def sy(y):
        return _MT + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_ML}" y1="{_MT + ph}" x2="{_ML + pw}" y2="{_MT + ph}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + ph}" stroke="black"/>',
        f'<text x="{_ML + pw / 2:.2f}" y="{_H - 10}" text-anchor="middle" font-size="14">t</text>',
        f'<text x="15" y="{_MT + ph / 2:.2f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 15 {_MT + ph / 2:.2f})">regret</text>',
        f'<text x="{_ML}" y="{_MT + ph + 18}" text-anchor="middle" font-size="11">{t0:g}</text>',
        f'<text x="{_ML + pw}" y="{_MT + ph + 18}" text-anchor="middle" font-size="11">{t1:g}</text>',
        f'<text x="{_ML - 5}" y="{_MT + ph}" text-anchor="end" font-size="11">{y0:.4g}</text>',
        f'<text x="{_ML - 5}" y="{_MT + 4}" text-anchor="end" font-size="11">{y1:.4g}</text>',
    ]
    for i, (label, s) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{_coord(sx(t))},{_coord(sy(y))}" for t, y in s if math.isfinite(t) and math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = _MT + 15 + 18 * i
        out.append(f'<line x1="{_W - _MR + 10}" y1="{ly}" x2="{_W - _MR + 30}" y2="{ly}" stroke="{color}"/>')
        out.append(f'<text x="{_W - _MR + 35}" y="{ly + 4}" font-size="12">{_escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def cmd_plot(summary_path, svg_path) -> None:
    """Render median regret per agent from ``summary.csv`` to an SVG file.

    Raises:
        MalformedCsv: the summary is empty or unreadable; nothing is written.
    """
    svg = render_svg(read_summary(Path(summary_path).read_text()))
    Path(svg_path).write_text(svg)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="alqr", description="Adaptive LQ control experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out-dir", help="override out_dir from the config")
    p_plot = sub.add_parser("plot", help="draw median regret curves from summary.csv")
    p_plot.add_argument("summary")
    p_plot.add_argument("svg")
    sub.add_parser("list-systems", help="print the benchmark keys")
    args = parser.parse_args(argv)

    if args.command == "run":
        return cmd_run(args.config, out_dir=args.out_dir)
    if args.command == "plot":
        try:
            cmd_plot(args.summary, args.svg)
        except (OSError, MalformedCsv) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    for name in benchmark_names():
        print(name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
