"""Command-line front end.

Subcommands: run (one experiment, error-vs-iteration CSV), table1
(iteration-count table for the linear spiral), sweep (parameter sweeps),
plotdata (SVG plots from previously written CSVs), list-problems.
"""

import argparse
import csv
import glob
import json
import os
import sys

from . import runners
from . import table1 as t1
from .config import apply_overrides, from_file
from .errors import OscPararealError
from .problems import catalog_names, make_problem


def _fmt(x):
    return "%.17g" % float(x)


def _load_config(args):
    cfg = from_file(args.config)
    if args.override:
        cfg = apply_overrides(cfg, args.override)
    return cfg


def _ensure_out(args):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_run(args):
    cfg = _load_config(args)
    res = runners.run_experiment(cfg, workers=args.workers)
    out = _ensure_out(args)
    if out:
        path = os.path.join(out, "run_%s.csv" % res.spec.name)
        with_slow = res.slow_series is not None
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["iteration", "state_sup_error"]
            if with_slow:
                header.append("slow_sup_error")
            header += ["max_update", "wall_seconds", "fine_calls"]
            writer.writerow(header)
            for k in range(res.run.iterations + 1):
                row = [str(k), _fmt(res.state_series.errors[k])]
                if with_slow:
                    row.append(_fmt(res.slow_series.errors[k]))
                if k == 0:
                    row += ["", "", ""]
                else:
                    m = res.run.iteration_metrics[k - 1]
                    row += [_fmt(m["max_update"]), _fmt(m["wall_seconds"]),
                            str(m["fine_calls"])]
                writer.writerow(row)
        print("wrote %s" % path)
    print(json.dumps(res.summary(), indent=2, default=str))
    return 0


def cmd_table1(args):
    opts = {"tol": 0.1, "epsilons": list(t1.DEFAULT_EPSILONS),
            "proposed": True}
    for item in args.override:
        key, _, text = item.partition("=")
        if key not in opts:
            raise OscPararealError("unknown table option %r (have: %s)"
                                   % (key, ", ".join(sorted(opts))))
        opts[key] = json.loads(text)
    table = t1.build_table(epsilons=tuple(opts["epsilons"]),
                           tol=float(opts["tol"]),
                           include_proposed=bool(opts["proposed"]),
                           workers=args.workers)
    print(t1.format_table(table))
    out = _ensure_out(args)
    if out:
        path = os.path.join(out, "table1.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(t1.table_csv_rows(table))
        print("wrote %s" % path)
    return 0


def _parse_values(text):
    text = text.strip()
    if text.startswith("["):
        return json.loads(text)
    return [json.loads(part) for part in text.split(",") if part.strip()]


def cmd_sweep(args):
    cfg = _load_config(args)
    values = _parse_values(args.values)
    rows = runners.sweep_experiment(cfg, args.param, values,
                                    workers=args.workers)
    for row in rows:
        if row["status"] == "ok":
            print("%s=%-12s %s" % (args.param, row["value"],
                                   _fmt(row["state_error"])))
        else:
            print("%s=%-12s %s" % (args.param, row["value"], row["status"]))
    out = _ensure_out(args)
    if out:
        path = os.path.join(out, "sweep_%s.csv" % args.param.replace(".", "_"))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["parameter", "value", "status", "state_error",
                             "slow_error"])
            for row in rows:
                writer.writerow([
                    row["parameter"], _fmt(row["value"]), row["status"],
                    "" if row["state_error"] is None
                    else _fmt(row["state_error"]),
                    "" if row["slow_error"] is None
                    else _fmt(row["slow_error"])])
        print("wrote %s" % path)
    return 0


def _read_run_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    ks = [int(r["iteration"]) for r in rows]
    state = [float(r["state_sup_error"]) for r in rows]
    slow = None
    if rows and "slow_sup_error" in rows[0]:
        slow = [float(r["slow_sup_error"]) for r in rows]
    return ks, state, slow


def _plot_error_series(ax, ks, errs, label):
    ax.semilogy(ks, errs, "o-")
    ax.set_xlabel("iteration")
    ax.set_ylabel("sup error over coarse nodes")
    ax.set_title(label)


def _plot_sweep_csv(path, ax):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh) if r["status"] == "ok"
                and r["state_error"]]
    xs = [float(r["value"]) for r in rows]
    ys = [float(r["state_error"]) for r in rows]
    pts = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0]
    ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-")
    ax.set_xlabel(rows[0]["parameter"] if rows else "value")
    ax.set_ylabel("error")


def _plot_one_run(path, out, plt):
    """State panel on the left, slow panel on the right when present."""
    ks, state, slow = _read_run_csv(path)
    base = os.path.splitext(os.path.basename(path))[0]
    ncols = 2 if slow is not None else 1
    fig, axes = plt.subplots(1, ncols, figsize=(4.4 * ncols, 3.6),
                             squeeze=False)
    _plot_error_series(axes[0][0], ks, state, "%s: state" % base)
    if slow is not None:
        _plot_error_series(axes[0][1], ks, slow, "%s: slow" % base)
    fig.tight_layout()
    svg = os.path.join(out, base + ".svg")
    fig.savefig(svg)
    plt.close(fig)
    return svg


def _plot_run_pair(paths, out, plt):
    """Side-by-side state panels for two runs of the same problem, as
    produced by the two alignment rhs choices."""
    fig, axes = plt.subplots(1, 2, figsize=(8.8, 3.6))
    tags = ("(A)", "(B)")
    for ax, tag, path in zip(axes, tags, paths):
        ks, state, _ = _read_run_csv(path)
        base = os.path.splitext(os.path.basename(path))[0]
        _plot_error_series(ax, ks, state, "%s %s" % (tag, base))
    fig.tight_layout()
    svg = os.path.join(out, "pair_%s_%s.svg" % tuple(
        os.path.splitext(os.path.basename(p))[0] for p in paths))
    fig.savefig(svg)
    plt.close(fig)
    return svg


def cmd_plotdata(args):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = _ensure_out(args) or "."
    targets = list(args.files)
    if not targets:
        targets = sorted(glob.glob(os.path.join(out, "run_*.csv")))
        targets += sorted(glob.glob(os.path.join(out, "sweep_*.csv")))
    if not targets:
        print("no CSV files to plot in %s" % out, file=sys.stderr)
        return 2
    run_targets = []
    for path in targets:
        base = os.path.basename(path)
        if base.startswith("table1"):
            print("%s is tabular only; nothing to plot" % path)
            continue
        if base.startswith("sweep_"):
            fig, ax = plt.subplots(figsize=(5.0, 3.6))
            _plot_sweep_csv(path, ax)
            ax.set_title(os.path.splitext(base)[0])
            fig.tight_layout()
            svg = os.path.join(out, os.path.splitext(base)[0] + ".svg")
            fig.savefig(svg)
            plt.close(fig)
            print("wrote %s" % svg)
        else:
            run_targets.append(path)
            print("wrote %s" % _plot_one_run(path, out, plt))
    if len(run_targets) == 2 and args.files:
        print("wrote %s" % _plot_run_pair(run_targets, out, plt))
    return 0


def cmd_list_problems(args):
    for name in catalog_names():
        spec = make_problem(name)
        print("%-16s eps=%-8g T=%-8g H=%-6g K=%d mode=%-10s %s"
              % (name, spec.problem.epsilon, spec.T, spec.H, spec.K,
                 spec.mode, spec.description))
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="osc-parareal",
        description="parallel-in-time integration of highly oscillatory "
                    "ODEs with a multiscale coarse integrator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, config_required):
        if config_required:
            sp.add_argument("--config", required=True,
                            help="experiment config JSON")
        sp.add_argument("--workers", type=int, default=None,
                        help="parallel fine-propagation workers")
        sp.add_argument("--out", default=None,
                        help="directory for CSV/SVG output")
        sp.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="config override, repeatable")

    sp = sub.add_parser("run", help="run one experiment")
    common(sp, True)
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("table1", help="iteration counts on the linear "
                                       "spiral")
    common(sp, False)
    sp.set_defaults(fn=cmd_table1)

    sp = sub.add_parser("sweep", help="sweep one parameter")
    common(sp, True)
    sp.add_argument("--param", required=True,
                    help="H, eta, or a dotted config key")
    sp.add_argument("--values", required=True,
                    help="comma-separated or JSON list")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("plotdata", help="render SVG plots from CSVs")
    sp.add_argument("files", nargs="*", help="CSV files (default: scan "
                                             "--out)")
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_plotdata)

    sp = sub.add_parser("list-problems", help="show the catalog")
    sp.set_defaults(fn=cmd_list_problems)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except OscPararealError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
