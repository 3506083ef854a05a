"""Command-line driver: ``dfgconv {sweep-pump,jitter-hist,simulate,reconstruct,report}``.

Exit codes: 0 success, 1 usage error, 2 data failure, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import conversion as cv
from . import detection as det
from . import experiment as ex
from . import io
from . import quantum as qc
from . import svg
from . import tomography as tm
from .config import SCENARIOS, load_config
from .exceptions import (ConfigError, DegenerateInputError, DomainError, FitError,
                         IllPosedError, ParseError)

log = logging.getLogger("dfgconv")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
ROW_NAMES = {"initial": "rho_AB", "converted-AS": "rho^AS_AC'", "converted-SS": "rho^SS_AC'"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Run:
    """Collects outputs of one command and writes its manifest."""

    def __init__(self, args, cfg, command, tag=None):
        self.args, self.cfg, self.command = args, cfg, command
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.started = _now()
        self.outputs = []
        self.extra = {}
        self.tag = tag

    def path(self, name):
        p = self.out / name
        self.outputs.append(p.name)
        return p

    def finish(self):
        name = f"manifest_{self.command}" + (f"_{self.tag}" if self.tag else "") + ".json"
        record = {
            "command": self.command,
            "config_sha256": self.cfg.sha256,
            "config_source": self.cfg.source,
            "seed": self.args.seed,
            "tool_version": __version__,
            "started_utc": self.started,
            "finished_utc": _now(),
            "outputs": self.outputs,
            **self.extra,
        }
        io.write_json(self.out / name, record)
        return self.out / name


# -- sweep-pump ------------------------------------------------------------------

def cmd_sweep_pump(args, cfg):
    wf = cfg.workflow("sweep_pump")
    p_min = args.p_min if args.p_min is not None else wf.get("p_min_mW", 0.0)
    p_max = args.p_max if args.p_max is not None else wf.get("p_max_mW", 700.0)
    steps = args.steps if args.steps is not None else int(wf.get("steps", 701))
    if steps < 1 or p_min < 0 or p_max < p_min or (steps > 1 and p_max == p_min):
        raise UsageError(f"invalid sweep range [{p_min}, {p_max}] mW with {steps} steps")
    params = cfg.conversion
    powers = np.linspace(p_min, p_max, steps) * 1e-3
    data = cv.sweep(params, powers)
    if steps == 1:
        p_opt = powers[0]
        snr_opt = float(data["snr"][0])
    else:
        p_opt, snr_opt = cv.optimize_pump(params, p_min * 1e-3, p_max * 1e-3)
    marked = int(np.argmin(np.abs(powers - p_opt)))
    rows = [(p * 1e3, e, n, s, i == marked) for i, (p, e, n, s) in
            enumerate(zip(powers, data["efficiency"], data["noise_Hz"], data["snr"]))]
    run = Run(args, cfg, "sweep-pump")
    with open(run.path("sweep.csv"), "w", newline="") as fh:
        fh.write(io.to_csv_text(io.SWEEP_COLUMNS, rows))
    io.write_json(run.path("optimum.json"), {"P_opt_mW": p_opt * 1e3, "snr_opt": snr_opt,
                                             "signal_scale_Hz": params.signal_scale})
    if args.svg:
        text = svg.plot(powers * 1e3, {"conversion efficiency": data["efficiency"]},
                        {"background noise (Hz)": data["noise_Hz"]},
                        xlabel="pump power (mW)", left_label="conversion efficiency",
                        right_label="noise rate (Hz)", title="Efficiency and noise vs pump power",
                        vlines=[p_opt * 1e3])
        run.path("sweep.svg").write_text(text)
    run.extra.update({"P_opt_mW": p_opt * 1e3})
    run.finish()
    print(f"optimum pump power: {p_opt * 1e3:.3f} mW  (SNR {snr_opt:.6g})")
    return EXIT_OK


# -- jitter-hist -----------------------------------------------------------------

def _resolve_pairing(cfg, name):
    if name in cfg.pairings:
        return name, cfg.pairings[name]
    parts = name.split(":")
    if len(parts) != 2:
        raise UsageError(f"unknown pairing {name!r}; use one of {sorted(cfg.pairings)} or LABEL:LABEL")
    for p in parts:
        if p not in cfg.detectors:
            raise UsageError(f"unknown detector label {p!r}")
    return name.replace(":", "+"), tuple(parts)


def cmd_jitter_hist(args, cfg):
    wf = cfg.workflow("jitter_hist")
    names = list(cfg.pairings) if args.pairing == ["all"] else args.pairing
    pairings = [_resolve_pairing(cfg, n) for n in names]
    duration = float(wf.get("duration_s", 1.0))
    signal = float(wf.get("signal_events", 1e5)) / duration
    noise = float(wf.get("noise_events", 0.0)) / duration
    run = Run(args, cfg, "jitter-hist")
    seeds = np.random.SeedSequence(args.seed).spawn(len(pairings))
    fits = {}
    for (tag, (l1, l2)), ss in zip(pairings, seeds):
        d1, d2 = cfg.detector(l1), cfg.detector(l2)
        hist = det.simulate_tdc(signal, noise, d1, d2, cfg.tdc, duration, seed=ss)
        fit = det.fit_gaussian(hist)
        fits[tag] = (fit, det.pair_jitter_fwhm(d1, d2))
        io.write_histogram(run.path(f"hist_{tag}.csv"), hist)
        io.write_json(run.path(f"fit_{tag}.json"),
                      {**fit.as_record(), "detectors": [l1, l2],
                       "model_pair_fwhm_ps": det.pair_jitter_fwhm(d1, d2)})
        print(f"{tag:>12s}: fitted FWHM {fit.fwhm:7.1f} ps  (model {fits[tag][1]:.1f} ps)")
        if args.svg:
            fine = np.linspace(hist.edges[0], hist.edges[-1], 400)
            model = det.GaussianPeakFitter().fit(hist)
            per_bin = model.predict(fine)  # mass over fine bins, rescaled to TDC bins
            per_bin = (per_bin - model.background_) * (hist.widths[0] / np.diff(fine)[0]) + model.background_
            text = svg.plot(0.5 * (fine[1:] + fine[:-1]), {"Gaussian fit": per_bin},
                            markers={"TDC counts": (hist.centers, hist.counts)},
                            xlabel="delay (ps)", left_label="counts per bin",
                            title=f"Coincidence delay, {l1} + {l2}")
            run.path(f"hist_{tag}.svg").write_text(text)
    if args.window_report:
        widths = {tag: fwhm for tag, (_, fwhm) in fits.items()}
        best, worst = min(widths, key=widths.get), max(widths, key=widths.get)
        a_best = det.window_acceptance(widths[best], cfg.tdc.window_width)
        a_worst = det.window_acceptance(widths[worst], cfg.tdc.window_width)
        ratio = a_best / a_worst
        io.write_json(run.path("window_report.json"),
                      {"best": best, "worst": worst, "acceptance_best": a_best,
                       "acceptance_worst": a_worst, "ratio": ratio,
                       "window_ps": cfg.tdc.window_width})
        print(f"window acceptance ratio {best}/{worst}: {ratio:.3f}")
    run.finish()
    return EXIT_OK


# -- simulate --------------------------------------------------------------------

def simulation_settings(cfg, include_chsh=None):
    wf = cfg.workflow("simulate")
    settings = tm.standard_settings(wf.get("settings", "HVDARL"))
    if include_chsh if include_chsh is not None else wf.get("include_chsh", True):
        settings += qc.ChshSettings.standard().pairs()
    return settings


def cmd_simulate(args, cfg):
    if args.scenario not in cfg.scenarios:
        raise UsageError(f"invalid scenario {args.scenario!r}; choose from {sorted(cfg.scenarios)}")
    wf = cfg.workflow("simulate")
    duration = args.duration if args.duration is not None else float(wf.get("duration_s", 36000.0))
    if duration < 0:
        raise UsageError("duration must be >= 0")
    if duration == 0:
        log.warning("duration is 0: writing an all-zero count table")
    scen = cfg.scenarios[args.scenario]
    settings = simulation_settings(cfg)
    table = ex.run_tomography_counts(scen, settings, duration / len(settings),
                                     seed=args.seed, n_jobs=args.workers)
    run = Run(args, cfg, "simulate", tag=args.scenario)
    io.write_count_table(run.path(f"counts_{args.scenario}.csv"), table)
    pred = ex.predict_rates(scen)
    run.extra.update({"scenario": args.scenario, "duration_s": duration,
                      "signal_rate_Hz": pred.signal_coincidence_rate,
                      "noise_rate_Hz": pred.noise_coincidence_rate})
    run.finish()
    print(f"{args.scenario}: {int(table.counts.sum())} coincidences over {len(settings)} settings")
    return EXIT_OK


# -- reconstruct -----------------------------------------------------------------

def reconstruct_table(table, n_resamples, seed, tol, max_iter, n_jobs):
    res = tm.mle_reconstruct(table, tol=tol, max_iter=max_iter)
    report, _ = tm.bootstrap_metrics(table, n_resamples=n_resamples, seed=seed, tol=tol,
                                     max_iter=max_iter, n_jobs=n_jobs, reconstruction=res)
    return res, report


def cmd_reconstruct(args, cfg):
    wf = cfg.workflow("reconstruct")
    table = io.read_count_table(args.counts_csv)
    label = args.label or Path(args.counts_csv).stem.removeprefix("counts_")
    n_res = args.n_resamples or int(wf.get("n_resamples", 1000))
    tol = float(wf.get("tol", 1e-10))
    max_iter = int(wf.get("max_iter", 10_000))
    res, report = reconstruct_table(table, n_res, args.seed, tol, max_iter, args.workers)
    record = {"label": label, **report.as_record(), "log_likelihood": res.log_likelihood,
              "iterations": res.iterations, "converged": res.converged,
              "n_resamples": n_res, "total_counts": float(table.counts.sum())}
    try:
        record["s_counts"] = tm.chsh_from_counts(table)
    except (DomainError, DegenerateInputError):
        pass
    run = Run(args, cfg, "reconstruct", tag=label)
    io.write_json(run.path(f"metrics_{label}.json"), record)
    io.write_matrix(run.path(f"rho_{label}.txt"), res.rho)
    run.extra.update({"label": label, "counts_csv": str(args.counts_csv),
                      "metrics_file": f"metrics_{label}.json"})
    run.finish()
    print(f"{label}: F = {report.fidelity.value:.3f} +- {report.fidelity.sigma:.3f}  "
          f"EOF = {report.eof.value:.3f} +- {report.eof.sigma:.3f}  "
          f"purity = {report.purity.value:.3f} +- {report.purity.sigma:.3f}")
    print(f"{' ' * len(label)}  S(optimal) = {report.s_parameter.value:.3f} +- {report.s_parameter.sigma:.3f}  "
          f"S(fixed) = {report.s_fixed.value:.3f} +- {report.s_fixed.sigma:.3f}"
          + (f"  S(counts) = {record['s_counts']:.3f}" if "s_counts" in record else ""))
    if not res.converged:
        log.error("MLE did not converge within %d iterations", max_iter)
        return EXIT_NUMERIC
    return EXIT_OK


# -- report ----------------------------------------------------------------------

def _manifest_paths(items):
    out = []
    for item in items:
        p = Path(item)
        out.extend(sorted(p.glob("manifest_reconstruct_*.json")) if p.is_dir() else [p])
    return out


def build_report(manifest_paths):
    """Rows of (label, record-or-None, reason) for each manifest."""
    rows = []
    for mp in manifest_paths:
        try:
            manifest = json.loads(Path(mp).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            rows.append((Path(mp).stem, None, f"unreadable manifest: {exc}"))
            continue
        label = manifest.get("label", Path(mp).stem)
        mfile = manifest.get("metrics_file")
        if not mfile:
            rows.append((label, None, "manifest lists no metrics file"))
            continue
        metrics_path = Path(mp).parent / mfile
        if not metrics_path.exists():
            rows.append((label, None, f"missing metric file {mfile}"))
            continue
        rows.append((label, json.loads(metrics_path.read_text()), ""))
    order = {name: i for i, name in enumerate(SCENARIOS)}
    rows.sort(key=lambda r: (order.get(r[0], len(order)), r[0]))
    return rows


def cmd_report(args, cfg):
    paths = _manifest_paths(args.manifests)
    if not paths:
        raise UsageError("report needs at least one manifest")
    rows = build_report(paths)
    cols = ("fidelity", "eof", "purity", "s_parameter")
    heads = ("F", "EOF", "purity", "S")
    csv_rows, lines, missing = [], [], []
    lines.append(f"{'':14s}" + "".join(f"{h:>16s}" for h in heads))
    for label, rec, why in rows:
        name = ROW_NAMES.get(label, label)
        if rec is None:
            missing.append((label, why))
            lines.append(f"{name:14s}  (absent: {why})")
            continue
        cells = [(rec[c], rec[f"{c}_sigma"]) for c in cols]
        csv_rows.append((name, *[v for cell in cells for v in cell]))
        lines.append(f"{name:14s}" + "".join(f"{f'{v:.2f} +- {s:.2f}':>16s}" for v, s in cells))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ("state",) + tuple(x for h in heads for x in (h, f"{h}_sigma"))
    with open(out / "table.csv", "w", newline="") as fh:
        fh.write(io.to_csv_text(header, csv_rows))
    (out / "table.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    if missing and args.strict:
        return EXIT_DATA
    return EXIT_OK


# -- entry point -----------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration (default: bundled reference constants)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--svg", action="store_true", help="also write SVG plots")

    parser = _Parser(prog="dfgconv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sweep-pump", parents=[common], help="efficiency / noise / SNR vs pump power")
    p.add_argument("--p-min", type=float, help="mW")
    p.add_argument("--p-max", type=float, help="mW")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_sweep_pump)

    p = sub.add_parser("jitter-hist", parents=[common], help="simulate and fit TDC histograms")
    p.add_argument("--pairing", nargs="+", default=["all"],
                   help="configured pairing names, LABEL:LABEL, or 'all'")
    p.add_argument("--window-report", action="store_true")
    p.set_defaults(func=cmd_jitter_hist)

    p = sub.add_parser("simulate", parents=[common], help="simulate a tomography count table")
    p.add_argument("--scenario", required=True)
    p.add_argument("--duration", type=float, help="total integration time in seconds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", parents=[common], help="MLE reconstruction with bootstrap errors")
    p.add_argument("counts_csv")
    p.add_argument("--label")
    p.add_argument("--n-resamples", type=int)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("report", parents=[common], help="consolidate reconstruct runs into one table")
    p.add_argument("manifests", nargs="+", help="reconstruct manifests or directories holding them")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"dfgconv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"dfgconv: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, IllPosedError, OSError) as exc:
        print(f"dfgconv: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FitError, DegenerateInputError, DomainError, np.linalg.LinAlgError) as exc:
        print(f"dfgconv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
