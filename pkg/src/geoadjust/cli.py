"""Command-line driver.

``geoadjust <command> --config run.yaml --output DIR`` with commands ``run``,
``convergence``, ``blowup-probe``, ``energy-audit`` and ``lemma-check``.
Every file is written below ``DIR``; the effective configuration is echoed to
``DIR/config.yaml``.

Exit status: 0 success, 2 configuration error, 3 numerical divergence
(outputs up to the failure are still written), 1 any other failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .checkpoint import write_checkpoint
from .config import RunConfig, load_config
from .errors import ConfigError, DivergenceError, GeoadjustError
from .integrate import Sample, Trajectory, run
from .monitor import (
    alpha_convergence,
    anisotropic_lemma_check,
    blowup_probe,
    cancellation_audit,
    fit_small_data_constant,
    growth_constant,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

CSV_COLUMNS = ("t", "normL2_u", "normL2_v", "normL2_T", "normL2_w", "Y", "F", "G", "K",
               "budget_residual")
COMMANDS = ("run", "convergence", "blowup-probe", "energy-audit", "lemma-check")


def fmt(value) -> str:
    """Locale-free text for summaries and CSV cells."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    if isinstance(value, (list, tuple)):
        return ",".join(fmt(v) for v in value)
    if value is None:
        return "none"
    return str(value).replace("\n", " ")


def write_summary(path: Path, items: Iterable[tuple[str, object]]) -> None:
    path.write_text("".join(f"{k} = {fmt(v)}\n" for k, v in items))


# ---------------------------------------------------------------------------
# time-series runs


class SeriesWriter:
    """Streams samples to CSV and checkpoints as they are produced."""

    def __init__(self, out: Path, cfg: RunConfig):
        self.out = out
        self.cfg = cfg
        self.csv = open(out / "timeseries.csv", "w", newline="")
        self.csv.write(",".join(CSV_COLUMNS) + "\n")
        self.e0: Optional[float] = None
        self.index = 0
        self.every = cfg.output["checkpoint_every"]
        if self.every:
            (out / "checkpoints").mkdir(exist_ok=True)
        self.w_bounds_hold = True

    def __call__(self, sample: Sample) -> None:
        rep = sample.report
        if self.e0 is None:
            self.e0 = sample.energy
        residual = sample.energy + 2.0 * sample.dissipated - self.e0
        n = rep.norms
        row = (sample.t, rep.normL2("u"), rep.normL2("v"), rep.normL2("T"), rep.normL2("w"),
               rep.Y, rep.F, rep.G, rep.K, residual)
        self.csv.write(",".join("%.17g" % float(x) for x in row) + "\n")
        # |w| <= |u_x| and |w_x| <= |u_xx|, with round-off slack
        slack = 1e-13 * (1.0 + n["u"] + n["uxx"])
        if n["w"] > n["ux"] + slack or n["wx"] > n["uxx"] + slack:
            self.w_bounds_hold = False
        if self.every and sample.state is not None and self.index % self.every == 0:
            write_checkpoint(sample.state, self.out / "checkpoints" / f"state_{self.index:06d}.ckpt",
                             self.cfg.params, self.cfg.system.value)
        self.index += 1

    def close(self) -> None:
        self.csv.close()


def _simulate(cfg: RunConfig, out: Path) -> tuple[Trajectory, SeriesWriter]:
    state = cfg.initial_condition.build(cfg.params.m)
    writer = SeriesWriter(out, cfg)
    try:
        traj = run(state, cfg.params, cfg.system, cfg.stepper, callback=writer)
    finally:
        writer.close()
    last = traj.final
    if cfg.output["final_checkpoint"] and last.state is not None:
        write_checkpoint(last.state, out / "final.ckpt", cfg.params, cfg.system.value)
    return traj, writer


def _run_items(cfg: RunConfig, traj: Trajectory, writer: SeriesWriter) -> list:
    first, last = traj.samples[0], traj.final
    e0 = first.energy
    residuals = [abs(s.energy + 2.0 * s.dissipated - e0) for s in traj.samples]
    return [
        ("system", cfg.system.value),
        ("m", cfg.params.m),
        ("samples", len(traj.samples)),
        ("t_final", last.t),
        ("diverged", traj.diverged),
        ("failure", traj.failure),
        ("Y_initial", first.report.Y),
        ("Y_final", last.report.Y),
        ("energy_initial", e0),
        ("energy_final", last.energy),
        ("budget_residual_max", max(residuals)),
        ("budget_residual_max_relative", max(residuals) / e0 if e0 > 0 else 0.0),
        ("w_bounds_hold", writer.w_bounds_hold),
    ]


def cmd_run(cfg: RunConfig, out: Path) -> int:
    traj, writer = _simulate(cfg, out)
    write_summary(out / "summary.txt", [("command", "run")] + _run_items(cfg, traj, writer))
    return _divergence_status(traj.diverged, traj.failure)


def cmd_energy_audit(cfg: RunConfig, out: Path) -> int:
    traj, writer = _simulate(cfg, out)
    worst = {}
    for s in traj.samples:
        audit = cancellation_audit(s.state, cfg.params)
        scale = max(audit.pop("Y"), 1e-300)
        for key, val in audit.items():
            worst[key] = max(worst.get(key, 0.0), val / scale)
    items = [("command", "energy-audit")] + _run_items(cfg, traj, writer)
    items += [(f"audit_{k}_max_relative", v) for k, v in worst.items()]
    items.append(("growth_constant", growth_constant(traj)))
    n = cfg.audit["small_data_samples"]
    if n:
        fit = fit_small_data_constant(cfg.params, samples=n, seed=cfg.audit["seed"])
        items += [("small_data_constant", fit.constant), ("small_data_threshold", fit.threshold),
                  ("small_data_samples", fit.samples)]
    write_summary(out / "summary.txt", items)
    return _divergence_status(traj.diverged, traj.failure)


# ---------------------------------------------------------------------------
# studies


def cmd_convergence(cfg: RunConfig, out: Path) -> int:
    c = cfg.convergence
    u0 = cfg.initial_condition.build(cfg.params.m).u
    res = alpha_convergence(u0, cfg.params, c["alphas"], c["T"], dt=c["dt"],
                            min_samples=c["min_samples"])
    with open(out / "convergence.csv", "w", newline="") as fh:
        fh.write("alpha,error\n")
        for a, e in zip(res.alphas, res.errors):
            fh.write("%.17g,%.17g\n" % (a, e))
    diverged = any(res.diverged)
    write_summary(out / "summary.txt", [
        ("command", "convergence"),
        ("m", cfg.params.m),
        ("T", c["T"]),
        ("alphas", res.alphas),
        ("errors", res.errors),
        ("fitted_rate", res.fitted_rate),
        ("rate_defined", res.rate_defined),
        ("monotone", res.monotone),
        ("diverged", diverged),
    ])
    return _divergence_status(diverged, "an alpha run diverged")


def cmd_blowup(cfg: RunConfig, out: Path) -> int:
    b = cfg.blowup
    u0 = cfg.initial_condition.build(cfg.params.m).u
    res = blowup_probe(u0, cfg.params, b["alphas"], b["Tstar"], dt=b["dt"],
                       min_samples=b["min_samples"], floor=b["floor"])
    with open(out / "blowup.csv", "w", newline="") as fh:
        fh.write("alpha,B,energy_bound\n")
        for a, v, bound in zip(res.alphas, res.B, res.energy_bounds):
            fh.write("%.17g,%.17g,%.17g\n" % (a, v, bound))
    write_summary(out / "summary.txt", [
        ("command", "blowup-probe"),
        ("m", cfg.params.m),
        ("Tstar", b["Tstar"]),
        ("alphas", res.alphas),
        ("B", res.B),
        ("extrapolated_limit", res.extrapolated_limit),
        ("limit_stderr", res.limit_stderr),
        ("exponent", res.exponent),
        ("slope_coefficient", res.slope_coefficient),
        ("floor", res.floor),
        ("verdict", res.verdict),
        ("bound_holds", res.bound_holds),
        ("resolution_failure", res.resolution_failure),
        ("failed_alphas", list(res.failed_alphas)),
    ])
    return _divergence_status(res.resolution_failure, "a regularized run diverged")


def cmd_lemma(cfg: RunConfig, out: Path) -> int:
    lm = cfg.lemma
    res = anisotropic_lemma_check(lm["trials"], lm["m"], lm["seed"], oversample=lm["oversample"])
    with open(out / "lemma.csv", "w", newline="") as fh:
        fh.write("trial,ratio1_running_max,ratio2_running_max\n")
        for i, (r1, r2) in enumerate(zip(res.ratio1_history, res.ratio2_history), 1):
            fh.write("%d,%.17g,%.17g\n" % (i, r1, r2))
    write_summary(out / "summary.txt", [
        ("command", "lemma-check"),
        ("trials", res.trials),
        ("m", res.m),
        ("seed", lm["seed"]),
        ("ratio1_max", res.ratio1_max),
        ("ratio2_max", res.ratio2_max),
    ])
    return EXIT_OK


HANDLERS = {
    "run": cmd_run,
    "convergence": cmd_convergence,
    "blowup-probe": cmd_blowup,
    "energy-audit": cmd_energy_audit,
    "lemma-check": cmd_lemma,
}


def _divergence_status(diverged: bool, message: Optional[str]) -> int:
    if diverged:
        print(f"geoadjust: numerical divergence: {message}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoadjust", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "run": "integrate one system and write the time series",
        "convergence": "alpha -> 0 convergence sweep of the hydrostatic-damped system",
        "blowup-probe": "extrapolate alpha^2 sup |u_z|^2 over a Voigt sweep",
        "energy-audit": "run plus cancellation, budget and growth diagnostics",
        "lemma-check": "Monte-Carlo ratios for the two anisotropic product inequalities",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=Path, default=None, help="YAML configuration file")
        p.add_argument("--output", type=Path, required=True, help="output directory")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"geoadjust: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out: Path = args.output
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(cfg.to_yaml())
        return HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"geoadjust: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"geoadjust: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (GeoadjustError, OSError) as exc:
        print(f"geoadjust: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
