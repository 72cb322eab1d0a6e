"""Command-line front end.

Every subcommand takes a JSON config file (see :mod:`mollow.config`),
computes one artifact and writes it as a self-describing result file.
Exit codes: 0 success, 2 configuration/usage, 3 parameter/regime,
4 solver/convergence, 5 I/O or checkpoint integrity.
"""

from __future__ import annotations

import datetime
import functools
import json
import sys

import click
import numpy as np

from . import __version__
from .atlas import annotate, enumerate_conditions, recommend_filters
from .config import load_config
from .correlators import (CorrelationRequest, autocorrelation_scan, cut3d,
                          g_tau, g_zero_delay, spectrum_scan, PlaneSpec)
from .errors import ConfigError, MollowError
from .model import dressed_splitting
from .resultio import write_result
from .sweep import SweepAxis, SweepPlan, resume, run_sweep


def _fail(exc: BaseException, code: int):
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MollowError as exc:
            _fail(exc, exc.exit_code)
        except OSError as exc:
            _fail(exc, 5)
    return wrapper


def _timestamp(no_timestamp: bool) -> str | None:
    if no_timestamp:
        return None
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _emit(grid, cfg, out: str, fmt: str | None, no_timestamp: bool,
          overlay: dict | None = None):
    fmt = fmt or cfg.run.get("format", "csv")
    path = f"{out}.{fmt}"
    grid.metadata["config"] = cfg.echo()
    grid.metadata["tool_version"] = __version__
    files = write_result(grid, path, fmt=fmt, timestamp=_timestamp(no_timestamp),
                         overlay=overlay)
    for f in files:
        click.echo(f"wrote {f}")


def _splitting(cfg) -> float:
    return dressed_splitting(cfg.params).omega_plus


common = [
    click.argument("config_path", metavar="CONFIG", type=click.Path()),
    click.option("--out", default=None, help="Output path stem."),
    click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None),
    click.option("--no-timestamp", is_flag=True,
                 help="Omit the timestamp header field (byte-stable output)."),
    click.option("--epsilon", type=float, default=None, help="Sensor coupling override."),
]


def _with_common(fn):
    for dec in reversed(common):
        fn = dec(fn)
    return _guarded(fn)


@click.group()
@click.version_option(__version__)
def main():
    """Frequency-resolved photon correlations of a driven two-level emitter."""


@main.command()
@click.option("--grid", type=int, default=None, help="Number of frequency points.")
@click.option("--window", type=float, default=None,
              help="Scan half-width (default: twice the triplet splitting).")
@_with_common
def spectrum(config_path, out, fmt, no_timestamp, epsilon, grid, window):
    """Filtered emission spectrum over a frequency scan."""
    cfg = load_config(config_path)
    if not cfg.sensors:
        raise ConfigError("spectrum needs one sensor block (its linewidth is used)")
    half = window or cfg.run.get("window") or 2.0 * _splitting(cfg)
    n = grid or cfg.run.get("grid", 401)
    freqs = np.linspace(-half, half, n)
    res = spectrum_scan(cfg.params, cfg.sensors[0].linewidth, freqs,
                        epsilon=epsilon or cfg.run.get("epsilon"))
    _emit(res, cfg, out or cfg.run.get("out", "spectrum"), fmt, no_timestamp)


@main.command()
@click.option("--order", type=int, default=None, help="Correlation order N (2-4).")
@click.option("--grid", type=int, default=None)
@click.option("--window", type=float, default=None)
@click.option("--overlay", is_flag=True, help="Write a leapfrog overlay sidecar.")
@click.option("--check-truncation", is_flag=True,
              help="Verify the sensor truncation at a representative point.")
@_with_common
def autocorr(config_path, out, fmt, no_timestamp, epsilon, order, grid, window,
             overlay, check_truncation):
    """Degenerate g^(N) through a single scanned filter."""
    cfg = load_config(config_path)
    if not cfg.sensors:
        raise ConfigError("autocorr needs one sensor block")
    n_ord = order or cfg.sensors[0].bundle_order
    op = _splitting(cfg)
    half = window or cfg.run.get("window") or 1.2 * op
    n = grid or cfg.run.get("grid", 201)
    freqs = np.linspace(-half, half, n)
    eps = epsilon or cfg.run.get("epsilon")
    res = autocorrelation_scan(cfg.params, n_ord, cfg.sensors[0].linewidth, freqs,
                               epsilon=eps)
    if check_truncation:
        _truncation_check(cfg, (n_ord,), (float(freqs[len(freqs) // 2]),),
                          (cfg.sensors[0].linewidth,), eps)
    side = None
    if overlay:
        side = annotate(res, enumerate_conditions((n_ord,), op))
    _emit(res, cfg, out or cfg.run.get("out", f"autocorr{n_ord}"), fmt, no_timestamp,
          overlay=side)


def _truncation_check(cfg, partition, frequencies, linewidths, eps, tol=5e-3):
    """Re-evaluate one point with one extra Fock state per sensor."""
    req = CorrelationRequest(partition=partition, frequencies=frequencies,
                             linewidths=linewidths)
    base = g_zero_delay(cfg.params, req, epsilon=eps).value
    bumped = g_zero_delay(cfg.params, req, epsilon=eps, truncation_bump=1).value
    rel = abs(base - bumped) / max(abs(bumped), 1e-300)
    click.echo(f"truncation check at {frequencies}: rel change {rel:.2e}")
    if rel > tol:
        raise ConfigError(
            f"truncation-sensitive result (rel change {rel:.2e} > {tol}); "
            "raise sensor truncations")


def _map_command(cfg, partition, out_stem, fmt, no_timestamp, epsilon, grid,
                 window, workers, overlay, check_truncation, out):
    op = _splitting(cfg)
    half = window or cfg.run.get("window") or 1.2 * op
    n = grid or cfg.run.get("grid", 101)
    workers = workers or cfg.run.get("workers", 1)
    eps = epsilon or cfg.run.get("epsilon")
    linewidths = [s.linewidth for s in cfg.sensors[:2]]
    template = {"system": {"gamma": cfg.params.gamma, "rabi": cfg.params.rabi,
                           "detuning": cfg.params.detuning},
                "partition": list(partition), "linewidths": linewidths}
    if eps:
        template["epsilon"] = eps
    plan = SweepPlan(
        evaluator="correlation", template=template,
        axes=(SweepAxis("frequency_1", -half, half, n),
              SweepAxis("frequency_2", -half, half, n)),
        workers=workers,
        checkpoint_interval=cfg.run.get("checkpoint_interval", 16))
    stem = out or cfg.run.get("out", out_stem)
    res = run_sweep(plan, stem + ".ckpt")
    if check_truncation:
        _truncation_check(cfg, tuple(partition),
                          (0.37 * half, -0.53 * half), tuple(linewidths), eps)
    side = None
    if overlay:
        side = annotate(res, enumerate_conditions(partition, op))
    _emit(res, cfg, stem, fmt, no_timestamp, overlay=side)


map_opts = [
    click.option("--grid", type=int, default=None, help="Points per axis."),
    click.option("--window", type=float, default=None),
    click.option("--workers", type=int, default=None),
    click.option("--overlay", is_flag=True),
    click.option("--check-truncation", is_flag=True),
]


def _with_map_opts(fn):
    for dec in reversed(map_opts):
        fn = dec(fn)
    return fn


@main.command()
@_with_map_opts
@_with_common
def g2map(config_path, out, fmt, no_timestamp, epsilon, grid, window, workers,
          overlay, check_truncation):
    """Two-photon correlation map over both filter frequencies."""
    cfg = load_config(config_path)
    if len(cfg.sensors) < 2:
        raise ConfigError("g2map needs two sensor blocks")
    _map_command(cfg, (1, 1), "g2map", fmt, no_timestamp, epsilon, grid, window,
                 workers, overlay, check_truncation, out)


@main.command()
@_with_map_opts
@_with_common
def bundle(config_path, out, fmt, no_timestamp, epsilon, grid, window, workers,
           overlay, check_truncation):
    """Bundle correlation map; bundle orders come from the sensor blocks."""
    cfg = load_config(config_path)
    if len(cfg.sensors) < 2:
        raise ConfigError("bundle needs two sensor blocks")
    partition = tuple(s.bundle_order for s in cfg.sensors[:2])
    _map_command(cfg, partition, "bundle", fmt, no_timestamp, epsilon, grid, window,
                 workers, overlay, check_truncation, out)


@main.command()
@click.option("--plane", "plane_str", required=True,
              help="Affine constraint 'c1,c2,c3=value' on the three frequencies.")
@click.option("--grid", type=int, default=None, help="Points per free axis.")
@click.option("--window", type=float, default=None)
@click.option("--overlay", is_flag=True)
@_with_common
def g3cut(config_path, out, fmt, no_timestamp, epsilon, plane_str, grid, window,
          overlay):
    """Planar cut of the three-photon correlation volume."""
    cfg = load_config(config_path)
    if not cfg.sensors:
        raise ConfigError("g3cut needs at least one sensor block (linewidth)")
    try:
        lhs, rhs = plane_str.split("=")
        coeffs = tuple(float(c) for c in lhs.split(","))
        plane = PlaneSpec(coefficients=coeffs, value=float(rhs))
    except (ValueError, MollowError) as exc:
        raise ConfigError(f"invalid --plane {plane_str!r}: {exc}") from exc
    op = _splitting(cfg)
    half = window or cfg.run.get("window") or 1.2 * op
    n = grid or cfg.run.get("grid", 41)
    g1 = np.linspace(-half, half, n)
    res = cut3d(cfg.params, plane, cfg.sensors[0].linewidth, g1, g1,
                epsilon=epsilon or cfg.run.get("epsilon"))
    side = None
    if overlay:
        free = res.metadata["free_axes"]
        piv = plane.pivot
        # the pivot frequency varies over the plane; only conditions on the
        # free axes can be drawn, the rest are reported as skipped
        side = annotate(res, enumerate_conditions((1, 1, 1), op))
        side["plane"] = {"coefficients": list(plane.coefficients),
                         "value": plane.value, "pivot": piv, "free_axes": free}
    _emit(res, cfg, out or cfg.run.get("out", "g3cut"), fmt, no_timestamp,
          overlay=side)


@main.command()
@click.option("--tau-max", type=float, default=None,
              help="Delay window half-width (default 5 / min linewidth).")
@click.option("--tau-points", type=int, default=None)
@_with_common
def tau(config_path, out, fmt, no_timestamp, epsilon, tau_max, tau_points):
    """Two-time correlation g(tau) between the two configured filter groups."""
    cfg = load_config(config_path)
    if len(cfg.sensors) != 2:
        raise ConfigError("tau needs exactly two sensor blocks")
    tmax = tau_max or cfg.run.get("tau_max") or 5.0 / min(s.linewidth for s in cfg.sensors)
    n = tau_points or cfg.run.get("tau_points", 201)
    taus = np.linspace(-tmax, tmax, n)
    res = g_tau(cfg.params, cfg.sensors[0], cfg.sensors[1], taus,
                epsilon=epsilon or cfg.run.get("epsilon"))
    _emit(res, cfg, out or cfg.run.get("out", "gtau"), fmt, no_timestamp)


@main.command()
@click.option("--delta", type=click.Choice(["-", "0", "+"]), default="+",
              help="Target manifold jump in units of the splitting.")
@click.option("--margin", type=float, default=None,
              help="Exclusion margin in units of the filter linewidth.")
@click.argument("config_path", metavar="CONFIG", type=click.Path())
@_guarded
def recommend(config_path, delta, margin):
    """Recommend on-condition filter frequencies clearing all real states."""
    cfg = load_config(config_path)
    if not cfg.sensors:
        raise ConfigError("recommend needs sensor blocks defining the partition")
    partition = tuple(s.bundle_order for s in cfg.sensors)
    op = _splitting(cfg)
    dval = {"-": -op, "0": 0.0, "+": op}[delta]
    rec = recommend_filters(partition, dval, op,
                            linewidth=cfg.sensors[0].linewidth,
                            margin=margin or cfg.run.get("margin", 3.0))
    click.echo(json.dumps({
        "partition": list(partition),
        "delta": rec.condition.delta,
        "frequencies": list(rec.frequencies),
        "margin_requested": rec.margin,
        "margin_achieved": rec.achieved_margin,
        "rationale": rec.rationale,
    }, indent=1, sort_keys=True))


@main.command("sweep-resume")
@click.argument("checkpoint", type=click.Path())
@click.option("--out", default=None, help="Output path stem (default: checkpoint stem).")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--workers", type=int, default=1)
@click.option("--no-timestamp", is_flag=True)
@_guarded
def sweep_resume(checkpoint, out, fmt, workers, no_timestamp):
    """Finish an interrupted sweep from its checkpoint file."""
    res = resume(checkpoint, workers=workers)
    stem = out or (checkpoint[:-5] if checkpoint.endswith(".ckpt") else checkpoint + ".out")
    path = f"{stem}.{fmt}"
    res.metadata["tool_version"] = __version__
    files = write_result(res, path, fmt=fmt, timestamp=_timestamp(no_timestamp))
    for f in files:
        click.echo(f"wrote {f}")


if __name__ == "__main__":
    main()
