"""Command-line front end: ``riemdoa {simulate,estimate,sweep,verify}``.

Exit codes: 0 success, 1 a verification check failed, 2 bad arguments,
configuration or I/O, 3 any other pipeline error.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import beamformers as bf
from .array_model import bin_wavelength, doa_grid
from .errors import ConfigError, RiemdoaError
from .experiments import BEAMFORMERS, MEAN_KINDS, Protocol, TrialRow, sweep
from .hpd import to_json_dict
from .metrics import directivity, output_sir, to_db
from .scenario import load_config, read_wav, render_signals, scenario_from_dict, scenario_to_dict, write_wav
from .stft import segment_correlations, stft_bin
from .verify import run_suite

log = logging.getLogger("riemdoa")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def default_config_path(name):
    return resources.files("riemdoa") / "configs" / name


def _load(path, default_name):
    if path is None:
        with resources.as_file(default_config_path(default_name)) as p:
            return load_config(p)
    return load_config(path)


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _write_csv(path, rows, columns=None):
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (json.dumps(v) if isinstance(v, list) else v) for k, v in r.items()})


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args):
    cfg = _load(args.config, "default_scenario.toml")
    if args.seed is not None:
        cfg = {**cfg, "seed": args.seed}
    return cfg, scenario_from_dict(cfg)


###############################################################################
# simulate


def cmd_simulate(args):
    cfg, sc = _scenario(args)
    out = _out_dir(args)
    x = render_signals(sc)
    write_wav(out / "signals.wav", x, sc.room.fs)
    desired, interf = sc.directions()
    meta = {
        "scenario": scenario_to_dict(sc),
        "estimate": cfg.get("estimate", {}),
        "n_channels": int(x.shape[0]),
        "n_samples": int(x.shape[1]),
        "fs": sc.room.fs,
        "noise_variance": sc.noise_variance,
        "desired_deg": np.rad2deg(desired).tolist(),
        "interference_deg": np.rad2deg(interf).tolist(),
    }
    _write_json(out / "scenario.json", meta)
    log.info("wrote %d x %d samples to %s", x.shape[0], x.shape[1], out)
    return EXIT_OK


###############################################################################
# estimate


def _estimator_config(cfg, sc, oracle_dim):
    est = cfg.get("estimate", {})
    thetas = doa_grid(est.get("grid_lo_deg", -70.0), est.get("grid_hi_deg", 70.0), est.get("grid_step_deg", 0.5))
    wl = bin_wavelength(sc.stft.bin_index, sc.room.fs, sc.stft.window_size, sc.room.c)
    return bf.EstimatorConfig(
        wavelength=wl, thetas=thetas, stft=sc.stft, n_sources=int(est.get("n_sources", len(sc.desired))),
        subspace_dim="estimate" if oracle_dim is None else int(oracle_dim),
        min_separation=np.deg2rad(est.get("min_separation_deg", 5.0)),
    )


def _pattern_rows(p):
    return [{"theta_deg": t, "power": v, "power_db": to_db(v)} for t, v in
            zip(np.rad2deg(p.thetas).tolist(), p.power.tolist())]


def cmd_estimate(args):
    cfg, sc = _scenario(args)
    if args.signals:
        x, fs = read_wav(args.signals)
        if fs != sc.room.fs:
            raise ConfigError(f"WAV sampled at {fs} Hz, scenario expects {sc.room.fs} Hz")
    else:
        x = render_signals(sc)
    if x.shape[0] != sc.array.n_mics:
        raise ConfigError(f"{x.shape[0]} channels but the array has {sc.array.n_mics} microphones")
    out = _out_dir(args)
    ecfg = _estimator_config(cfg, sc, args.oracle_dim)
    desired, interf = sc.directions()
    frames = stft_bin(x, sc.stft.window_size, sc.stft.hop, sc.stft.bin_index)

    if args.streaming:
        kinds = args.mean or ["riemannian", "euclidean"]
        report = {}
        for mk in kinds:
            steps = []
            for st in bf.doa_streaming(frames, sc.array, ecfg, mk):
                steps.append({"index": st.index, "directions_deg": np.rad2deg(st.estimate.directions).tolist(),
                              "peak_powers": st.estimate.peak_powers})
            report[mk] = steps
        _write_json(out / "streaming.json", report)
        return EXIT_OK

    segs = segment_correlations(frames, sc.stft.segment_frames, sc.stft.loading)
    full_cfg = replace(ecfg, thetas=doa_grid(-90.0, 90.0, 0.5))
    kinds = args.mean or list(MEAN_KINDS)
    beams = args.beamformer or list(BEAMFORMERS)
    rows, estimates, means = [], [], {}
    input_sir = to_db(sc.desired[0].power / np.mean([s.power for s in sc.interferences])) if interf else None
    for bk in beams:
        for mk in (["segments"] if bk == "intersection" else kinds):
            if mk != "segments" and mk not in means:
                means[mk] = bf.compute_mean(segs, mk, ecfg.mean_config)
            mean = means.get(mk)
            p = bf.beam_pattern(bk, segs, mean, sc.array, ecfg, mk)
            est = bf.pick_peaks(p, ecfg.n_sources, ecfg.min_separation)
            _write_csv(out / f"pattern_{bk}_{mk}.csv", _pattern_rows(p), ["theta_deg", "power", "power_db"])
            _write_json(out / f"pattern_{bk}_{mk}.json", p.to_dict())
            estimates.append({"beamformer": bk, "mean_kind": mk, "seed": sc.seed,
                              "directions_deg": np.rad2deg(est.directions).tolist(),
                              "peak_powers": est.peak_powers, "complete": est.complete})
            if desired:
                p_full = bf.beam_pattern(bk, segs, mean, sc.array, full_cfg, mk)
                sir = output_sir(p, desired[0], interf) if interf else None
                err = abs(np.rad2deg(est.directions[0] - desired[0])) if est.directions else float("nan")
                rows.append(TrialRow(
                    scenario_id=sc.seed, mean_kind=mk, beamformer=bk,
                    input_sir_db=input_sir if input_sir is not None else float("inf"),
                    output_sir_db=sir.per_interference_db if sir else [],
                    mean_output_sir_db=sir.mean_db if sir else float("inf"),
                    directivity=directivity(p_full, desired[0]), doa_error_deg=float(err),
                    snr_db=sc.snr_db, t60=sc.room.t60,
                ).to_dict())
    _write_json(out / "estimates.json", estimates)
    _write_json(out / "metrics.json", rows)
    if rows:
        _write_csv(out / "metrics.csv", rows)
    _write_json(out / "means.json", {k: to_json_dict(v) for k, v in means.items()})
    for e in estimates:
        log.info("%-12s %-12s %s", e["beamformer"], e["mean_kind"],
                 ", ".join(f"{d:.1f}" for d in e["directions_deg"]))
    return EXIT_OK


###############################################################################
# sweep


SWEEP_AXES = ("input_sir_db", "snr_db", "t60")


def cmd_sweep(args):
    cfg = _load(args.config, "default_sweep.toml")
    proto = Protocol.from_dict(cfg.get("protocol", {}))
    axes = {k: list(v) for k, v in cfg.get("sweep", {}).items()}
    bad = set(axes) - set(SWEEP_AXES)
    if bad:
        raise ConfigError(f"unsupported sweep axes {sorted(bad)}; choose from {SWEEP_AXES}")
    if not axes:
        raise ConfigError("the [sweep] table must list at least one axis")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    n_trials = int(args.mc if args.mc is not None else cfg.get("n_trials", 20))
    kinds = args.mean or list(cfg.get("mean_kinds", MEAN_KINDS))
    beams = args.beamformer or list(cfg.get("beamformers", BEAMFORMERS))
    workers = int(args.workers if args.workers is not None else cfg.get("workers", 1))
    rows, agg = sweep(proto, axes, n_trials, seed, kinds, beams, args.oracle_dim, workers)
    out = _out_dir(args)
    _write_csv(out / "trials.csv", [r.to_dict() for r in rows])
    _write_csv(out / "aggregate.csv", agg)
    _write_json(out / "aggregate.json", agg)
    for a in agg:
        log.info("%s", {k: (round(v, 2) if isinstance(v, float) else v) for k, v in a.items()})
    return EXIT_OK


###############################################################################
# verify


def cmd_verify(args):
    checks = run_suite(args.suite)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.suite}/{c.name}: {c.detail} ({c.seconds:.2f}s)")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, [c.to_dict() for c in checks])
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


###############################################################################


def build_parser():
    parser = argparse.ArgumentParser(prog="riemdoa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="TOML or JSON config (defaults to the bundled one)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=out_required, help="output directory")

    def selection(p):
        p.add_argument("--mean", action="append", choices=MEAN_KINDS,
                       help="mean kind; repeat for several (default: all)")
        p.add_argument("--beamformer", action="append", choices=BEAMFORMERS,
                       help="beamformer; repeat for several (default: all)")
        p.add_argument("--oracle-dim", type=int, help="fix the signal-subspace dimension")

    p = sub.add_parser("simulate", help="render a scenario to a multichannel WAV")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate DoAs and beam patterns")
    common(p)
    selection(p)
    p.add_argument("--signals", help="WAV file to analyze instead of rendering the scenario")
    p.add_argument("--streaming", action="store_true", help="run the per-segment streaming estimator")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep with percentile summaries")
    common(p)
    selection(p)
    p.add_argument("--mc", type=int, help="Monte-Carlo trials per axis point")
    p.add_argument("--workers", type=int, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the self-check suites")
    p.add_argument("--suite", default="all",
                   choices=["geometry", "coefficients", "orderings", "two_interference", "misalignment", "all"])
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "streaming", False) and args.mean and not set(args.mean) <= {"riemannian", "euclidean"}:
        print("error: --streaming supports --mean riemannian or euclidean", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RiemdoaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
