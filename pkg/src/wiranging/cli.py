"""Command-line entry point: ``wiranging <subcommand> [flags]``.

Every subcommand accepts ``--config PATH`` (a JSON object whose keys are
flag names with dashes replaced by underscores) and explicit flags, which
take precedence.  Each run writes ``manifest.json`` into ``--out``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .baselines import slope_range, tonal_only_range
from .benchmark import METHODS, summarize, sweep, with_final_range, write_error_table
from .inference import EstimationError, frange, ml_estimate
from .simulate import (config_from_dict, config_to_dict, scenario,
                       synth_spectrogram, write_config, write_ground_truth)
from .spectral import (FORMAT_VERSION, detect_tones, partition_band, read_noise_profile,
                       read_spectrogram, to_intensity, write_noise_profile,
                       write_spectrogram, write_spectrogram_csv)
from .striation import RateProfile, range_offsets
from .tracks import ingest_track


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# flag parsing helpers


def parse_grid(text) -> tuple[float, float, float]:
    if isinstance(text, dict):
        parts = [text["min"], text["max"], text["step"]]
    elif isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must be MIN:MAX:STEP, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if not step > 0:
        raise UsageError("grid step must be positive")
    if hi < lo:
        raise UsageError("grid is empty (MAX < MIN)")
    return lo, hi, step


def parse_pair(text, name: str) -> tuple[float, float]:
    parts = list(text) if isinstance(text, (list, tuple)) else str(text).replace(",", ":").split(":")
    if len(parts) != 2:
        raise UsageError(f"{name} must have two values, got {text!r}")
    return float(parts[0]), float(parts[1])


def parse_floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def read_rate_profile(path) -> RateProfile:
    """Rate profile from JSON (``times``/``rates`` keys) or CSV with
    ``time`` and ``rate`` columns."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        payload = json.loads(path.read_text())
        return RateProfile(payload["times"], payload["rates"])
    table = np.genfromtxt(path, delimiter=",", names=True)
    return RateProfile(table["time"], table["rate"])


def _existing(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


# --------------------------------------------------------------------------
# configuration merge


def merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """Defaults, then ``--config`` values, then explicit flags."""
    merged = dict(defaults)
    if args.config is not None:
        payload = json.loads(_existing(args.config, "config").read_text())
        if not isinstance(payload, dict):
            raise UsageError("config must be a JSON object")
        if "command" in payload and "config" in payload:
            # a previous run's manifest
            payload = payload["config"]
        merged.update(payload)
    for key, val in vars(args).items():
        if key in ("command", "config", "func") or val is None:
            continue
        merged[key] = val
    return merged


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def write_manifest(out: Path, command: str, config: dict, outputs) -> None:
    manifest = {
        "command": command,
        "config": _jsonable(config),
        "versions": {"wiranging": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "format_version": FORMAT_VERSION,
        "outputs": sorted(str(Path(p).name) for p in outputs),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _out_dir(cfg: dict) -> Path:
    if not cfg.get("out"):
        raise UsageError("--out is required")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# simulate


_SIM_KEYS = ("channel", "source", "track", "noise_variance", "band", "df", "dt", "duration",
             "seed")


def _sim_config(cfg: dict):
    """Simulation config from ``cfg['sim']`` (a full config object) or the
    built-in scenario, with flag overrides applied."""
    if "sim" in cfg:
        d = json.loads(json.dumps(cfg["sim"]))
    elif "channel" in cfg:
        d = json.loads(json.dumps({k: cfg[k] for k in cfg if k in _SIM_KEYS}))
    else:
        d = config_to_dict(scenario(beta=float(cfg.get("beta", 1.18))))
    if cfg.get("beta") is not None:
        d["channel"]["beta"] = float(cfg["beta"])
    if cfg.get("seed") is not None:
        d["seed"] = int(cfg["seed"])
    if cfg.get("band") is not None:
        d["band"] = list(parse_pair(cfg["band"], "band"))
    if cfg.get("tones") is not None:
        d.setdefault("source", {})["tone_freqs"] = parse_floats(cfg["tones"])
    if cfg.get("rate_profile") is not None:
        prof = read_rate_profile(_existing(cfg["rate_profile"], "rate profile"))
        d["track"]["rate"] = {"times": prof.times.tolist(), "rates": prof.rates.tolist()}
    elif cfg.get("rate") is not None:
        d["track"]["rate"] = float(cfg["rate"])
    sim = config_from_dict(d)
    if cfg.get("range") is not None:
        sim = with_final_range(sim, float(cfg["range"]))
    sim.validate()
    return sim


def cmd_simulate(cfg: dict) -> None:
    out = _out_dir(cfg)
    sim = _sim_config(cfg)
    spec, truth = synth_spectrogram(sim, workers=int(cfg.get("workers", 1)))
    files = list(write_spectrogram(out / "spectrogram", spec))
    write_ground_truth(out / "ground_truth.json", truth)
    write_noise_profile(out / "noise.json", sim.noise)
    write_config(out / "sim_config.json", sim)
    files += [out / "ground_truth.json", out / "noise.json", out / "sim_config.json"]
    if cfg.get("csv"):
        write_spectrogram_csv(out / "spectrogram.csv", spec)
        files.append(out / "spectrogram.csv")
    resolved = {**cfg, "sim": config_to_dict(sim)}
    write_manifest(out, "simulate", resolved, files)
    print(f"simulated {spec.shape[0]} snapshots x {spec.shape[1]} bins, "
          f"final range {truth.final_range:.1f} m -> {out}")


# --------------------------------------------------------------------------
# estimation


def _load_inputs(cfg: dict, need_tones: bool = True):
    if not cfg.get("spectrogram"):
        raise UsageError("--spectrogram is required")
    stem = Path(cfg["spectrogram"])
    _existing(stem.with_suffix(".json"), "spectrogram header")
    spec = read_spectrogram(stem)
    if cfg.get("band") is not None:
        band = parse_pair(cfg["band"], "band")
    else:
        band = (float(spec.freqs[0]), float(spec.freqs[-1]))
    if cfg.get("tones") is not None:
        tones = parse_floats(cfg["tones"])
    else:
        tones = detect_tones(to_intensity(spec), band,
                             float(cfg.get("min_prominence", 6.0))).tolist()
        if not tones and need_tones:
            print("warning: no tones detected; pass --tones or lower --min-prominence",
                  file=sys.stderr)
    freqs = spec.crop(band).freqs
    part = partition_band(freqs, tones, float(cfg.get("guard", 0.35)))
    return spec, part, tones, band


def _rate(cfg: dict):
    if cfg.get("rate_profile") is not None:
        return read_rate_profile(_existing(cfg["rate_profile"], "rate profile"))
    if cfg.get("rate") is not None:
        return float(cfg["rate"])
    return None


def _noise(cfg: dict):
    if not cfg.get("noise"):
        raise UsageError("--noise is required")
    return read_noise_profile(_existing(cfg["noise"], "noise profile"))


def _candidates(cfg: dict) -> np.ndarray:
    if cfg.get("grid") is None:
        raise UsageError("--grid is required")
    return frange(*parse_grid(cfg["grid"]))


def _estimate(cfg: dict, command: str, free: str) -> None:
    out = _out_dir(cfg)
    method = cfg.get("method", "G")
    cands = _candidates(cfg) if method != "S" else None
    spec, part, tones, band = _load_inputs(cfg, need_tones=method != "S")
    fixed = {"r": cfg.get("range"), "rate": _rate(cfg), "beta": cfg.get("beta")}
    fixed[free] = None
    for key, val in fixed.items():
        if key != free and val is None:
            flag = {"r": "--range", "rate": "--rate or --rate-profile", "beta": "--beta"}[key]
            raise UsageError(f"{flag} is required for {command}")
    if fixed["r"] is not None:
        fixed["r"] = float(fixed["r"])
    if fixed["beta"] is not None:
        fixed["beta"] = float(fixed["beta"])
    l_min = int(cfg.get("l_min", 30))
    workers = int(cfg.get("workers", 1))

    if method == "G":
        res = ml_estimate(spec, part, _noise(cfg), cands, l_min=l_min, workers=workers, **fixed)
    elif method == "T":
        res = tonal_only_range(spec, part, cands, l_min=l_min, workers=workers, **fixed)
    elif method == "S":
        if free != "r":
            raise UsageError("method S estimates range only")
        _slope(cfg, out, spec, band, fixed, command)
        return
    else:
        raise UsageError(f"unknown method {method!r}")
    res.diagnostics["tones"] = [float(t) for t in tones]
    res.write(out / "result")
    write_manifest(out, command, {**cfg, "tones": tones, "band": list(band)},
                   [out / "result.json", out / "result.csv"])
    print(f"{res.parameter} argmax = {res.argmax:.6g} "
          f"({int(res.valid.sum())}/{res.candidates.size} candidates scored)")


def _slope(cfg, out, spec, band, fixed, command) -> None:
    rate = fixed["rate"]
    if fixed["beta"] is None:
        raise UsageError("--beta is required for method S")
    times = spec.times
    axis = range_offsets(times, rate, times[0]) if isinstance(rate, RateProfile) \
        else float(rate) * (times - times[0])
    res = slope_range(to_intensity(spec), axis, None, fixed["beta"], band=band)
    payload = {"method": "S", "range": res.range, "range_at_center": res.range_at_center,
               "slope_hz_per_m": res.slope, "peak_snr": res.peak_snr, "n_rows": res.n_rows,
               "range_extent": res.window.range_extent}
    (out / "result.json").write_text(json.dumps(payload, indent=2))
    write_manifest(out, command, {**cfg, "band": list(band)}, [out / "result.json"])
    print(f"r argmax = {res.range:.6g} (slope method)")


def cmd_estimate_range(cfg):
    _estimate(cfg, "estimate-range", "r")


def cmd_estimate_wi(cfg):
    _estimate(cfg, "estimate-wi", "beta")


def cmd_estimate_rate(cfg):
    if cfg.get("rate_profile") is not None:
        raise UsageError("estimate-rate searches a constant rate; drop --rate-profile")
    _estimate(cfg, "estimate-rate", "rate")


def cmd_baseline(cfg):
    if cfg.get("method") not in ("S", "T"):
        raise UsageError("baseline needs --method S or --method T")
    _estimate(cfg, "baseline", "r")


# --------------------------------------------------------------------------
# sweep and AIS


def cmd_sweep(cfg: dict) -> None:
    out = _out_dir(cfg)
    sim = _sim_config({k: v for k, v in cfg.items() if k != "range"})
    methods = [m.strip() for m in str(cfg.get("method", "G")).split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    n_trials = int(cfg.get("trials", 50))
    if n_trials < 1:
        raise UsageError("--trials must be positive")
    ranges = parse_floats(cfg["ranges"]) if cfg.get("ranges") is not None else None
    grid_rel = parse_grid(cfg.get("grid_rel", "0.6:1.4:10"))
    rows = sweep(sim, n_trials, methods, grid_rel, ranges, int(cfg.get("l_min", 30)),
                 int(cfg.get("workers", 1)))
    trial_dir = out / "trials"
    trial_dir.mkdir(exist_ok=True)
    for row in rows:
        (trial_dir / f"trial_{row['trial']:04d}.json").write_text(json.dumps(row, indent=2))
    write_error_table(out / "errors.csv", rows, methods, bool(cfg.get("smooth", False)))
    summary = summarize(rows, methods)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    write_manifest(out, "sweep", {**cfg, "sim": config_to_dict(sim)},
                   [out / "errors.csv", out / "summary.json", trial_dir])
    for m in methods:
        print(f"{m}: RMSE {summary[m]['rmse_pct']:.3f}%  mean {summary[m]['mean_pct']:+.3f}%")


def cmd_ais(cfg: dict) -> None:
    out = _out_dir(cfg)
    if not cfg.get("track"):
        raise UsageError("--track is required")
    if cfg.get("receiver") is None:
        raise UsageError("--receiver LAT,LON is required")
    receiver = parse_pair(cfg["receiver"], "receiver")
    prof = ingest_track(_existing(cfg["track"], "track"), receiver, float(cfg.get("dt", 10.0)))
    prof.write_json(out / "profile.json")
    prof.write_csv(out / "profile.csv")
    write_manifest(out, "ais", cfg, [out / "profile.json", out / "profile.csv"])
    print(f"{prof.times.size} samples, range {prof.ranges.min():.0f}-{prof.ranges.max():.0f} m")


# --------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--config", help="JSON file of defaults; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)


def _add_model(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--beta", type=float)
    rate = p.add_mutually_exclusive_group()
    rate.add_argument("--rate", type=float, help="constant range rate, m/s")
    rate.add_argument("--rate-profile", help="JSON or CSV rate profile")
    p.add_argument("--band", help="FMIN:FMAX in Hz")
    p.add_argument("--tones", help="f1,f2,... in Hz")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wiranging", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="synthesize a spectrogram and its ground truth")
    _add_common(p)
    _add_model(p)
    p.add_argument("--range", type=float, help="final range, m")
    p.add_argument("--csv", action="store_true", default=None, help="also write a CSV table")
    p.set_defaults(func=cmd_simulate)

    for name, func, free in (("estimate-range", cmd_estimate_range, "r"),
                             ("estimate-wi", cmd_estimate_wi, "beta"),
                             ("estimate-rate", cmd_estimate_rate, "rate"),
                             ("baseline", cmd_baseline, "r")):
        p = sub.add_parser(name, help=f"grid search over {free}" if name != "baseline"
                           else "slope (S) or tonal-only (T) range estimate")
        _add_common(p)
        _add_model(p)
        p.add_argument("--spectrogram", help="spectrogram stem (.bin/.json)")
        p.add_argument("--noise", help="noise profile JSON")
        p.add_argument("--grid", help="MIN:MAX:STEP candidates")
        p.add_argument("--range", type=float, help="fixed final range, m")
        p.add_argument("--guard", type=float, help="tone guard, Hz (default 0.35)")
        p.add_argument("--min-prominence", type=float,
                       help="tone detection threshold over the local median PSD, dB (default 6)")
        p.add_argument("--method", choices=["G", "S", "T"])
        p.add_argument("--l-min", type=int, help="minimum striation count (default 30)")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="Monte-Carlo error table over seeds")
    _add_common(p)
    _add_model(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--method", help="comma-separated subset of G,S,T")
    p.add_argument("--grid-rel", help="LO:HI:STEP, bounds relative to the true range")
    p.add_argument("--ranges", help="final ranges r1,r2,... cycled over trials")
    p.add_argument("--l-min", type=int)
    p.add_argument("--smooth", action="store_true", default=None,
                   help="3-trial moving average of errors")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ais", help="position log to range and range-rate profile")
    _add_common(p)
    p.add_argument("--track", help="CSV with timestamp,lat,lon,sog,mmsi")
    p.add_argument("--receiver", help="LAT,LON in degrees")
    p.add_argument("--dt", type=float, help="resampling step, s (default 10)")
    p.set_defaults(func=cmd_ais)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        cfg = merge_config(args, {})
        args.func(cfg)
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
