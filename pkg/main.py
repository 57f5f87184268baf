"""
Command-line interface for the electron-beam ESR simulator:
- Near-field harmonic maps of the deflected beam
- Lock-in ESR spectra with beam-on/beam-off differential and lineshape fit
- Spatial sweeps with indirect-drive removal
- Fitting and phase calibration of externally measured CSV data
- PNG rendering of any emitted CSV

Usage:
    python main.py --help
    python main.py field-map --config scenarios/field_map.env --out out/field_map.csv
    python main.py spectrum --config scenarios/spectrum.env --out out/spectrum.csv
    python main.py sweep --config scenarios/offset_sweep.env --out out/sweep.csv --jobs 4
    python main.py fit out/spectrum.csv
    python main.py calibrate calibration.csv
    python main.py plot out/spectrum.csv --out out/spectrum.png
"""

import argparse
import hashlib
import sys
import time
import warnings
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pandas as pd

from ebeam_esr import __version__
from ebeam_esr import pipeline
from ebeam_esr.config import Scenario, parse_config
from ebeam_esr.errors import ConfigError, NumericalError, SaturationRegime
from ebeam_esr.storage import RunReport, format_report, store_frame, write_report, write_run_report

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def status(message: str) -> None:
    print(message, file=sys.stderr)


def _file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _run_report_path(out: Path) -> Path:
    return out.with_name(out.stem + ".run.json")


def _finish(command: str, digest: str, out: Optional[Path], outputs, started: float) -> None:
    if out is None:
        return
    report = RunReport(
        scenario_digest=digest,
        command=command,
        outputs=outputs,
        provenance={"tool_version": __version__, "config_hash": digest},
        wall_time_s=time.perf_counter() - started,
    )
    write_run_report(_run_report_path(out), report)


def _records(df: pd.DataFrame):
    return df.to_dict(orient="records")


def _load(args) -> Scenario:
    if not args.config:
        raise ConfigError("--config is required for this command")
    scenario = parse_config(args.config)
    status(f"🔄 Scenario {args.config} (digest {scenario.digest[:12]})")
    return scenario


def field_map_command(args) -> None:
    """Write the harmonic field map along the configured beam sweep."""
    started = time.perf_counter()
    scenario = _load(args)
    df = pipeline.cmd_field_map(scenario, voxels=args.voxels)
    out = Path(args.out or ("voxel_map.csv" if args.voxels else "field_map.csv"))
    store_frame(df, out)
    _finish("field-map", scenario.digest, out, _records(df), started)
    status(f"✅ Wrote {len(df)} rows to {out}")


def spectrum_command(args) -> None:
    """Synthesize the differential lock-in spectrum and fit it."""
    started = time.perf_counter()
    scenario = _load(args)
    run = pipeline.cmd_spectrum(scenario, np.random.default_rng(args.seed))
    out = Path(args.out or "spectrum.csv")
    store_frame(run.frame, out)
    report = pipeline.spectrum_report(run)
    write_report(out.with_suffix(".fit.txt"), report)
    if run.fit is None:
        status("⚠️  Differential spectrum is flat; fit skipped.")
    else:
        status(f"✅ Fitted w0 = {run.fit.omega0:.9g} rad/s, T2 = {run.fit.t2 * 1e9:.2f} ns")
    sys.stdout.write(format_report(report))
    outputs = [dict(report)]
    _finish("spectrum", scenario.digest, out, outputs, started)


def sweep_command(args) -> None:
    """Simulate coil signals over beam positions and recover the beam signal."""
    started = time.perf_counter()
    scenario = _load(args)
    status(f"🔄 Simulating {len(scenario.sweep.values)} positions with {args.jobs} worker(s)...")
    df = pipeline.cmd_sweep(scenario, jobs=args.jobs)
    out = Path(args.out or "sweep.csv")
    store_frame(df, out)
    _finish("sweep", scenario.digest, out, _records(df), started)
    status(f"✅ Wrote {len(df)} rows to {out}")


def fit_command(args) -> None:
    """Fit the derivative lineshape to a spectrum CSV."""
    started = time.perf_counter()
    status(f"🔄 Fitting {args.csv}...")
    fit = pipeline.cmd_fit(Path(args.csv))
    report = pipeline.spectro.fit_report(fit)
    sys.stdout.write(format_report(report))
    out = Path(args.out) if args.out else None
    if out is not None:
        write_report(out, report)
    _finish("fit", _file_digest(args.csv), out, [dict(report)], started)
    status(f"✅ T2 = {fit.t2 * 1e9:.2f} ns, magnitude = {fit.magnitude:.6g} V")


def calibrate_command(args) -> None:
    """Fit the coil phase calibration to an IQ CSV."""
    started = time.perf_counter()
    status(f"🔄 Calibrating from {args.csv}...")
    run = pipeline.cmd_calibrate(Path(args.csv))
    report = run.report()
    sys.stdout.write(format_report(report))
    out = Path(args.out) if args.out else None
    if out is not None:
        write_report(out, report)
    _finish("calibrate", _file_digest(args.csv), out, [dict(report)], started)
    status(f"✅ Phase slope a = {run.i_model.a:.6g} s")


def plot_command(args) -> None:
    """Render a result CSV to PNG."""
    from ebeam_esr.plotting import plot_csv

    df = pd.read_csv(args.csv)
    out = Path(args.out or Path(args.csv).with_suffix(".png"))
    kind = plot_csv(df, out)
    status(f"📊 Rendered {kind} plot to {out}")


COMMANDS = {
    "field-map": field_map_command,
    "spectrum": spectrum_command,
    "sweep": sweep_command,
    "fit": fit_command,
    "calibrate": calibrate_command,
    "plot": plot_command,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Electron-beam driven ESR simulator and analysis toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py field-map --config scenarios/field_map.env        # B1 harmonics vs beam position
  python main.py field-map --config scenarios/field_map.env --voxels  # per-voxel drive map
  python main.py spectrum --config scenarios/spectrum.env --seed 7  # on/off/differential spectrum + fit
  python main.py sweep --config scenarios/offset_sweep.env --jobs 4 # spatial sweep
  python main.py fit spectrum.csv --out fit.txt                     # fit a measured spectrum
  python main.py calibrate iq.csv                                   # phase calibration
  python main.py plot sweep.csv                                     # render a CSV to PNG
        """,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Scenario file (.env style or .json)")
    common.add_argument("--out", help="Output path")
    common.add_argument("--jobs", type=int, default=1, help="Worker processes for sweeps (default 1)")
    common.add_argument("--seed", type=int, default=0, help="Seed for injected noise")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    fm = subparsers.add_parser("field-map", parents=[common], help="Second-harmonic field map")
    fm.add_argument("--voxels", action="store_true", help="Per-voxel map at the configured beam position")
    subparsers.add_parser("spectrum", parents=[common], help="Synthesize and fit a lock-in spectrum")
    subparsers.add_parser("sweep", parents=[common], help="Offset or standoff sweep with EMF removal")
    fit = subparsers.add_parser("fit", parents=[common], help="Fit a spectrum CSV (omega_rad_s, value_V)")
    fit.add_argument("csv", help="Spectrum CSV")
    cal = subparsers.add_parser("calibrate", parents=[common], help="Fit the phase calibration model")
    cal.add_argument("csv", help="CSV with omega, i_V, q_V")
    plot = subparsers.add_parser("plot", parents=[common], help="Render an emitted CSV as PNG")
    plot.add_argument("csv", help="CSV produced by field-map, spectrum or sweep")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_OK
    if args.seed < 0 or args.jobs < 1:
        status("❌ --seed must be non-negative and --jobs at least 1")
        return EXIT_CONFIG

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", SaturationRegime)
            with warnings.catch_warnings(record=True) as caught:
                COMMANDS[args.command](args)
        for w in caught:
            status(f"⚠️  {w.message}")
    except ConfigError as e:
        status(f"❌ Configuration error: {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        status(f"❌ Numerical failure: {e}")
        return EXIT_NUMERICAL
    except Exception as e:
        status(f"❌ Error running {args.command}: {e}")
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
