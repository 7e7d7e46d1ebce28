"""Command-line pipeline for fitting return distributions.

Subcommands hand artifacts to each other through files in the output
directory, so the expensive stages cache across reruns:

    qrse simulate --outdir run             (optional: make synthetic data)
    qrse ingest   --input data.csv --outdir run
    qrse fit      --outdir run
    qrse sample   --outdir run --chains 3 --draws 30000 --tune 4000
    qrse report   --outdir run

Settings resolve as flags > config file (--config, flat "key = value"
lines) > built-in defaults. Exit codes: 0 success, 2 input or config
problems, 3 optimization failure, 4 sampler failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, ingest, mapfit, mcmc, model, synthetic
from .errors import NoDescent, ParseError, QrseError, StuckChain

CLEANED_FILE = "cleaned.json"
HISTOGRAM_FILE = "histogram.json"
MAP_FILE = "map.json"
TRACE_FILE = "trace.csv"
REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"
FIT_CURVE_FILE = "fit_curve.csv"
QUANTAL_FILE = "quantal_response.csv"
VARIATION_FILE = "parameter_variation.csv"

# Baseline for the parameter-variation export: the symmetric reference case.
VARIATION_BASELINE = model.QrseParams(T=5.0, S=5.0, mu=0.0, alpha=0.0)
VARIATION_VALUES = {
    "T": (2.5, 5.0, 10.0),
    "S": (2.5, 5.0, 10.0),
    "mu": (-5.0, 0.0, 5.0),
    "alpha": (-5.0, 0.0, 5.0),
}

DEFAULTS = {
    "outdir": ".",
    "bins": "fd",
    "extreme_lo": ingest.DEFAULT_EXTREME_LOW,
    "extreme_hi": ingest.DEFAULT_EXTREME_HIGH,
    "years": "2000-2016",
    "chains": 3,
    "draws": 30000,
    "tune": 4000,
    "seed": 0,
    "restarts": mapfit.DEFAULT_RESTARTS,
    "reverse_kl": False,
    "prior_t_sd": mcmc.DEFAULT_SCALE_SD,
    "prior_s_sd": mcmc.DEFAULT_SCALE_SD,
    "prior_mu_sd": mcmc.DEFAULT_LOCATION_SD,
    "prior_alpha_sd": mcmc.DEFAULT_LOCATION_SD,
    "prior_bound_low": mcmc.TRUNCATION_LOW,
    "prior_bound_high": mcmc.TRUNCATION_HIGH,
    "prior_t_center": None,
    "prior_s_center": None,
    "prior_mu_center": None,
    "prior_alpha_center": None,
    "input": None,
    "t": 5.0,
    "s": 5.0,
    "mu": 0.0,
    "alpha": 0.0,
    "n": 10000,
    "grid_points": model.DEFAULT_GRID_POINTS,
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_KEY_TYPES = {
    "input": str,
    "outdir": str,
    "bins": str,
    "extreme_lo": float,
    "extreme_hi": float,
    "years": str,
    "chains": int,
    "draws": int,
    "tune": int,
    "seed": int,
    "restarts": int,
    "reverse_kl": _parse_bool,
    "prior_t_center": float,
    "prior_s_center": float,
    "prior_mu_center": float,
    "prior_alpha_center": float,
    "prior_t_sd": float,
    "prior_s_sd": float,
    "prior_mu_sd": float,
    "prior_alpha_sd": float,
    "prior_bound_low": float,
    "prior_bound_high": float,
    "t": float,
    "s": float,
    "mu": float,
    "alpha": float,
    "n": int,
    "grid_points": int,
}


def read_config_file(path) -> dict:
    """Flat key = value settings; '#' starts a comment, keys use underscores."""
    settings = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}: line {line_no}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _KEY_TYPES:
                raise ParseError(f"{path}: line {line_no}: unknown setting {key!r}")
            try:
                settings[key] = _KEY_TYPES[key](value)
            except ValueError as err:
                raise ParseError(f"{path}: line {line_no}: {err}") from None
    return settings


def _resolve(args: argparse.Namespace) -> dict:
    file_settings = read_config_file(args.config) if getattr(args, "config", None) else {}
    settings = dict(DEFAULTS)
    settings.update(file_settings)
    for key in _KEY_TYPES:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            settings[key] = flag_value
    return settings


def _parse_years(text: str) -> tuple[int, int]:
    parts = text.split("-")
    try:
        if len(parts) == 1:
            year = int(parts[0])
            return year, year
        if len(parts) == 2:
            low, high = int(parts[0]), int(parts[1])
            if low > high:
                raise ValueError
            return low, high
    except ValueError:
        pass
    raise ParseError(f"--years must be YYYY or YYYY-YYYY, got {text!r}")


def _parse_bins(text: str):
    if text == "fd":
        return "fd"
    try:
        count = int(text)
    except ValueError:
        raise ParseError(f"--bins must be an integer or 'fd', got {text!r}") from None
    if count < 1:
        raise ParseError(f"--bins must be positive, got {count}")
    return count


def _load_json(path: Path, what: str) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except FileNotFoundError:
        raise ParseError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: not valid JSON: {err}") from None
    if not isinstance(payload, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return payload


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _load_histogram(outdir: Path) -> ingest.HistogramSpec:
    payload = _load_json(outdir / HISTOGRAM_FILE, "histogram")
    try:
        return ingest.HistogramSpec.from_json(payload)
    except (KeyError, TypeError, ValueError) as err:
        raise ParseError(f"{outdir / HISTOGRAM_FILE}: {err}") from None


def cmd_ingest(args: argparse.Namespace) -> int:
    settings = _resolve(args)
    if not settings["input"]:
        raise ParseError("ingest requires --input (or 'input' in the config file)")
    years = _parse_years(settings["years"])
    outdir = Path(settings["outdir"])
    outdir.mkdir(parents=True, exist_ok=True)

    records, skipped_years = ingest.read_records(settings["input"], years)
    cleaned = ingest.clean(records, settings["extreme_lo"], settings["extreme_hi"])
    hist = ingest.build_histogram(cleaned.values, _parse_bins(str(settings["bins"])))

    _write_json(outdir / CLEANED_FILE, cleaned.to_json())
    _write_json(outdir / HISTOGRAM_FILE, hist.to_json())

    print(
        f"kept {cleaned.values.size} of {len(records)} records "
        f"({cleaned.excluded_missing} missing, {cleaned.excluded_extreme} extreme, "
        f"{skipped_years} outside {years[0]}-{years[1]})"
    )
    print(f"{'variable':<10} {'mean':>10} {'sd':>10} {'min':>10} {'max':>10}")
    for name, (mean, sd, low, high) in ingest.fiscal_summary(
        records, settings["extreme_lo"], settings["extreme_hi"]
    ).items():
        print(f"{name:<10} {mean:>10.2f} {sd:>10.2f} {low:>10.2f} {high:>10.2f}")
    print(f"wrote {outdir / CLEANED_FILE} and {outdir / HISTOGRAM_FILE}")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    settings = _resolve(args)
    outdir = Path(settings["outdir"])
    hist = _load_histogram(outdir)
    result = mapfit.fit_map(
        hist,
        restarts=settings["restarts"],
        seed=settings["seed"],
        reverse=settings["reverse_kl"],
    )
    _write_json(outdir / MAP_FILE, result.to_json())
    p = result.params
    print(f"T={p.T:.4f} S={p.S:.4f} mu={p.mu:.4f} alpha={p.alpha:.4f}")
    print(f"KL divergence: {result.kl:.6f}")
    print(f"Soofi ID:      {result.soofi_id:.6f}")
    print(
        f"converged={result.converged} iterations={result.iterations} "
        f"restarts={result.restarts_used}"
    )
    return 0


def _priors_from_settings(settings: dict, map_params: model.QrseParams) -> mcmc.PriorSpec:
    # Prior centers default to the MAP estimate; flags override per parameter.
    def center(key: str, fallback: float) -> float:
        return settings[key] if settings[key] is not None else fallback

    return mcmc.PriorSpec(
        t_center=center("prior_t_center", map_params.T),
        s_center=center("prior_s_center", map_params.S),
        mu_center=center("prior_mu_center", map_params.mu),
        alpha_center=center("prior_alpha_center", map_params.alpha),
        t_sd=settings["prior_t_sd"],
        s_sd=settings["prior_s_sd"],
        mu_sd=settings["prior_mu_sd"],
        alpha_sd=settings["prior_alpha_sd"],
        bound_low=settings["prior_bound_low"],
        bound_high=settings["prior_bound_high"],
    )


def cmd_sample(args: argparse.Namespace) -> int:
    settings = _resolve(args)
    outdir = Path(settings["outdir"])
    map_payload = _load_json(outdir / MAP_FILE, "MAP")
    try:
        map_result = mapfit.MapResult.from_json(map_payload)
    except (KeyError, TypeError, ValueError) as err:
        raise ParseError(f"{outdir / MAP_FILE}: {err}") from None
    cleaned_payload = _load_json(outdir / CLEANED_FILE, "cleaned sample")
    try:
        cleaned = ingest.CleanedSample.from_json(cleaned_payload)
    except (KeyError, TypeError, ValueError) as err:
        raise ParseError(f"{outdir / CLEANED_FILE}: {err}") from None

    priors = _priors_from_settings(settings, map_result.params)
    config = mcmc.ChainConfig(
        chains=settings["chains"],
        draws=settings["draws"],
        tune=settings["tune"],
        seed=settings["seed"],
    )
    posterior = mcmc.run_chains(cleaned.values, priors, config)
    mcmc.save_trace(posterior, outdir / TRACE_FILE)
    rates = " ".join(f"{r:.3f}" for r in posterior.acceptance_rates)
    print(f"acceptance rates: {rates}")
    print(f"wrote {outdir / TRACE_FILE}")
    return 0


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(header + "\n")
        for row in rows:
            handle.write(",".join(repr(float(v)) for v in row) + "\n")


def _export_fit_curve(path: Path, hist: ingest.HistogramSpec, params: model.QrseParams,
                      grid: model.EvalGrid) -> None:
    centers = 0.5 * (hist.edges[:-1] + hist.edges[1:])
    widths = np.diff(hist.edges)
    observed_density = hist.frequencies / widths
    table = model.build_density(params, grid)
    fitted = np.exp(model.log_kernel(centers, params) - table.log_z)
    _write_csv(
        path,
        "x,observed_density,fitted_pdf",
        zip(centers, observed_density, fitted),
    )


def _export_quantal_response(path: Path, params: model.QrseParams) -> None:
    table = model.build_density(params)
    x = table.grid.points
    entry = model.entry_probability(x, params)
    exit_ = model.exit_probability(x, params)
    _write_csv(
        path,
        "x,entry_probability,exit_probability,pdf,entry_joint_density,exit_joint_density",
        zip(x, entry, exit_, table.pdf, table.pdf * entry, table.pdf * exit_),
    )


def _export_parameter_variation(path: Path) -> None:
    base = VARIATION_BASELINE
    grid = model.EvalGrid.from_bounds(-90.0, 90.0, 1201)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("parameter,value,x,pdf\n")
        for name, values in VARIATION_VALUES.items():
            for value in values:
                fields = {"T": base.T, "S": base.S, "mu": base.mu, "alpha": base.alpha}
                fields[name] = value
                table = model.build_density(model.QrseParams(**fields), grid)
                for x, p in zip(grid.points.tolist(), table.pdf.tolist()):
                    handle.write(f"{name},{value!r},{x!r},{p!r}\n")


def cmd_report(args: argparse.Namespace) -> int:
    settings = _resolve(args)
    outdir = Path(settings["outdir"])
    trace_path = outdir / TRACE_FILE
    if not trace_path.exists():
        raise ParseError(f"trace file not found: {trace_path}")
    posterior = mcmc.load_trace(trace_path)
    hist = _load_histogram(outdir)

    report = diagnostics.summarize(posterior, hist)
    _write_json(outdir / REPORT_JSON, report.to_json())
    text = report.to_text()
    (outdir / REPORT_TEXT).write_text(text + "\n", encoding="utf-8")

    means = {name: summary.mean for name, summary in report.rows}
    mean_params = model.QrseParams(
        T=means["T"], S=means["S"], mu=means["mu"], alpha=means["alpha"]
    )
    grid = diagnostics.report_grid(mean_params, hist)
    _export_fit_curve(outdir / FIT_CURVE_FILE, hist, mean_params, grid)
    _export_quantal_response(outdir / QUANTAL_FILE, mean_params)
    _export_parameter_variation(outdir / VARIATION_FILE)

    print(text)
    print(
        f"wrote {outdir / REPORT_JSON}, {outdir / REPORT_TEXT}, "
        f"{outdir / FIT_CURVE_FILE}, {outdir / QUANTAL_FILE}, {outdir / VARIATION_FILE}"
    )
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    settings = _resolve(args)
    outdir = Path(settings["outdir"])
    outdir.mkdir(parents=True, exist_ok=True)
    params = model.QrseParams(
        T=settings["t"], S=settings["s"], mu=settings["mu"], alpha=settings["alpha"]
    )
    config = synthetic.SampleConfig(n=settings["n"], seed=settings["seed"])
    draws = synthetic.sample(params, config)

    # District rows that ingest maps back onto exactly these x values:
    # positive returns become per-pupil expenditures, negative ones
    # per-capita taxes, with unit enrollment and population.
    path = outdir / "synthetic.csv"
    year = 2008
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(",".join(ingest.CSV_HEADER) + "\n")
        for index, x in enumerate(draws.tolist()):
            spend = max(x, 0.0)
            tax = max(-x, 0.0)
            handle.write(f"synth-{index:06d},{year},{spend!r},{tax!r},1,1\n")
    print(
        f"wrote {draws.size} rows to {path} "
        f"(mean {draws.mean():.3f}, sd {draws.std(ddof=1):.3f})"
    )
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--outdir", help="directory for pipeline artifacts")
    parser.add_argument("--config", help="flat key = value settings file")
    parser.add_argument("--seed", type=int, help="seed for all randomized steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrse",
        description="Fit maximum-entropy return distributions to district data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="read, clean, and bin a district CSV")
    _add_common(p_ingest)
    p_ingest.add_argument("--input", help="district CSV file")
    p_ingest.add_argument("--bins", help="bin count or 'fd'")
    p_ingest.add_argument("--extreme-lo", type=float, dest="extreme_lo",
                          help="lower extreme-value bound, thousands")
    p_ingest.add_argument("--extreme-hi", type=float, dest="extreme_hi",
                          help="upper extreme-value bound, thousands")
    p_ingest.add_argument("--years", help="year filter, YYYY or YYYY-YYYY")

    p_fit = sub.add_parser("fit", help="MAP point estimate from the histogram")
    _add_common(p_fit)
    p_fit.add_argument("--restarts", type=int, help="extra Latin-hypercube starts")
    p_fit.add_argument("--reverse-kl", action="store_const", const=True,
                       dest="reverse_kl", help="fit the likelihood-consistent direction")

    p_sample = sub.add_parser("sample", help="posterior MCMC from the MAP point")
    _add_common(p_sample)
    p_sample.add_argument("--chains", type=int, help="number of chains (>= 2)")
    p_sample.add_argument("--draws", type=int, help="post-tune draws per chain")
    p_sample.add_argument("--tune", type=int, help="adaptation steps per chain")
    for param in ("t", "s", "mu", "alpha"):
        p_sample.add_argument(f"--prior-{param}-center", type=float,
                              dest=f"prior_{param}_center",
                              help=f"prior center for {param} (default: MAP)")
        p_sample.add_argument(f"--prior-{param}-sd", type=float,
                              dest=f"prior_{param}_sd",
                              help=f"prior sd for {param}")
    p_sample.add_argument("--prior-bound-low", type=float, dest="prior_bound_low",
                          help="lower truncation bound for T and S")
    p_sample.add_argument("--prior-bound-high", type=float, dest="prior_bound_high",
                          help="upper truncation bound for T and S")

    p_report = sub.add_parser("report", help="diagnostics table and plot data")
    _add_common(p_report)

    p_sim = sub.add_parser("simulate", help="generate synthetic district data")
    _add_common(p_sim)
    p_sim.add_argument("--t", type=float, help="behavior temperature")
    p_sim.add_argument("--s", type=float, help="market scale")
    p_sim.add_argument("--mu", type=float, help="tipping point")
    p_sim.add_argument("--alpha", type=float, help="barycenter")
    p_sim.add_argument("-n", "--n", type=int, dest="n", help="number of draws")

    return parser


_HANDLERS = {
    "ingest": cmd_ingest,
    "fit": cmd_fit,
    "sample": cmd_sample,
    "report": cmd_report,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except StuckChain as err:
        print(f"error: sampler failed: {err}", file=sys.stderr)
        return 4
    except NoDescent as err:
        print(f"error: optimization failed: {err}", file=sys.stderr)
        return 3
    except (QrseError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
