"""Command-line interface.

Exit status: 0 success, 1 usage error, 2 data error, 3 numeric or
convergence failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attribution import DEFAULT_MAX_DRAWS, attribute
from .core import InvalidInputError, Link, ModelSpec, NumericError
from .diagnostics import UnsupportedError, diagnostics, summarize, summarize_values
from .fitting import fit
from .gradcheck import check_gradients
from .ingest import (
    EmptyDatasetError,
    JourneyFileError,
    PreprocessConfig,
    preprocess,
    read_journey_file,
    write_journey_file,
)
from .io import (
    fit_metadata,
    params_to_dict,
    read_attribution_draws,
    read_draws_csv,
    read_json,
    spec_from_dict,
    spec_to_dict,
    write_attribution,
    write_draws_csv,
    write_json,
)
from .likelihood import PriorConfig
from .plotting import render_density_svg
from .sampler import SamplerConfig, SamplerInitError
from .simulator import SimConfig, simulate_dataset

log = logging.getLogger("mta_bayes")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
RHAT_LIMIT = 1.05


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def default_seed() -> int:
    value = os.environ.get("ATTR_SEED")
    if value is None:
        return 0
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"ATTR_SEED must be an integer, got {value!r}") from None


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    overrides = {}
    if args.mu is not None:
        overrides["mu"] = args.mu
    if args.gamma is not None:
        overrides["gamma"] = args.gamma
    config = SimConfig(
        n_journeys=args.journeys,
        n_channels=args.channels,
        touches_per_journey=args.touches,
        inter_event_rate=args.rate,
        link=args.link,
        seed=args.seed,
        sigma_y=args.sigma_y,
        param_overrides=overrides,
    )
    names = args.channel_names.split(",") if args.channel_names else [f"ch{c}" for c in range(args.channels)]
    if len(names) != args.channels:
        raise UsageError(f"--channel-names lists {len(names)} names for {args.channels} channels")
    journeys, truth = simulate_dataset(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_journey_file(out, journeys, names)
    truth_path = Path(args.truth) if args.truth else out.with_suffix(".truth.json")
    write_json(
        truth_path,
        {
            "channels": names,
            "model": {"n_channels": args.channels, "link": config.link.value},
            "simulation": {
                "n_journeys": args.journeys,
                "touches_per_journey": args.touches,
                "inter_event_rate": args.rate,
                "seed": args.seed,
            },
            "params": params_to_dict(truth),
        },
    )
    print(f"wrote {len(journeys)} journeys to {out} and ground truth to {truth_path}")
    return EXIT_OK


def _summary_table(draws, diag=None, names=None) -> str:
    summary = summarize(draws)
    names = names or draws.names
    header = f"{'parameter':<22}{'mean':>11}{'sd':>10}{'2.5%':>11}{'50%':>11}{'97.5%':>11}{'width95':>10}"
    if diag is not None:
        header += f"{'rhat':>11}{'ess_bulk':>10}"
    lines = [header]
    for name in names:
        s = summary[name]
        row = (
            f"{name:<22}{s['mean']:>11.4g}{s['sd']:>10.3g}{s['q2.5']:>11.4g}"
            f"{s['q50']:>11.4g}{s['q97.5']:>11.4g}{s['width95']:>10.3g}"
        )
        if diag is not None:
            i = draws.names.index(name)
            r = diag.rhat_label(i)
            ess = diag.ess_bulk[i]
            row += f"{r:>11.4f}" if isinstance(r, float) else f"{r:>11}"
            row += f"{ess:>10.0f}" if math.isfinite(ess) else f"{'-':>10}"
        lines.append(row)
        if "half_life" in s:
            hl = s["half_life"]
            lines.append(f"{'  half-life (days)':<22}{hl['mean']:>11.4g}{'':>10}{hl['q2.5']:>11.4g}{hl['q50']:>11.4g}{hl['q97.5']:>11.4g}")
    return "\n".join(lines) + "\n"


def _visible(names):
    return [n for n in names if not n.startswith("b[")]


def cmd_fit(args) -> int:
    data = read_journey_file(args.journeys)
    journeys = data.journeys
    if args.preprocess:
        journeys = preprocess(
            journeys,
            PreprocessConfig(args.max_touches, args.target_positive_ratio, args.subsample_seed, args.max_customers),
        )
    if not journeys:
        raise EmptyDatasetError(f"{args.journeys}: no journeys")
    spec = ModelSpec(
        n_channels=len(data.channels),
        link=args.link,
        include_random_effects=args.random_effects,
        include_interaction=not args.no_interaction,
    )
    priors = PriorConfig(args.sigma_b_rate, args.beta_scale, args.gamma_sd, args.mu_sd, args.sigma_y_scale)
    config = SamplerConfig(
        n_chains=args.chains,
        n_warmup=args.warmup,
        n_samples=args.samples,
        target_accept=args.target_accept,
        max_leapfrog_steps=args.max_leapfrog,
        seed=args.seed,
        init_jitter=args.init_jitter,
        trajectory_length=args.trajectory_length,
        kernel=args.kernel,
        metric=args.metric,
        n_workers=args.workers,
        init=args.init,
        init_restarts=args.init_restarts,
    )
    draws = fit(journeys, spec, priors, config, data.channel_names)
    diag = diagnostics(draws) if draws.n_chains >= 2 and draws.n_samples >= 4 else None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_journey_file(out / "dataset.jsonl", journeys, data.channel_names)
    write_draws_csv(out / "draws.csv", draws)
    extra = dict(vars(config))
    extra["priors"] = vars(priors)
    if diag is not None:
        write_json(out / "diagnostics.json", fit_metadata(draws, diag, spec, data.channel_names, extra))
    else:
        write_json(out / "diagnostics.json", {"model": {**spec_to_dict(spec), "channels": data.channel_names}, "sampler": extra})
    table = _summary_table(draws, diag, _visible(draws.names))
    (out / "summary.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    print(f"divergences per chain: {draws.divergence_count.tolist()}; wrote {out}/draws.csv")

    worst = diag.max_rhat() if diag is not None else math.nan
    if worst > RHAT_LIMIT:
        msg = f"max R-hat {worst:.4f} exceeds {RHAT_LIMIT}"
        if args.allow_nonconverged:
            log.warning("%s (allowed)", msg)
            return EXIT_OK
        print(f"error: {msg}; rerun with more warmup or pass --allow-nonconverged", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_attribute(args) -> int:
    data = read_journey_file(args.journeys)
    draws = read_draws_csv(args.draws)
    meta_path = Path(args.diagnostics) if args.diagnostics else Path(args.draws).with_name("diagnostics.json")
    meta = read_json(meta_path)
    spec = spec_from_dict(meta["model"])
    if spec.n_channels != len(data.channels):
        raise InvalidInputError(
            f"journey file has {len(data.channels)} channels but the fit used {spec.n_channels}"
        )
    report = attribute(data.journeys, draws, spec, data.channel_names, max_draws=args.max_draws)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_attribution(out / "attribution.json", out / "attribution.csv", report)
    print(f"{'channel':<20}{'mean':>12}{'sd':>12}{'2.5%':>12}{'97.5%':>12}")
    for name, s in report.summaries().items():
        print(f"{name:<20}{s['mean']:>12.4g}{s['sd']:>12.4g}{s['q2.5']:>12.4g}{s['q97.5']:>12.4g}")
    return EXIT_OK


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_")


def cmd_report(args) -> int:
    if not args.draws and not args.attribution:
        raise UsageError("report needs --draws and/or --attribution")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = ""
    if args.draws:
        draws = read_draws_csv(args.draws)
        try:
            diag = diagnostics(draws)
        except UnsupportedError:
            diag = None
        names = _visible(draws.names)
        text += _summary_table(draws, diag, names)
        flat = draws.flat()
        for name in names:
            svg = render_density_svg(flat[:, draws.names.index(name)], name)
            (out / f"param_{_slug(name)}.svg").write_text(svg, encoding="utf-8")
    if args.attribution:
        values = read_attribution_draws(args.attribution)
        text += "\nattribution\n"
        text += f"{'channel':<22}{'mean':>11}{'sd':>10}{'2.5%':>11}{'97.5%':>11}{'width95':>10}\n"
        for name, v in values.items():
            s = summarize_values(v)
            text += f"{name:<22}{s['mean']:>11.4g}{s['sd']:>10.3g}{s['q2.5']:>11.4g}{s['q97.5']:>11.4g}{s['width95']:>10.3g}\n"
            if v.size >= 2:
                svg = render_density_svg(v, f"attribution {name}")
                (out / f"attribution_{_slug(name)}.svg").write_text(svg, encoding="utf-8")
    (out / "summary.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_check_gradients(args) -> int:
    result = check_gradients(
        n_points=args.points,
        n_channels=args.channels,
        n_journeys=args.journeys_per_point,
        seed=args.seed,
        random_effects=not args.no_random_effects,
    )
    print(
        f"checked {result.n_points} points ({result.n_coordinates} coordinates) in {result.seconds:.1f}s; "
        f"max relative error {result.max_rel_error:.3g}"
    )
    for line in result.failures[:20]:
        print("  FAIL " + line)
    if not result.passed:
        print(f"{len(result.failures)} coordinates outside tolerance", file=sys.stderr)
        return EXIT_NUMERIC
    print("all gradients agree with finite differences")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser(seed: int) -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="mta-bayes", description="Bayesian multi-touch attribution.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON file of flag defaults, keyed by subcommand or flat")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    subs = {}

    p = sub.add_parser("simulate", help="generate a synthetic journey file with known parameters")
    p.add_argument("--journeys", type=int, default=10_000)
    p.add_argument("--channels", type=int, default=5)
    p.add_argument("--touches", type=int, default=10, help="touches per journey")
    p.add_argument("--rate", type=float, default=1.0, help="rate of the exponential inter-touch gaps (per day)")
    p.add_argument("--link", choices=[l.value for l in Link], default="identity")
    p.add_argument("--sigma-y", type=float, default=0.1, help="outcome noise sd under the identity link")
    p.add_argument("--mu", type=float, default=None, help="override the baseline (default 0)")
    p.add_argument("--gamma", type=float, default=None, help="override the sampled interaction strength")
    p.add_argument("--channel-names", default=None, help="comma-separated channel names")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", default="journeys.jsonl")
    p.add_argument("--truth", default=None, help="ground-truth JSON (default: <out stem>.truth.json)")
    p.set_defaults(func=cmd_simulate)
    subs["simulate"] = p

    p = sub.add_parser("fit", help="sample the posterior for a journey file")
    p.add_argument("--journeys", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--link", choices=[l.value for l in Link], default="identity")
    p.add_argument("--random-effects", action="store_true", help="per-customer random intercepts")
    p.add_argument("--no-interaction", action="store_true")
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--max-leapfrog", type=int, default=1024)
    p.add_argument("--trajectory-length", type=float, default=4.5)
    p.add_argument("--init-jitter", type=float, default=2.0)
    p.add_argument(
        "--init", choices=["optimize", "jitter"], default="optimize",
        help="refine jittered starting points by L-BFGS, or start from them directly",
    )
    p.add_argument("--init-restarts", type=int, default=4, help="L-BFGS climbs per chain; the best is kept")
    p.add_argument("--kernel", choices=["hmc", "rwm"], default="hmc")
    p.add_argument("--metric", choices=["auto", "diag", "dense"], default="auto")
    p.add_argument("--workers", type=int, default=1, help="threads running chains")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--sigma-b-rate", type=float, default=0.5)
    p.add_argument("--beta-scale", type=float, default=10.0)
    p.add_argument("--gamma-sd", type=float, default=10.0)
    p.add_argument("--mu-sd", type=float, default=10.0)
    p.add_argument("--sigma-y-scale", type=float, default=1.0)
    p.add_argument("--preprocess", action="store_true", help="apply the touch cap and outcome balancing")
    p.add_argument("--max-touches", type=int, default=5)
    p.add_argument("--target-positive-ratio", type=float, default=0.7)
    p.add_argument("--max-customers", type=int, default=None)
    p.add_argument("--subsample-seed", type=int, default=seed)
    p.add_argument("--allow-nonconverged", action="store_true")
    p.set_defaults(func=cmd_fit)
    subs["fit"] = p

    p = sub.add_parser("attribute", help="per-channel removal-effect attribution from posterior draws")
    p.add_argument("--journeys", required=True)
    p.add_argument("--draws", required=True)
    p.add_argument("--diagnostics", default=None, help="fit metadata JSON (default: next to --draws)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--max-draws", type=int, default=DEFAULT_MAX_DRAWS)
    p.set_defaults(func=cmd_attribute)
    subs["attribute"] = p

    p = sub.add_parser("report", help="summary table and SVG density plots")
    p.add_argument("--draws", default=None)
    p.add_argument("--attribution", default=None, help="attribution JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    subs["report"] = p

    p = sub.add_parser("check-gradients", help="finite-difference check of the analytic gradient")
    p.add_argument("--points", type=int, default=100, help="random points per link")
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--journeys-per-point", type=int, default=50)
    p.add_argument("--no-random-effects", action="store_true")
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_check_gradients)
    subs["check-gradients"] = p
    return parser, subs


def _apply_config(path: str, command: str, subs):
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    values = cfg.get(command, cfg) if isinstance(cfg.get(command), dict) else cfg
    parser = subs[command]
    known = {a.dest for a in parser._actions}
    defaults = {}
    for key, value in values.items():
        if isinstance(value, dict):
            continue
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"{path}: unknown option {key!r} for {command}")
        defaults[dest] = value
    parser.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser, subs = build_parser(default_seed())
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        if args.config:
            _apply_config(args.config, args.command, subs)
            args = parser.parse_args(argv)
        logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (JourneyFileError, EmptyDatasetError, InvalidInputError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, SamplerInitError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def cli(argv=None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
