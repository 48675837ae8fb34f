"""Command-line front end: ``run``, ``verify`` and ``reproduce``.

Exit codes: 0 success, 1 failed self-check, 2 bad configuration or
arguments, 3 I/O failure. Progress goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import re
import sys
from pathlib import Path

from . import __version__
from .adjustment import Policy
from .bootstrap import BootstrapConfig
from .checks import SCOPES, run_scope
from .demand_models import LinearDemand, LinearTwoParamDemand, LogLinearDemand
from .presets import FIGURES, figure_panels
from .rng import algorithm_tag
from .simulation import THREADS_ENV, ExperimentConfig, default_threads, run_experiment

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

COLUMN_ORDER = (Policy.ORACLE, Policy.PLUGIN, Policy.BOOTSTRAP)

EXPERIMENT_KEYS = {
    "model",
    "a",
    "theta",
    "theta1",
    "theta2",
    "noise_var",
    "n_grid",
    "replications",
    "seed",
    "policies",
    "price_low",
    "price_high",
    "floor",
    "antithetic",
}
BOOTSTRAP_KEYS = {
    "draws_per_obs",
    "search_halfwidth_mult",
    "grid_step_mult",
    "max_coord_rounds",
    "second_halfwidth",
    "second_step",
    "resampling",
    "antithetic",
}


class ConfigError(ValueError):
    """Malformed configuration; the message names the line and field."""


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


# Configuration


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[(.+)\]$", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", line, re.I):
            return i
    return None


def _where(text, section, key=None) -> str:
    line = _line_of(text, section, key)
    field = f"[{section}]" + (f" {key}" if key else "")
    return f"line {line}: {field}" if line else field


def _parse_n_grid(raw: str) -> tuple:
    raw = raw.strip()
    if ":" in raw:
        parts = [int(p) for p in raw.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError("range form is start:stop:step with inclusive stop")
        return tuple(range(parts[0], parts[1] + 1, parts[2]))
    return tuple(int(p) for p in raw.split(",") if p.strip())


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def parse_count(raw) -> int:
    """Integer count that also accepts scientific notation such as ``1e4``."""
    value = float(raw)
    if not value.is_integer() or value < 1:
        raise ValueError(f"expected a positive whole number, got {raw!r}")
    return int(value)


def _model_from(fields: dict):
    kind = fields.get("model", "linear").strip().lower()
    if kind == "linear":
        return LinearDemand(float(fields.get("a", 60.0))), (float(fields["theta"]),)
    if kind == "loglinear":
        return LogLinearDemand(float(fields.get("a", 8.0))), (float(fields["theta"]),)
    if kind == "linear2":
        return LinearTwoParamDemand(), (float(fields["theta1"]), float(fields["theta2"]))
    raise ValueError(f"unknown model {kind!r}; choose linear, loglinear or linear2")


def parse_config(text: str) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from INI text.

    The ``[experiment]`` section is required; ``[bootstrap]`` is optional.
    Errors raise :class:`ConfigError` naming the offending line and field.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from None
    unknown_sections = [s for s in parser.sections() if s not in ("experiment", "bootstrap")]
    if unknown_sections:
        raise ConfigError(f"{_where(text, unknown_sections[0])}: unknown section")
    if not parser.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    exp = dict(parser.items("experiment"))
    boot = dict(parser.items("bootstrap")) if parser.has_section("bootstrap") else {}
    for section, fields, allowed in (("experiment", exp, EXPERIMENT_KEYS), ("bootstrap", boot, BOOTSTRAP_KEYS)):
        for key in fields:
            if key not in allowed:
                raise ConfigError(f"{_where(text, section, key)}: unknown key")

    def field(section, fields, key, convert, default=None):
        if key not in fields:
            if default is None:
                raise ConfigError(f"{_where(text, section)}: missing required key {key!r}")
            return default
        try:
            return convert(fields[key])
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{_where(text, section, key)}: {exc}") from None

    try:
        model, params = _model_from(exp)
    except KeyError as exc:
        raise ConfigError(f"{_where(text, 'experiment')}: missing required key {exc.args[0]!r}") from None
    except ValueError as exc:
        key = "model" if "model" in str(exc) else "theta"
        raise ConfigError(f"{_where(text, 'experiment', key)}: {exc}") from None

    default_boot = BootstrapConfig(resampling="projected")
    try:
        boot_cfg = BootstrapConfig(
            draws_per_obs=field("bootstrap", boot, "draws_per_obs", parse_count, default_boot.draws_per_obs),
            search_halfwidth_mult=field("bootstrap", boot, "search_halfwidth_mult", float, default_boot.search_halfwidth_mult),
            grid_step_mult=field("bootstrap", boot, "grid_step_mult", float, default_boot.grid_step_mult),
            max_coord_rounds=field("bootstrap", boot, "max_coord_rounds", parse_count, default_boot.max_coord_rounds),
            second_halfwidth=field("bootstrap", boot, "second_halfwidth", float, default_boot.second_halfwidth),
            second_step=field("bootstrap", boot, "second_step", float, default_boot.second_step),
            resampling=field("bootstrap", boot, "resampling", str.strip, default_boot.resampling),
            antithetic=field("bootstrap", boot, "antithetic", _parse_bool, default_boot.antithetic),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{_where(text, 'bootstrap')}: {exc}") from None
    floor = field("experiment", exp, "floor", float, 1e-3)
    if not floor > 0:
        raise ConfigError(f"{_where(text, 'experiment', 'floor')}: floor must be positive")
    boot_cfg = BootstrapConfig(**{**_boot_dict(boot_cfg), "floor": floor})
    default_policies = "oracle,boot" if model.n_params > 1 else "oracle,dd,boot"
    try:
        return ExperimentConfig(
            model=model,
            true_params=params,
            noise_var=field("experiment", exp, "noise_var", float),
            n_grid=field("experiment", exp, "n_grid", _parse_n_grid, tuple(range(10, 101, 10))),
            replications=field("experiment", exp, "replications", parse_count, 10_000),
            seed=field("experiment", exp, "seed", int, 0),
            policies=field(
                "experiment", exp, "policies", lambda s: tuple(p.strip() for p in s.split(",") if p.strip()), None
            )
            if "policies" in exp
            else tuple(default_policies.split(",")),
            price_range=(
                field("experiment", exp, "price_low", float, 0.1),
                field("experiment", exp, "price_high", float, 6.0),
            ),
            bootstrap=boot_cfg,
            floor=floor,
            antithetic=field("experiment", exp, "antithetic", _parse_bool, True),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{_where(text, 'experiment')}: {exc}") from None


def _boot_dict(cfg: BootstrapConfig) -> dict:
    return {
        "B": cfg.B,
        "draws_per_obs": cfg.draws_per_obs,
        "search_halfwidth_mult": cfg.search_halfwidth_mult,
        "grid_step_mult": cfg.grid_step_mult,
        "max_coord_rounds": cfg.max_coord_rounds,
        "seed": cfg.seed,
        "second_halfwidth": cfg.second_halfwidth,
        "second_step": cfg.second_step,
        "resampling": cfg.resampling,
        "floor": cfg.floor,
        "antithetic": cfg.antithetic,
    }


def config_to_dict(config: ExperimentConfig) -> dict:
    """Every field of the resolved configuration that influences output."""
    model = config.model
    return {
        "model": model.kind,
        "model_constants": {k: getattr(model, k) for k in ("a", "gamma") if hasattr(model, k)},
        "true_params": list(config.true_params),
        "noise_var": config.noise_var,
        "n_grid": list(config.n_grid),
        "replications": config.replications,
        "seed": config.seed,
        "policies": [p.value for p in config.policies],
        "price_range": list(config.price_range),
        "floor": config.floor,
        "antithetic": config.antithetic,
        "bootstrap": _boot_dict(config.bootstrap),
    }


def config_digest(config: ExperimentConfig) -> str:
    """SHA-256 over the resolved config, the RNG stack and the tool version."""
    payload = {"config": config_to_dict(config), "rng": algorithm_tag(), "version": __version__}
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# Output


def _columns(config: ExperimentConfig):
    return [p for p in COLUMN_ORDER if p in config.policies]


def format_csv(config: ExperimentConfig, records) -> str:
    """CSV text: ``n,pto,<policies>`` with 10 significant digits and ``\\n`` endings."""
    cols = _columns(config)
    lines = [",".join(["n", "pto", *(p.value for p in cols)])]
    for r in records:
        values = [r.pto_relative, *(r.improvement[p] for p in cols)]
        lines.append(",".join([str(r.n), *(f"{v:.10g}" for v in values)]))
    return "\n".join(lines) + "\n"


def _write_outputs(config, records, out: Path, config_path: str | None) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n", encoding="ascii") as fh:
        fh.write(format_csv(config, records))
    manifest = {
        "config_path": config_path,
        "output_path": str(out),
        "config": config_to_dict(config),
        "rng": algorithm_tag(),
        "tool_version": __version__,
        "seed": config.seed,
        "digest": config_digest(config),
        "diagnostics": [
            {
                "n": r.n,
                "replications": r.replications,
                "invalid": r.invalid,
                "zero_pto": r.zero_pto,
                "truncation_rate": r.truncation_rate,
                "boot_truncation_rate": r.boot_truncation_rate,
                "pto_relative_se": r.pto_relative_se,
                "improvement_se": {p.value: r.improvement_se[p] for p in r.improvement_se},
            }
            for r in records
        ],
    }
    with open(manifest_path(out), "w", newline="\n", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def manifest_path(out: Path) -> Path:
    return Path(str(out) + ".manifest.json")


def _progress(label):
    def report(record):
        print(f"{label}n={record.n} done ({record.replications} replications)", flush=True)

    return report


# Commands


def _override(config: ExperimentConfig, reps=None, seed=None) -> ExperimentConfig:
    changes = {}
    if reps is not None:
        changes["replications"] = reps
    if seed is not None:
        changes["seed"] = seed
    return dataclasses.replace(config, **changes) if changes else config


def cmd_run(config_file: str, out_file: str, reps=None, seed=None, threads=None) -> int:
    try:
        text = Path(config_file).read_text(encoding="utf-8")
    except OSError as exc:
        _err(f"error: cannot read config {config_file}: {exc.strerror or exc}")
        return EXIT_IO
    try:
        config = _override(parse_config(text), reps, seed)
    except (ConfigError, ValueError) as exc:
        _err(f"error: {config_file}: {exc}")
        return EXIT_CONFIG
    records = run_experiment(config, threads=threads, progress=_progress(""))
    try:
        _write_outputs(config, records, Path(out_file), config_file)
    except OSError as exc:
        _err(f"error: cannot write {out_file}: {exc.strerror or exc}")
        return EXIT_IO
    print(f"wrote {out_file} (digest {config_digest(config)[:12]})")
    return EXIT_OK


def cmd_verify(scope: str = "all") -> int:
    try:
        checks = run_scope(scope)
    except ValueError as exc:
        _err(f"error: {exc}")
        return EXIT_CONFIG
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    if failed:
        _err(f"{len(failed)} check(s) failed:")
        for c in failed:
            _err(f"  {c.name}")
        return EXIT_CHECK_FAILED
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


def cmd_reproduce(figure: str, reps=None, seed=0, threads=None, out_dir=None) -> int:
    if figure not in FIGURES:
        _err(f"error: unknown figure {figure!r}; choose from {', '.join(sorted(FIGURES))}")
        return EXIT_CONFIG
    panels = figure_panels(figure, replications=reps or 10_000, seed=seed or 0)
    target = Path(out_dir or Path("results") / figure)
    for name, config in panels.items():
        records = run_experiment(config, threads=threads, progress=_progress(f"{figure}/{name} "))
        out = target / f"{name}.csv"
        try:
            _write_outputs(config, records, out, None)
        except OSError as exc:
            _err(f"error: cannot write {out}: {exc.strerror or exc}")
            return EXIT_IO
        print(f"wrote {out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _err(f"{self.prog}: error: {message}")
        raise SystemExit(EXIT_CONFIG)


def _count_arg(raw):
    try:
        return parse_count(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ptoadjust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--reps", type=_count_arg, help="replications per sample size (accepts 1e4)")
        p.add_argument("--seed", type=int, help="base RNG seed")
        p.add_argument(
            "--threads", type=_count_arg, help=f"worker processes (default ${THREADS_ENV} or 1); output does not depend on it"
        )

    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    common(run)

    verify = sub.add_parser("verify", help="run the numerical self-checks")
    verify.add_argument("--scope", choices=[*SCOPES, "all"], default="all")

    repro = sub.add_parser("reproduce", help="run all panels of a figure preset")
    repro.add_argument("figure", help=f"one of {', '.join(sorted(FIGURES))}")
    repro.add_argument("--out-dir", help="output directory (default results/<figure>)")
    common(repro)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = getattr(args, "threads", None)
    if threads is None and args.command != "verify":
        try:
            threads = default_threads()
        except ValueError as exc:
            _err(f"error: {exc}")
            return EXIT_CONFIG
    if args.command == "run":
        return cmd_run(args.config, args.out, args.reps, args.seed, threads)
    if args.command == "verify":
        return cmd_verify(args.scope)
    return cmd_reproduce(args.figure, args.reps, args.seed, threads, args.out_dir)


if __name__ == "__main__":
    sys.exit(main())
