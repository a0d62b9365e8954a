"""Command-line entry point: ``pauliprobe run`` and ``pauliprobe validate``."""

from __future__ import annotations

import functools
import json
import sys

import click

from .errors import AssumptionFailure, CapExceeded, ConfigError
from .harness import EXIT_ASSUMPTION, EXIT_CAP, EXIT_CONFIG, MODES, ExperimentConfig, default_workers, run, validate
from .io import load_json


def _split(value: str | None, cast=str):
    if value is None:
        return None
    try:
        return tuple(cast(v.strip()) for v in value.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {value!r}") from exc


def _options(fn):
    opts = [
        click.option("--mode", type=click.Choice(MODES), required=True),
        click.option("--channel", "channel_path", type=click.Path(dir_okay=False), required=True, help="Channel JSON."),
        click.option("--spam", "spam_path", type=click.Path(dir_okay=False), help="SPAM JSON with optional prep/meas channels."),
        click.option("--epsilon", type=float, default=0.1, show_default=True),
        click.option("--delta", type=float, default=0.05, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--workers", type=int, default=None, help="Worker threads (default: $PAULI_PROBE_THREADS or 1)."),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--force", is_flag=True, help="Run even if the noise assumptions fail."),
        click.option("--graph", "graph_path", type=click.Path(dir_okay=False), help="Factor graph JSON (factored mode)."),
        click.option("--qubits", help="Comma-separated qubits (estimate-group, simulate)."),
        click.option("--targets", help="Comma-separated Pauli labels, or 'weight1'."),
        click.option("--m", "m", type=int, default=0, show_default=True, help="Sequence length (simulate)."),
        click.option("--shots", type=int, default=None, help="Shots (simulate) or t per round (tree)."),
        click.option("--u", "u", type=int, default=16, show_default=True, help="Probes per set (tree)."),
        click.option("--s", "s", type=int, default=4, show_default=True, help="Candidates kept per set (tree)."),
        click.option("--records", is_flag=True, help="Keep every histogram in records.jsonl."),
    ]
    return functools.reduce(lambda f, o: o(f), reversed(opts), fn)


def _config(mode, channel_path, spam_path, epsilon, delta, seed, workers, out, force, graph_path, qubits, targets, m, shots, u, s, records) -> ExperimentConfig:
    return ExperimentConfig(
        mode=mode,
        channel=load_json(channel_path),
        spam=load_json(spam_path) if spam_path else None,
        epsilon=epsilon,
        delta=delta,
        seed=seed,
        workers=workers if workers is not None else default_workers(),
        out=out,
        force=force,
        graph=load_json(graph_path) if graph_path else None,
        qubits=_split(qubits, int),
        targets=_split(targets),
        m=m,
        shots=shots,
        u=u,
        s=s,
        records=records,
    )


@click.group()
@click.version_option(package_name="artifact")
def cli():
    """Estimate Pauli channels from simulated cycle benchmarking experiments."""


@cli.command("run")
@_options
def run_cmd(**kw):
    """Run one experiment and write report, budget, decay curve and records."""
    cfg = _config(**kw)
    art = run(cfg)
    if cfg.out:
        for p in art.write(cfg.out):
            click.echo(str(p), err=True)
    else:
        click.echo(json.dumps(art.report, sort_keys=True, indent=1))
    click.echo(json.dumps({k: v for k, v in art.budget.items() if k != "provenance"}, sort_keys=True), err=True)


@cli.command("validate")
@_options
def validate_cmd(**kw):
    """Dry run: parse inputs, print the sample budget and check assumptions."""
    cfg = _config(**kw)
    rep = validate(cfg)
    click.echo(json.dumps(rep, sort_keys=True, indent=1))
    if not rep["assumptions"]["ok"] and not cfg.force:
        raise AssumptionFailure("noise assumptions fail")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="pauliprobe", standalone_mode=False)
    except click.exceptions.Abort:
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except CapExceeded as exc:
        click.echo(f"cap exceeded: {exc}", err=True)
        return EXIT_CAP
    except AssumptionFailure as exc:
        click.echo(f"assumption check failed: {exc}", err=True)
        return EXIT_ASSUMPTION
    return 0


if __name__ == "__main__":
    sys.exit(main())
