"""Command-line interface for eh-bounds."""

import json
import sys
from importlib.metadata import PackageNotFoundError
from importlib.metadata import version as get_version
from pathlib import Path
from typing import Callable, List, Optional

import anyio
import typer
from pydantic import ValidationError
from typing_extensions import Annotated

from .config import COMMANDS, load_config, resolve_workers
from .errors import ConsistencyError, DomainError
from .logs import configure_logging
from .runner import COLUMNS, Runner, emit

EXIT_INVALID = 2
EXIT_INCONSISTENT = 3

app = typer.Typer(
    name="eh-bounds",
    help="Finite-blocklength bounds for energy-harvesting AWGN channels",
    add_completion=False,
)

ConfigOption = Annotated[
    Optional[Path],
    typer.Option("--config", "-c", help="JSON run configuration", show_default=False),
]
SetOption = Annotated[
    Optional[List[str]],
    typer.Option("--set", "-s", help="Override a config key, e.g. --set n=[100,1000]", show_default=False),
]
SeedOption = Annotated[
    Optional[int],
    typer.Option("--seed", help="Seed for the Monte Carlo streams", show_default=False),
]
WorkersOption = Annotated[
    Optional[int],
    typer.Option("--workers", "-w", help="Worker threads (default: config, then EH_BOUNDS_WORKERS, then 1)", show_default=False),
]
OutOption = Annotated[
    Optional[Path],
    typer.Option("--out", "-o", help="Output file (default: stdout)", show_default=False),
]
FormatOption = Annotated[
    Optional[str],
    typer.Option("--format", "-f", help="Output format: csv or json", show_default=False),
]

COMMAND_HELP = {
    "bounds": "Achievability and converse bounds on log M",
    "second-order": "Second-order lower and upper bounds and their gap",
    "design": "Save-and-transmit code design: saving length, message size, rate",
    "linear-capacity": "Quantile rates when the coherence time is linear in n",
    "outage-sim": "Monte Carlo energy-outage frequency against the Chernoff bound",
    "quantile-sim": "Monte Carlo quantile of the linear-regime rate",
    "adaptive-sim": "Monte Carlo bit shortfall of the adaptive scheme",
    "selftest": "Run the invariant checks",
}


def _one_line(error: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in error.errors())


def execute(
    command: Optional[str],
    config_path: Optional[Path],
    overrides: Optional[List[str]],
    seed: Optional[int],
    workers: Optional[int],
    out: Optional[Path],
    fmt: Optional[str],
) -> None:
    """Load the config, run it and write the result; exits on failure."""
    extra = list(overrides or [])
    if seed is not None:
        extra.append(f"seed={seed}")
    if out is not None:
        extra.append(f"out={json.dumps(str(out))}")
    if fmt is not None:
        extra.append(f"format={json.dumps(fmt)}")

    try:
        config = load_config(config_path, extra, command)
        runner = Runner(config, resolve_workers(workers, config))
        result = anyio.run(runner.run)
        emit(result, config)
    except ValidationError as e:
        print(f"Error: invalid config: {_one_line(e)}", file=sys.stderr)
        sys.exit(EXIT_INVALID)
    except (DomainError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_INVALID)
    except ConsistencyError as e:
        print(f"Error: consistency check failed: {e}", file=sys.stderr)
        sys.exit(EXIT_INCONSISTENT)
    except KeyboardInterrupt:
        print("\nInterrupted", file=sys.stderr)
        sys.exit(130)

    if result.failed_checks:
        print(f"Error: self-test failed: {', '.join(result.failed_checks)}", file=sys.stderr)
        sys.exit(EXIT_INCONSISTENT)


def _command(name: Optional[str]) -> Callable[..., None]:
    def command(
        config: ConfigOption = None,
        set_: SetOption = None,
        seed: SeedOption = None,
        workers: WorkersOption = None,
        out: OutOption = None,
        fmt: FormatOption = None,
    ) -> None:
        execute(name, config, set_, seed, workers, out, fmt)

    return command


for _name in COMMANDS:
    app.command(
        name=_name,
        help=f"{COMMAND_HELP[_name]}. Columns: {', '.join(COLUMNS[_name])}",
    )(_command(_name))

app.command(name="run", help="Run the command named in the config file")(_command(None))


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    debug: Annotated[
        bool,
        typer.Option(
            "--debug",
            "-d",
            help="Enable debug logging",
        ),
    ] = False,
    version: Annotated[
        bool,
        typer.Option(
            "--version",
            "-v",
            help="Show version information",
        ),
    ] = False,
) -> None:
    """Compute and simulate finite-blocklength bounds for energy-harvesting channels.

    Every command reads an optional JSON config, applies --set overrides and
    writes one row per point of the parameter grid.
    """
    if version:
        show_version()
        raise typer.Exit()

    configure_logging("DEBUG" if debug else None)

    if ctx.invoked_subcommand is None:
        typer.echo(ctx.get_help())


def show_version() -> None:
    """Show version information."""
    try:
        version = get_version("eh-bounds")
    except PackageNotFoundError:
        from . import __version__ as version

    print(f"EH Bounds v{version}")
    print("Finite-blocklength bounds for energy-harvesting AWGN channels")


if __name__ == "__main__":
    app()
