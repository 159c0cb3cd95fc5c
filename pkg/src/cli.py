"""
Command-line interface for prophetlab experiments.

Each command prints its report as canonical JSON on stdout, or writes it
to ``--out``. Failures print ``{"error": kind, "message": ...}`` and exit
with the code of the error kind.
"""

import json
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import typer
from rich.console import Console
from rich.table import Table

from src import __version__
from src.core.config import settings
from src.core.errors import InternalError, ProphetLabError
from src.core.utils import configure_logging
from src.models.schemas import Report
from src.services.experiment_orchestrator import experiment_orchestrator
from src.services.report_service import emit_report

app = typer.Typer(
    name="prophetlab",
    help="Prophet inequalities, stopping rules and near-optimal inspection orders",
    add_completion=False,
)

console = Console(stderr=True)


def _fail(error: ProphetLabError) -> typer.Exit:
    typer.echo(json.dumps({"error": error.kind, "message": str(error)}, sort_keys=True))
    return typer.Exit(error.exit_code)


def _execute(command: str, params: Dict[str, Any], out: Optional[str] = None) -> Report:
    """Run ``command`` and emit its report; errors become a JSON line and an exit code."""
    artifact = experiment_orchestrator.writes_artifact(command)
    if artifact:
        params = {**params, "out": out}
    try:
        report = experiment_orchestrator.run(command, params)
        text = emit_report(report, None if artifact else out)
    except ProphetLabError as e:
        raise _fail(e)
    except Exception as e:
        raise _fail(InternalError(f"{type(e).__name__}: {e}"))

    if out and not artifact:
        console.print(f"✓ Report written to {out}", style="green")
    else:
        typer.echo(text, nl=False)
        if out:
            console.print(f"✓ Output written to {out}", style="green")
    return report


@app.callback()
def main(
    log_level: str = typer.Option(None, "--log-level", help="Logging level (default: settings)"),
):
    """Prophet inequality toolkit."""
    configure_logging(log_level or settings.log_level)


@app.command()
def beta(
    tol: float = typer.Option(None, help="Residual tolerance on the defining integral"),
    out: str = typer.Option(None, help="Report path (stdout if omitted)"),
):
    """Solve for the Kertz constant."""
    return _execute("beta", {"tol": tol}, out)


@app.command()
def ydump(
    grid: Optional[int] = typer.Option(None, help="Size of the solve grid (>= 100)"),
    tol: float = typer.Option(None, help="Tolerance for beta (default from settings)"),
    out: str = typer.Option(None, help="CSV path for the columns t,y,yprime"),
):
    """Tabulate the Kertz curve y(t) and its derivative."""
    return _execute("ydump", {"grid": grid, "tol": tol}, out)


@app.command()
def worstcase(
    q: float = typer.Option(..., help="Cut-off in (0, 0.5)"),
    n: int = typer.Option(None, help="Number of i.i.d. variables"),
    points: int = typer.Option(None, help="Grid points for the worst-case law"),
    out: str = typer.Option(None, help="Path for the generated instance document"),
):
    """Build the worst-case i.i.d. instance for a cut-off q."""
    return _execute("worstcase", {"q": q, "n": n, "points": points}, out)


@app.command()
def bench(
    instance: str = typer.Option(..., help="Instance document (JSON)"),
    what: str = typer.Option("max", help="max, maxk:K, opt or optfree"),
    out: str = typer.Option(None, help="Report path (stdout if omitted)"),
):
    """Compute an exact benchmark value."""
    return _execute("bench", {"instance": instance, "what": what}, out)


@app.command("eval")
def evaluate(
    instance: str = typer.Option(..., help="Instance document (JSON)"),
    policy: str = typer.Option("small", help="small, imperfect, frequent or baseline"),
    eps: float = typer.Option(0.1, help="Accuracy parameter"),
    trials: int = typer.Option(None, help="Monte Carlo trials (default from settings)"),
    seed: int = typer.Option(None, help="Seed (default from settings)"),
    variant: str = typer.Option("weak", help="Imperfect-prophet variant: weak or strong"),
    removal_multiplier: float = typer.Option(None, help="Multiplier of the removal budget"),
    out: str = typer.Option(None, help="Report path (stdout if omitted)"),
):
    """Simulate a stopping policy against its benchmark."""
    params = {
        "instance": instance,
        "policy": policy,
        "eps": eps,
        "trials": trials,
        "seed": seed,
        "variant": variant,
        "removal_multiplier": removal_multiplier,
    }
    return _execute("eval", params, out)


@app.command()
def order(
    instance: str = typer.Option(..., help="Instance document (JSON)"),
    eps: float = typer.Option(0.1, help="Accuracy parameter in (0, 0.25]"),
    seed: int = typer.Option(None, help="Seed (default from settings)"),
    fixing_cap: int = typer.Option(None, help="Cap on enumerated fixings of the big variables"),
    no_adjust: bool = typer.Option(False, "--no-adjust", help="Fail instead of lowering k"),
    out: str = typer.Option(None, help="Report path (stdout if omitted)"),
):
    """Compute a near-optimal inspection order with thresholds."""
    params = {
        "instance": instance,
        "eps": eps,
        "seed": seed,
        "fixing_cap": fixing_cap,
        "allow_adjust": not no_adjust,
    }
    return _execute("order", params, out)


@app.command()
def decompose(
    instance: str = typer.Option(..., help="Instance document (JSON)"),
    eps: float = typer.Option(0.1, help="Smallness level in (0, 0.5)"),
    k: int = typer.Option(0, help="Largest number of big variables"),
    mode: str = typer.Option("eps_t_small", help="eps_t_small or eps_small"),
    out: str = typer.Option(None, help="Report path (stdout if omitted)"),
):
    """Split an instance into big variables and small residuals."""
    return _execute("decompose", {"instance": instance, "eps": eps, "k": k, "mode": mode}, out)


@app.command()
def config():
    """Display the effective settings."""
    table = Table(title=f"prophetlab {__version__} settings")
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="white")
    for key, value in settings.model_dump().items():
        table.add_row(key, str(value))
    Console().print(table)


def dispatch(argv: Sequence[str]) -> Tuple[int, Optional[Report]]:
    """
    Run the CLI in-process.

    Returns:
        (exit code, Report or None); usage errors give exit code 2
    """
    command = typer.main.get_command(app)
    try:
        with command.make_context("prophetlab", list(argv)) as ctx:
            rv = command.invoke(ctx)
    except ProphetLabError:
        raise
    except Exception as e:
        # click's UsageError and Exit, whether typer ships click or a vendored copy
        code = getattr(e, "exit_code", None)
        if code is None:
            raise
        if code == 2 and hasattr(e, "format_message"):
            typer.echo(json.dumps({"error": "usage_error", "message": e.format_message()}))
        return code, None
    if isinstance(rv, Report):
        return 0, rv
    return (rv or 0), None


def run(argv: Optional[List[str]] = None) -> None:
    """Console entry point: ``dispatch`` with the process arguments."""
    code, _ = dispatch(sys.argv[1:] if argv is None else argv)
    raise SystemExit(code)


if __name__ == "__main__":
    run()
