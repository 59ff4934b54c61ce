import sys
from pathlib import Path
from typing import List, Literal, Optional

import click
import jsonlines
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, model_validator
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from .bench import BenchConfig, run_bench, write_bench_csv
from .bounds import predict_rank_bounds
from .convert import ConversionReport, convert
from .errors import ArgumentError, ParseError, UnsupportedOperationError
from .linalg import TruncationPolicy
from .network import TensorNetwork, Topology, build, topology_of, validate
from .plan import RankSplitStrategy
from .serialization import load, save, serialize
from .settings import DEFAULT_ORACLE_CAP, EXACT_TOLERANCE, INNER_PRODUCT_ERROR_FLOOR
from .verify import relative_error, resolve_method

console = Console(stderr=True)

TOPOLOGIES = {"tc": "chain", "tt": "train", "peps": "grid"}


class RunConfig(BaseModel):
    """
    Validated options of a CLI invocation.

    Args:
        command: The subcommand.
        topology: `tc`, `tt` or `peps` for `generate`.
        d: Number of nodes of a chain or train.
        n: Physical extent of every node.
        ranks: One rank for all bonds, or one per bond.
        rows: Grid rows.
        cols: Grid columns.
        policy: Truncation policy string.
        split: Rank split strategy string.
        seed: Seed of the random fill.
        parallel: Prepare independent steps concurrently.
        output: Output path.
    """

    command: Literal["generate", "convert", "verify", "bench", "bounds"]
    topology: Optional[Literal["tc", "tt", "peps"]] = None
    d: Optional[int] = None
    n: int = Field(default=2, ge=1)
    ranks: List[int] = [2]
    rows: Optional[int] = None
    cols: Optional[int] = None
    policy: str = "exact"
    split: str = "balanced"
    seed: int = Field(default=0, ge=0, lt=2**64)
    parallel: bool = False
    output: Optional[Path] = None

    @model_validator(mode="after")
    def _check(self):
        if any(rank < 1 for rank in self.ranks):
            raise ValueError(f"ranks must be positive, got {self.ranks}")
        if self.command == "generate":
            if self.topology is None:
                raise ValueError("--topology is required")
            if self.topology == "peps":
                if self.rows is None or self.cols is None or self.rows < 2 or self.cols < 2:
                    raise ValueError("peps needs --rows and --cols of at least 2")
            elif self.d is None or self.d < (3 if self.topology == "tc" else 2):
                raise ValueError(f"{self.topology} needs --d of at least {3 if self.topology == 'tc' else 2}")
        TruncationPolicy.parse(self.policy)
        RankSplitStrategy.parse(self.split)
        return self

    @property
    def truncation(self) -> TruncationPolicy:
        return TruncationPolicy.parse(self.policy)

    @property
    def rank_split(self) -> RankSplitStrategy:
        return RankSplitStrategy.parse(self.split)

    def topology_spec(self) -> Topology:
        if self.topology == "peps":
            return Topology.grid(self.rows, self.cols)
        return Topology(kind=TOPOLOGIES[self.topology], d=self.d)


def _config(**kwargs) -> RunConfig:
    try:
        return RunConfig(**kwargs)
    except (ValidationError, ArgumentError) as e:
        raise click.UsageError(str(e)) from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected an integer or a comma separated list, got {text!r}") from None


def _load(path: Path) -> TensorNetwork:
    try:
        return load(path)
    except ParseError as e:
        raise click.ClickException(f"{path}: {e}") from None


def _check_valid(net: TensorNetwork, path: Path):
    violations = validate(net)
    if violations:
        for violation in violations:
            console.print(f"[red]{escape(str(violation))}[/red]")
        raise click.ClickException(f"{path} is not a valid network ({len(violations)} violations).")


def _summary(net: TensorNetwork) -> str:
    violations = validate(net)
    status = "valid" if not violations else f"{len(violations)} violations"
    shape = f"{topology_of(net)}: {len(net.nodes)} nodes, {len(net.bonds)} bonds"
    return f"{shape}, {net.n_parameters()} parameters, {status}"


def _error_floor(method: str) -> float:
    return EXACT_TOLERANCE if method == "oracle" else INNER_PRODUCT_ERROR_FLOOR


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log every conversion step.")
@click.option("--quiet", "-q", is_flag=True, help="Only log warnings.")
def cli(verbose, quiet):
    """Convert tensor networks between chain, train and grid topologies."""
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "WARNING" if quiet else "INFO")


@cli.command()
@click.option("--topology", type=click.Choice(["tc", "tt", "peps"]), required=True)
@click.option("--d", type=int, help="Number of nodes (tc, tt).")
@click.option("--n", type=int, default=2, show_default=True, help="Physical extent of every node.")
@click.option("--rank", "rank", default="2", show_default=True, help="Bond rank, or a comma separated list per bond.")
@click.option("--rows", type=int, help="Grid rows (peps).")
@click.option("--cols", type=int, help="Grid columns (peps).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--fill", type=click.Choice(["random", "zeros"]), default="random", show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), help="Output file; stdout if omitted.")
def generate(topology, d, n, rank, rows, cols, seed, fill, output):
    """Write a seeded random chain, train or grid network."""
    config = _config(
        command="generate",
        topology=topology,
        d=d,
        n=n,
        ranks=_int_list(rank),
        rows=rows,
        cols=cols,
        seed=seed,
        output=output,
    )
    ranks = config.ranks[0] if len(config.ranks) == 1 else config.ranks
    try:
        net = build(config.topology_spec(), config.n, ranks, fill=fill, seed=config.seed)
    except ArgumentError as e:
        raise click.UsageError(str(e)) from None
    if output is None:
        click.echo(serialize(net).decode("utf-8"))
    else:
        save(net, output)
    console.print(_summary(net))


def _report_table(report: ConversionReport) -> Table:
    table = Table(title=f"{report.conversion}: {report.source} -> {report.target}")
    for column in ("SVD steps", "Avg. rank", "Max. rank", "Error bound", "rel. error", "CPU-time"):
        table.add_column(column, justify="right")
    table.add_row(
        str(report.n_svd_steps),
        f"{report.avg_rank:.2f}",
        str(report.max_rank),
        f"{report.relative_error_bound:.2e}" if report.relative_error_bound is not None else "-",
        f"{report.relative_error:.2e}" if report.relative_error is not None else "-",
        f"{report.total_time:.3f}s",
    )
    return table


@cli.command(name="convert")
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--to", "target", type=click.Choice(["tt", "tc"]), required=True, help="Target topology.")
@click.option(
    "--policy",
    default="exact",
    show_default=True,
    help="exact | eps:<float> | maxrank:<int> | eps:<float>,maxrank:<int>",
)
@click.option("--split", default="balanced", show_default=True, help="balanced | fixed:<r_d>x<r_tilde> | rd:<r_d>")
@click.option("--parallel", is_flag=True, help="Prepare independent steps concurrently.")
@click.option("--no-bound", is_flag=True, help="Skip the per-step error bound.")
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), help="Converted network file.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False, path_type=Path), help="Report file.")
@click.option(
    "--trace", type=click.Path(dir_okay=False, path_type=Path), help="JSON lines file with one record per step."
)
@click.option("--check/--no-check", default=False, help="Measure the relative error of the result.")
@click.option("--progress", is_flag=True, help="Show a progress bar.")
def convert_command(file, target, policy, split, parallel, no_bound, output, report_path, trace, check, progress):
    """Convert a network file to a train (tt) or chain (tc)."""
    config = _config(command="convert", policy=policy, split=split, parallel=parallel, output=output)
    net = _load(file)
    _check_valid(net, file)
    try:
        result, report = convert(
            net,
            target,
            config.truncation,
            config.rank_split,
            parallel=config.parallel,
            track_error_bound=not no_bound,
            progress=progress,
        )
    except ArgumentError as e:
        raise click.UsageError(str(e)) from None
    except UnsupportedOperationError as e:
        raise click.ClickException(f"{file}: {e}") from None

    violated, unchecked = False, None
    if check:
        mode = "oracle" if net.total_dimension() <= DEFAULT_ORACLE_CAP else "inner"
        try:
            report.relative_error = relative_error(net, result, method=mode)
        except UnsupportedOperationError as e:
            logger.warning(f"Relative error cannot be measured: {e}")
            unchecked = str(e)
        else:
            allowed = (report.relative_error_bound or 0.0) + _error_floor(mode)
            # without a bound only exact conversions have something to be checked against
            if report.relative_error_bound is not None or config.truncation.is_exact:
                violated = report.relative_error > allowed

    output = output or file.with_name(f"{file.stem}_{target}.json")
    report_path = report_path or file.with_name(f"{file.stem}_{target}.report.json")
    save(result, output)
    report_path.write_text(report.model_dump_json(indent=2))
    if trace is not None:
        with jsonlines.open(trace, mode="w") as writer:
            for record in report.steps:
                writer.write(record.model_dump(mode="json"))
    console.print(_report_table(report))
    console.print(f"Wrote {output} and {report_path}")
    if unchecked is not None:
        raise click.ClickException(f"--check could not measure the relative error: {unchecked}")
    if violated:
        raise click.ClickException(
            f"Relative error {report.relative_error:.3e} exceeds the error bound "
            f"{report.relative_error_bound or 0.0:.3e}."
        )


@cli.command()
@click.argument("a", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("b", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--mode", type=click.Choice(["auto", "oracle", "inner"]), default="auto", show_default=True)
@click.option(
    "--report",
    "report_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Conversion report of b.",
)
@click.option(
    "--tolerance",
    type=float,
    help="Largest accepted relative error; defaults to the report bound plus the method's floor.",
)
def verify(a, b, mode, report_path, tolerance):
    """Print the relative error ||a - b|| / ||a|| and check it against a report's bound."""
    first, second = _load(a), _load(b)
    _check_valid(first, a)
    _check_valid(second, b)
    try:
        error = relative_error(first, second, method=mode)
    except (UnsupportedOperationError, ArgumentError) as e:
        raise click.UsageError(f"Cannot compare with mode {mode}: {e}") from None
    click.echo(f"{error:.6e}")

    allowed = tolerance
    if report_path is not None:
        report = ConversionReport.model_validate_json(report_path.read_text())
        floor = tolerance if tolerance is not None else _error_floor(resolve_method(first, second, mode))
        if report.relative_error_bound is not None or report.policy == "exact":
            allowed = (report.relative_error_bound or 0.0) + floor
        else:
            logger.warning(f"{report_path} carries no error bound; only --tolerance is checked.")
    if allowed is not None and error > allowed:
        raise click.ClickException(f"Relative error {error:.3e} exceeds the allowed {allowed:.3e}.")


@cli.command()
@click.option(
    "--table",
    type=click.Choice(["tc2tt-exact", "tc2tt-approx", "tt2tc-approx", "tc2tt2tc-exact", "tc2tt2tc-approx"]),
    required=True,
)
@click.option("--d", "ds", default="4", show_default=True, help="Comma separated chain sizes.")
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--rank", type=int, default=6, show_default=True)
@click.option("--eps", type=float, default=1e-10, show_default=True)
@click.option("--seeds", type=int, default=1, show_default=True, help="Random instances per size.")
@click.option("--seed", type=int, default=0, show_default=True, help="First seed.")
@click.option("--split", default="balanced", show_default=True)
@click.option("--budget", type=float, help="Wall clock budget in seconds.")
@click.option("--no-bound", is_flag=True, help="Skip per-step error bounds.")
@click.option("--progress", is_flag=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), help="CSV file; stdout if omitted.")
def bench(table, ds, n, rank, eps, seeds, seed, split, budget, no_bound, progress, output):
    """Reproduce a conversion table at desk scale and write it as CSV."""
    try:
        config = BenchConfig(
            table=table,
            ds=_int_list(ds),
            n=n,
            rank=rank,
            eps=eps,
            seeds=seeds,
            seed=seed,
            split=RankSplitStrategy.parse(split),
            budget=budget,
            track_error_bound=not no_bound,
        )
    except (ValidationError, ArgumentError) as e:
        raise click.UsageError(str(e)) from None
    frame = run_bench(config, progress=progress)
    if output is None:
        write_bench_csv(frame, sys.stdout, config)
    else:
        with open(output, "w", newline="") as handle:
            write_bench_csv(frame, handle, config)
        console.print(f"Wrote {len(frame)} rows to {output}")
    if not frame["rank_bound_ok"].all():
        raise click.ClickException("Observed ranks exceed the predicted bounds.")


@cli.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--to", "target", type=click.Choice(["tt", "tc"]), required=True)
@click.option("--split", default="balanced", show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Print the plan as JSON.")
def bounds(file, target, split, as_json):
    """Print predicted rank bounds and the cost estimate of a conversion."""
    config = _config(command="bounds", split=split)
    net = _load(file)
    _check_valid(net, file)
    try:
        plan = predict_rank_bounds(net, target, config.rank_split)
    except ArgumentError as e:
        raise click.UsageError(str(e)) from None
    if as_json:
        click.echo(plan.model_dump_json(indent=2))
        return
    table = Table(title=f"{plan.conversion} rank bounds")
    table.add_column("Bond")
    table.add_column("Bound", justify="right")
    for label, bound in plan.bounds.items():
        table.add_row(label, str(bound))
    out = Console()
    out.print(table)
    out.print(f"Largest SVD: {plan.max_matrix[0]}x{plan.max_matrix[1]}, estimated cost {plan.cost:.3e} flops")


if __name__ == "__main__":
    cli()
