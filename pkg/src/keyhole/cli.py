"""Command-line interface.

Exit codes: 0 success, 1 validation error, 2 corruption.
"""

from __future__ import annotations

import json
import sys

import click

from .cost import ModalityCostTable, OperationKind, session_cost, uniform_mix
from .data import DataError, column_profile, ingest_csv
from .gateway import GatewayConfig
from .harness import HarnessError, PARADIGMS, run_paradigm
from .session import (
    CorruptionError,
    SessionState,
    VersionError,
    read_provenance,
    replay,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CORRUPTION = 2


@click.group()
def main() -> None:
    """Hybrid analytical workbench gateway and tooling."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
def serve(config_path, port, host) -> None:
    """Run the gateway server."""
    import uvicorn

    from .server import create_app

    config = GatewayConfig.load(config_path) if config_path else GatewayConfig()
    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")


@main.command()
@click.argument("paradigm", type=click.Choice(PARADIGMS))
@click.option("--trials", type=int, default=100)
@click.option("--seed", type=int, default=42)
@click.option("--out", "out_path", type=click.Path(), default=None)
def simulate(paradigm, trials, seed, out_path) -> None:
    """Run a simulation paradigm and print (or write) its summary."""
    try:
        summary = run_paradigm(paradigm, trials, seed)
    except HarnessError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    text = summary.to_text()
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@main.command(name="replay")
@click.argument("provenance_file", type=click.Path(exists=True))
@click.option("--session-id", default=None, help="Session id for the initial state.")
def replay_cmd(provenance_file, session_id) -> None:
    """Replay a provenance log and print the final state hash."""
    with open(provenance_file, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        records = read_provenance(text)
        sid = session_id
        if sid is None and records:
            sid = "session"
        initial = SessionState(session_id=sid or "session")
        final = replay(records, initial)
    except (CorruptionError, VersionError) as exc:
        click.echo(f"corruption: {exc}", err=True)
        sys.exit(EXIT_CORRUPTION)
    click.echo(f"records: {len(records)}")
    click.echo(f"state_hash: {final.state_hash}")


@main.command()
@click.argument("csv_file", type=click.Path(exists=True))
@click.option("--profile", "do_profile", is_flag=True, help="Print per-column profiles.")
@click.option("--group-by", default=None, help="Report missingness concentration by this column.")
def ingest(csv_file, do_profile, group_by) -> None:
    """Ingest a CSV file and print its inferred schema."""
    with open(csv_file, "r", encoding="utf-8") as fh:
        try:
            ds = ingest_csv(fh.read())
        except DataError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
    click.echo(f"rows: {ds.row_count}")
    for name, kind in ds.schema:
        click.echo(f"{name}: {kind}")
    if do_profile:
        for name, _ in ds.schema:
            click.echo(column_profile(ds, name, group_by).describe())


@main.command()
@click.option(
    "--mix",
    "mix_spec",
    default="uniform50",
    help="'uniform50' or a JSON file of [kind, modality] pairs.",
)
def cost(mix_spec) -> None:
    """Total interaction time for an operation mix under both modalities."""
    table = ModalityCostTable()
    if mix_spec == "uniform50":
        chat = session_cost(uniform_mix("chat"), table)
        gui = session_cost(uniform_mix("gui"), table)
        click.echo(f"chat: {chat:.1f} s")
        click.echo(f"gui: {gui:.1f} s")
        click.echo(f"ratio: {chat / gui:.2f}")
        return
    try:
        with open(mix_spec, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        mix = [(OperationKind(kind), modality) for kind, modality in raw]
        click.echo(f"total: {session_cost(mix, table):.1f} s")
    except (OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


@main.command(name="overload-report")
@click.argument("provenance_file", type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["chat_only", "rail", "canvas"]), default="rail")
def overload_report(provenance_file, mode) -> None:
    """Replay a provenance log and print the overload report per step."""
    from .calculus import build_report
    from .session import measure_m, measure_v, transition

    with open(provenance_file, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        records = read_provenance(text)
        state = SessionState(session_id="session")
        rows = []
        for record in records:
            state = transition(state, record.delta)
            if state.state_hash != record.resulting_hash:
                raise CorruptionError("hash mismatch during replay", seq=record.seq)
            report = build_report(measure_m(state), measure_v(state, mode=mode))
            rows.append((record.seq, report))
    except (CorruptionError, VersionError) as exc:
        click.echo(f"corruption: {exc}", err=True)
        sys.exit(EXIT_CORRUPTION)
    click.echo("seq,m,v,l_internal,o,p_error")
    for seq, r in rows:
        click.echo(f"{seq},{r.m:g},{r.v:g},{r.l_internal:g},{r.o:g},{r.p_error:.6f}")


if __name__ == "__main__":
    main()
