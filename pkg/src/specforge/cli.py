"""Command line interface.

``strip``, ``bench`` and ``analyze`` run in-process. ``generate``, ``repair``
and ``minimize`` run in-process by default but act as thin clients against a
running assistant service when --server is given. ``serve`` starts the
service.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import click

from .bench import aggregate, load_dataset, run_experiment, RecordStore
from .config import AppConfig, ConfigError, load_config
from .minimizer import MinimizeOptions, OriginalNotContained, minimize
from .repair import Runner, check_negative_tests
from .source_model import count_loc, parse
from .strip_merge import strip_annotations
from .verifier import VerificationCache


def _load(ctx: click.Context) -> AppConfig:
    path = ctx.obj.get("config_path")
    try:
        return load_config(path)
    except ConfigError as exc:
        raise click.ClickException(str(exc))


def _write_output(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
        click.echo(f"wrote {output}", err=True)
    else:
        click.echo(text)


@click.group()
@click.option("--config", "-c", "config_path", type=click.Path(), default=None, help="config file (YAML)")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


@main.command()
@click.argument("input_file", type=click.Path(exists=True))
@click.option("--output", "-o", type=click.Path(), default=None)
def strip(input_file: str, output: str | None) -> None:
    """Remove all annotations, keeping test oracles and negative markers."""
    file = parse(Path(input_file).read_text(), input_file)
    _write_output(strip_annotations(file), output)


@main.command()
@click.argument("input_file", type=click.Path(exists=True))
def loc(input_file: str) -> None:
    """Report L/A/H line counts for a program."""
    stats = count_loc(parse(Path(input_file).read_text(), input_file))
    click.echo(f"L={stats.L} A={stats.A} H={stats.H}")


def _run_solver(ctx, input_file, output, server, strategy, check_negatives) -> None:
    cfg = _load(ctx)
    program = Path(input_file).read_text()
    if server:
        kind = "generate" if strategy == "direct" else "repair"
        result = _remote_job(server, kind, program, {})
        solved = result.get("solved", False)
        text = result.get("program")
    else:
        run_cfg = cfg.run_config(strategy=strategy)
        cache = VerificationCache(cfg.workspace / "verify_cache.jsonl")
        runner = Runner(run_cfg, cache=cache)
        solve = runner.run(program)
        solved = solve.solved
        text = solve.minimized_program or solve.final_program
        if solved and check_negatives:
            negative = check_negative_tests(text, run_cfg, cache=cache)
            if not negative.passed:
                click.echo(
                    f"warning: {len(negative.failures)} negative tests unexpectedly verify", err=True
                )
    if not solved or not text:
        raise click.ClickException("no verifying annotation set was found")
    _write_output(text, output)


@main.command()
@click.argument("input_file", type=click.Path(exists=True))
@click.option("--output", "-o", type=click.Path(), default=None)
@click.option("--server", default=None, help="assistant service URL (thin-client mode)")
@click.option("--check-negatives/--no-check-negatives", default=False)
@click.pass_context
def generate(ctx, input_file, output, server, check_negatives) -> None:
    """Direct-prompt annotation generation (independent attempts)."""
    _run_solver(ctx, input_file, output, server, "direct", check_negatives)


@main.command()
@click.argument("input_file", type=click.Path(exists=True))
@click.option("--output", "-o", type=click.Path(), default=None)
@click.option("--server", default=None, help="assistant service URL (thin-client mode)")
@click.option("--check-negatives/--no-check-negatives", default=False)
@click.pass_context
def repair(ctx, input_file, output, server, check_negatives) -> None:
    """Iterative repair with verifier feedback after one direct attempt."""
    _run_solver(ctx, input_file, output, server, "repair", check_negatives)


@main.command("minimize")
@click.argument("original", type=click.Path(exists=True))
@click.argument("extended", type=click.Path(exists=True))
@click.option("--output", "-o", type=click.Path(), default=None)
@click.option("--removal-log", type=click.Path(), default=None, help="JSON-lines log of committed deletions")
@click.option("--server", default=None, help="assistant service URL (thin-client mode)")
@click.option("--short-timeout", type=float, default=10.0, show_default=True)
@click.pass_context
def minimize_cmd(ctx, original, extended, output, removal_log, server, short_timeout) -> None:
    """Shrink a verifying extended program back toward the original."""
    cfg = _load(ctx)
    original_text = Path(original).read_text()
    extended_text = Path(extended).read_text()
    if server:
        result = _remote_job(
            server,
            "minimize",
            extended_text,
            {"original_text": original_text, "short_timeout_s": short_timeout},
        )
        text = result["program"]
        removals = result.get("removals", [])
    else:
        cache = VerificationCache(cfg.workspace / "verify_cache.jsonl")
        from .verifier import cached_verify

        def verify_fn(text: str, timeout_s: float, filter_symbol: str | None):
            vcfg = cfg.verifier.with_(timeout_s=timeout_s, filter_symbol=filter_symbol)
            return cached_verify(text, vcfg, cache)

        try:
            res = minimize(
                original_text,
                extended_text,
                verify_fn,
                MinimizeOptions(short_timeout_s=short_timeout),
            )
        except (OriginalNotContained, ValueError) as exc:
            raise click.ClickException(str(exc))
        text = res.text
        removals = [
            {
                "category": r.category,
                "start_line": r.span.start_line,
                "end_line": r.span.end_line,
                "round": r.round,
                "text": r.text,
            }
            for r in res.removals
        ]
    if removal_log:
        with open(removal_log, "w") as fh:
            for entry in removals:
                fh.write(json.dumps(entry) + "\n")
        click.echo(f"logged {len(removals)} removals to {removal_log}", err=True)
    _write_output(text, output)


@main.command()
@click.option("--dataset", "dataset_root", type=click.Path(exists=True), required=True)
@click.option("--workers", type=int, default=4, show_default=True)
@click.option("--k-max", type=int, default=10, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="report JSON path")
@click.option(
    "--replay-dir",
    type=click.Path(exists=True),
    default=None,
    help="serve canned responses from this directory instead of calling providers",
)
@click.pass_context
def bench(ctx, dataset_root, workers, k_max, out, replay_dir) -> None:
    """Run every (program, config) pair and aggregate metrics."""
    import dataclasses

    cfg = _load(ctx)
    entries = load_dataset(dataset_root)
    run_cfg = cfg.run_config()
    if replay_dir:
        run_cfg.providers = [
            dataclasses.replace(p, kind="replay", replay_dir=replay_dir) for p in run_cfg.providers
        ]
    if not run_cfg.config_id:
        run_cfg.config_id = "default"
    report = run_experiment(
        entries,
        [run_cfg],
        cfg.workspace,
        workers=workers,
        k_max=k_max,
        progress=lambda msg: click.echo(msg, err=True),
    )
    if out:
        Path(out).write_text(report.to_json())
        click.echo(f"wrote {out}", err=True)
    click.echo(report.summary_table())


@main.command()
@click.option("--dataset", "dataset_root", type=click.Path(exists=True), required=True)
@click.option("--records", type=click.Path(exists=True), required=True, help="records.jsonl from a bench run")
@click.option("--k-max", type=int, default=10, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
def analyze(ctx, dataset_root, records, k_max, out) -> None:
    """Aggregate metrics and fit the difficulty model from stored records."""
    cfg = _load(ctx)
    entries = load_dataset(dataset_root)
    stored = RecordStore(records).load()
    run_cfg = cfg.run_config()
    if not run_cfg.config_id:
        run_cfg.config_id = "default"
    report = aggregate(entries, stored, [run_cfg], k_max=k_max)
    if out:
        Path(out).write_text(report.to_json())
        click.echo(f"wrote {out}", err=True)
    click.echo(report.summary_table())


@main.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def serve(ctx, host, port) -> None:
    """Start the local assistant service (FastAPI/uvicorn)."""
    import uvicorn

    from .service import create_app

    cfg = _load(ctx)
    app = create_app(cfg)
    uvicorn.run(app, host=host or cfg.service.host, port=port or cfg.service.port)


def _remote_job(server: str, kind: str, program_text: str, overrides: dict) -> dict:
    import httpx

    base = server.rstrip("/")
    envelope = {
        "version": 1,
        "id": "cli",
        "method": "submit",
        "params": {"kind": kind, "program_text": program_text, "config_overrides": overrides},
    }
    resp = httpx.post(f"{base}/v1/rpc", json=envelope, timeout=30).json()
    if not resp.get("ok"):
        raise click.ClickException(f"submit failed: {resp.get('error')}")
    job_id = resp["payload"]["job_id"]
    since = 0
    while True:
        envelope = {
            "version": 1,
            "id": "cli",
            "method": "events",
            "params": {"job_id": job_id, "since": since},
        }
        resp = httpx.post(f"{base}/v1/rpc", json=envelope, timeout=30).json()
        if not resp.get("ok"):
            raise click.ClickException(f"events failed: {resp.get('error')}")
        payload = resp["payload"]
        for event in payload["events"]:
            since = event["ordinal"]
            click.echo(f"[{event['phase']}] {event['summary']}", err=True)
        state = payload["state"]
        if state == "done":
            return payload["result"] or {}
        if state in ("failed", "cancelled"):
            raise click.ClickException(f"job {state}: {payload.get('error')}")
        time.sleep(0.2)


if __name__ == "__main__":
    main()
