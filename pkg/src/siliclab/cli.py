"""Thin command-line client over the in-process experiment service.

Every subcommand builds a validated request, posts it to the FastAPI app
through an in-memory transport, and writes the returned result table
prefixed with a run-manifest block that is sufficient to re-run the
experiment exactly.  No timestamps: identical seed and config produce
byte-identical files.
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path
from typing import Optional, Type

import click
import httpx
import numpy
import pydantic
from pydantic import ValidationError

from . import __version__
from .service import create_app, schemas
from .twin import ProfileError, load_profile

MANIFEST_FORMAT = "siliclab run-manifest v1"


async def _post_asgi(endpoint: str, payload: dict) -> httpx.Response:
    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(transport=transport,
                                 base_url="http://siliclab.local") as client:
        return await client.post(endpoint, json=payload, timeout=None)


def _post(endpoint: str, payload: dict) -> dict:
    response = asyncio.run(_post_asgi(endpoint, payload))
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise click.ClickException(f"service rejected the run: {detail}")
    return response.json()


def _load_config(config_path: Optional[str]) -> dict:
    if config_path is None:
        return {}
    try:
        values = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config {config_path}: {exc}")
    if not isinstance(values, dict):
        raise click.UsageError("config file must hold a JSON object")
    return values


def _build_request(model_cls: Type[schemas.StrictModel],
                   config_path: Optional[str], seed: Optional[int],
                   profile: Optional[str] = None,
                   profile_key: str = "profile") -> schemas.StrictModel:
    values = _load_config(config_path)
    if seed is not None:
        values["seed"] = seed
    if "seed" not in values:
        raise click.UsageError("seed is mandatory; pass --seed or set it "
                               "in the config file")
    if profile is not None:
        try:
            spec = schemas.ProfileSpec.from_profile(load_profile(profile))
        except ProfileError as exc:
            raise click.UsageError(str(exc))
        values[profile_key] = spec.model_dump()
    try:
        return model_cls(**values)
    except ValidationError as exc:
        raise click.UsageError(f"bad config: {exc}")


def _manifest(subcommand: str, request: schemas.StrictModel) -> str:
    config = json.dumps(request.model_dump(mode="json"), sort_keys=True)
    lines = [
        MANIFEST_FORMAT,
        f"subcommand={subcommand}",
        f"siliclab={__version__}",
        f"numpy={numpy.__version__}",
        f"pydantic={pydantic.VERSION}",
        f"seed={request.seed}",
        f"config={config}",
    ]
    return "".join(f"# {line}\n" for line in lines)


def _write_result(out: str, subcommand: str, request: schemas.StrictModel,
                  body: str, filename: str) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / filename
    target.write_text(_manifest(subcommand, request) + body)
    click.echo(f"wrote {target}")
    return target


seed_option = click.option("--seed", type=int, default=None,
                           help="Experiment seed (mandatory here or in --config).")
config_option = click.option("--config", type=click.Path(), default=None,
                             help="JSON file with request fields.")
out_option = click.option("--out", type=click.Path(file_okay=False), default=".",
                          help="Output directory for result tables.")
profile_option = click.option("--profile", default=None,
                              help="Device preset name or profile file path.")


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Timing-lab experiments: sweeps, benchmarks and authentication."""


@main.command()
@seed_option
@config_option
@out_option
def selftest(seed, config, out) -> None:
    """Run the information-theory property suite."""
    request = _build_request(schemas.SelftestRequest, config, seed)
    result = _post("/selftest", request.model_dump(mode="json"))
    _write_result(out, "selftest", request, result["csv"], "selftest.csv")
    for check in result["checks"]:
        click.echo(f"{check['name']}: {'ok' if check['passed'] else 'FAILED'} "
                   f"({check['detail']})")
    if not result["passed"]:
        raise click.ClickException("property suite failed")


@main.command()
@seed_option
@config_option
@out_option
@profile_option
def sweep(seed, config, out, profile) -> None:
    """Voltage/frequency/difficulty sweep with regime labels."""
    request = _build_request(schemas.SweepRequest, config, seed, profile)
    result = _post("/sweep", request.model_dump(mode="json"))
    _write_result(out, "sweep", request, result["csv"], "sweep.csv")
    click.echo(f"{result['rows']} cells")


@main.command()
@seed_option
@config_option
@out_option
@profile_option
def narma(seed, config, out, profile) -> None:
    """NARMA-10 benchmark across interaction modes."""
    request = _build_request(schemas.NarmaRequest, config, seed, profile)
    result = _post("/narma", request.model_dump(mode="json"))
    _write_result(out, "narma", request, result["csv"], "narma.csv")
    for row in result["results"]:
        click.echo(f"{row['mode']}: nrmse={row['nrmse']:.4f}")


@main.command()
@seed_option
@config_option
@out_option
@profile_option
def tpf(seed, config, out, profile) -> None:
    """Train and evaluate an early-abort filter."""
    request = _build_request(schemas.TpfRequest, config, seed, profile)
    result = _post("/tpf", request.model_dump(mode="json"))
    _write_result(out, "tpf", request, result["report"], "tpf.txt")
    metrics = result["metrics"]
    click.echo(f"realized_savings={metrics['realized_savings']:.4f} "
               f"false_aborts={metrics['false_aborts']}")
    if result["no_signal"]:
        click.echo("no signal: predictor advantage within noise")


@main.command()
@seed_option
@config_option
@out_option
def vbm(seed, config, out) -> None:
    """Serial versus prefetching mining-loop comparison."""
    request = _build_request(schemas.VbmRequest, config, seed)
    result = _post("/vbm", request.model_dump(mode="json"))
    _write_result(out, "vbm", request, result["csv"], "vbm.csv")
    click.echo(f"throughput_gain={result['throughput_gain']:.4f}")


@main.command()
@seed_option
@config_option
@out_option
@profile_option
def puf(seed, config, out, profile) -> None:
    """Timing-signature enrollment and verification trials."""
    request = _build_request(schemas.PufRequest, config, seed, profile,
                             profile_key="device")
    result = _post("/puf", request.model_dump(mode="json"))
    _write_result(out, "puf", request, result["csv"], "puf.csv")
    click.echo(f"accepts={result['accepts']}/{result['trials']} "
               f"rejects={result['rejects']}/{result['trials']}")
    if result["witness"] is not None:
        w = result["witness"]
        click.echo(f"witness: challenge={w['challenge']} bucket={w['bucket']} "
                   f"gap={w['gap']:.4f}")


if __name__ == "__main__":
    main()
