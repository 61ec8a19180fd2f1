"""Operator command surface: serve, scan, crypt, score, eval, gen-data.

Every command is scriptable: JSON on stdout, non-zero exit on failure, no
interactive prompts. Exit codes: 0 success, 2 configuration error, 3 key
error, 4 encryption domain error, 1 anything else.
"""

from __future__ import annotations

import json
import sys

import click

from . import dataset as dataset_mod
from .detector import PatternDetector
from .dlms_client import format_sft_answer
from .errors import (
    ConfigError,
    EmptyRun,
    FormatTooShort,
    FpeError,
    KeyMaterialError,
    SchemaError,
    UnsupportedCategory,
)
from .fpe import Ff3Key, Tweak, decrypt_preserving, encrypt_preserving, profile_by_id
from .metrics import CSV_HEADER, evaluate_run, load_prediction_records
from .policy import default_taxonomy, load_catalog
from .reward import ScoringMode, score_batch_line

EXIT_CONFIG = 2
EXIT_KEY = 3
EXIT_FPE_DOMAIN = 4


def _load_catalog_opt(path: str | None):
    if path is None:
        return default_taxonomy()
    try:
        return load_catalog(path)
    except SchemaError as exc:
        raise SystemExit(_fail(EXIT_CONFIG, f"catalog error: {exc}"))


def _fail(code: int, message: str) -> int:
    click.echo(message, err=True)
    return code


@click.group()
def main() -> None:
    """Privacy gateway and evaluation toolkit."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Gateway config JSON.")
def serve(config_path: str) -> None:
    """Run the gateway until interrupted."""
    from .gateway import GatewayService, create_app, load_config, resolve_catalog, resolve_key

    try:
        config = load_config(config_path)
        catalog = resolve_catalog(config)
    except (ConfigError, SchemaError) as exc:
        raise SystemExit(_fail(EXIT_CONFIG, f"config error: {exc}"))
    try:
        key = resolve_key(config.key_source)
    except KeyMaterialError as exc:
        raise SystemExit(_fail(EXIT_KEY, f"key error: {exc}"))

    import uvicorn

    service = GatewayService(config, catalog=catalog, key=key)
    click.echo(
        f"promptgate listening on {config.listen_host}:{config.listen_port} "
        f"(detector={config.detector_mode}, catalog v{catalog.version})"
    )
    uvicorn.run(
        create_app(service),
        host=config.listen_host,
        port=config.listen_port,
        log_level="warning",
    )


@main.command()
@click.argument("text", required=False)
@click.option("--file", "file_path", type=click.Path(exists=True), help="Read the prompt from a file.")
@click.option("--catalog", "catalog_path", type=click.Path(exists=True), help="Catalog JSON (default: built-in taxonomy).")
@click.option("--format", "output_format", type=click.Choice(["json", "sft"]), default="json")
def scan(text: str | None, file_path: str | None, catalog_path: str | None, output_format: str) -> None:
    """Classify a prompt and print the verdict."""
    if text is None and file_path is None:
        text = sys.stdin.read()
    elif file_path is not None:
        with open(file_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    catalog = _load_catalog_opt(catalog_path)
    try:
        verdict = PatternDetector(catalog).detect(text)
    except UnsupportedCategory as exc:
        raise SystemExit(_fail(EXIT_CONFIG, f"catalog error: {exc}"))
    if output_format == "sft":
        click.echo(format_sft_answer(verdict))
        return
    click.echo(
        json.dumps(
            {
                "safety": verdict.safety.value,
                "categories": sorted(verdict.categories),
                "entities": [
                    {
                        "category_code": e.category_code,
                        "text": e.text,
                        "start": e.start,
                        "end": e.end,
                    }
                    for e in verdict.entities
                ],
            },
            ensure_ascii=False,
        )
    )


@main.command()
@click.argument("direction", type=click.Choice(["encrypt", "decrypt"]))
@click.argument("entity")
@click.option("--category", default=None, help="Category code; picks the catalog's format profile.")
@click.option("--profile", "profile_id", default=None, type=click.Choice(["email", "alnum", "digits"]))
@click.option("--key-hex", default=None, help="AES key as hex (16/24/32 bytes).")
@click.option("--key-env", default=None, help="Environment variable holding the hex key.")
@click.option("--key-file", default=None, type=click.Path(exists=True), help="File holding the hex key.")
@click.option("--tweak", "tweak_hex", required=True, help="56-bit tweak as 14 hex digits.")
@click.option("--catalog", "catalog_path", type=click.Path(exists=True))
def crypt(
    direction: str,
    entity: str,
    category: str | None,
    profile_id: str | None,
    key_hex: str | None,
    key_env: str | None,
    key_file: str | None,
    tweak_hex: str,
    catalog_path: str | None,
) -> None:
    """Encrypt or decrypt one entity with format preservation."""
    try:
        if key_hex:
            key = Ff3Key.from_hex(key_hex)
        elif key_env:
            key = Ff3Key.from_env(key_env)
        elif key_file:
            key = Ff3Key.from_file(key_file)
        else:
            key = Ff3Key.from_env("PROMPTGATE_KEY")
        tweak = Tweak.from_hex(tweak_hex)
    except (KeyMaterialError, ValueError) as exc:
        raise SystemExit(_fail(EXIT_KEY, f"key error: {exc}"))

    if profile_id is None:
        catalog = _load_catalog_opt(catalog_path)
        if category is not None:
            try:
                profile_id = catalog.category(category).fpe_profile_id
            except KeyError:
                raise SystemExit(_fail(EXIT_CONFIG, f"unknown category {category!r}"))
        else:
            profile_id = "digits"
    profile = profile_by_id(profile_id)

    try:
        fn = encrypt_preserving if direction == "encrypt" else decrypt_preserving
        click.echo(fn(entity, profile, key, tweak))
    except FormatTooShort as exc:
        raise SystemExit(_fail(EXIT_FPE_DOMAIN, f"format too short: {exc}"))
    except FpeError as exc:
        raise SystemExit(_fail(EXIT_FPE_DOMAIN, f"encryption error: {exc}"))


@main.command()
@click.option("--in", "input_path", default="-", help="Batch JSONL, '-' for stdin.")
@click.option("--out", "output_path", default="-", help="Output JSONL, '-' for stdout.")
@click.option(
    "--mode",
    default="full",
    type=click.Choice(["full", "stage1", "stage2", "stage3"]),
    help="Default scoring mode for lines without one.",
)
def score(input_path: str, output_path: str, mode: str) -> None:
    """Score reasoning outputs against ground truth, line by line."""
    default_mode = ScoringMode.parse(mode)
    source = sys.stdin if input_path == "-" else open(input_path, "r", encoding="utf-8")
    sink = sys.stdout if output_path == "-" else open(output_path, "w", encoding="utf-8")
    try:
        for line in source:
            if not line.strip():
                continue
            result = score_batch_line(line, default_mode)
            sink.write(json.dumps(result, ensure_ascii=False) + "\n")
            sink.flush()
    finally:
        if source is not sys.stdin:
            source.close()
        if sink is not sys.stdout:
            sink.close()


@main.command(name="eval")
@click.option("--in", "input_path", required=True, type=click.Path(exists=True), help="Predictions JSONL.")
@click.option("--catalog", "catalog_path", type=click.Path(exists=True))
@click.option("--csv", "as_csv", is_flag=True, help="Also print a CSV row of the metric columns.")
@click.option(
    "--f1-average",
    default="example",
    type=click.Choice(["example", "micro", "macro"]),
    help="Multi-label F1 averaging.",
)
def eval_run(input_path: str, catalog_path: str | None, as_csv: bool, f1_average: str) -> None:
    """Evaluate a prediction run and print the metric report."""
    catalog = _load_catalog_opt(catalog_path)
    try:
        records = load_prediction_records(input_path)
        report = evaluate_run(records, catalog.category_codes, f1_average)
    except (EmptyRun, SchemaError) as exc:
        raise SystemExit(_fail(1, f"evaluation error: {exc}"))
    click.echo(json.dumps(report.to_json(), ensure_ascii=False, indent=2))
    if as_csv:
        click.echo(CSV_HEADER)
        click.echo(report.to_csv_row())


@main.command(name="gen-data")
@click.option("--catalog", "catalog_path", type=click.Path(exists=True))
@click.option("--counts", "counts_json", default=None, help='JSON counts, e.g. {"safe": 29, "T1": 30}.')
@click.option("--total", default=None, type=int, help="Total size with the default mix.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", "output_path", default="-", help="Output JSONL, '-' for stdout.")
@click.option("--rft", "as_rft", is_flag=True, help="Emit reasoning-style samples instead.")
@click.option(
    "--template",
    default="rft-few-shot",
    type=click.Choice(["rft-zero-shot", "rft-few-shot"]),
    help="Prompt template for --rft output.",
)
def gen_data(
    catalog_path: str | None,
    counts_json: str | None,
    total: int | None,
    seed: int,
    output_path: str,
    as_rft: bool,
    template: str,
) -> None:
    """Generate the deterministic synthetic corpus."""
    catalog = _load_catalog_opt(catalog_path)
    if counts_json is not None:
        try:
            counts = {str(k): int(v) for k, v in json.loads(counts_json).items()}
        except (ValueError, AttributeError) as exc:
            raise SystemExit(_fail(EXIT_CONFIG, f"bad --counts: {exc}"))
    elif total is not None:
        counts = dataset_mod.default_counts(total, catalog)
    else:
        raise SystemExit(_fail(EXIT_CONFIG, "pass --counts or --total"))

    try:
        samples = dataset_mod.generate_synthetic_corpus(catalog, counts, seed)
    except UnsupportedCategory as exc:
        raise SystemExit(_fail(EXIT_CONFIG, f"counts error: {exc}"))

    rows: list[dict]
    if as_rft:
        from .dlms_client import PromptTemplate, TemplateKind

        kind = TemplateKind(template)
        rows = [
            s.to_json()
            for s in dataset_mod.convert_sft_to_rft(samples, catalog, PromptTemplate(kind))
        ]
    else:
        rows = [s.to_json() for s in samples]

    sink = sys.stdout if output_path == "-" else open(output_path, "w", encoding="utf-8")
    try:
        for row in rows:
            sink.write(json.dumps(row, ensure_ascii=False) + "\n")
    finally:
        if sink is not sys.stdout:
            sink.close()


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def health(config_path: str) -> None:
    """Print the gateway health report for a config (without serving)."""
    from .gateway import GatewayService, load_config, resolve_catalog, resolve_key

    try:
        config = load_config(config_path)
        catalog = resolve_catalog(config)
    except (ConfigError, SchemaError) as exc:
        raise SystemExit(_fail(EXIT_CONFIG, f"config error: {exc}"))
    try:
        key = resolve_key(config.key_source)
    except KeyMaterialError as exc:
        raise SystemExit(_fail(EXIT_KEY, f"key error: {exc}"))
    service = GatewayService(config, catalog=catalog, key=key)
    click.echo(json.dumps(service.health()))


if __name__ == "__main__":
    main()
