"""Command-line entry point.

Subcommands: convert, translate, validate, export-finetune, evaluate,
stats. Every flag can also be supplied through the environment
(``SLOTPROJ_<KEY>``) or a ``--config`` key=value file; flags win over the
environment, which wins over the file.

Exit codes: 0 success, 1 validation/data error, 2 I/O error, 3 fatal
backend error (the resumable journal is preserved).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import (
    BackendConfig,
    DEFAULT_CREDENTIAL_ENV,
    DEFAULT_PROMPT_TEMPLATE,
    FaultyBackend,
    HttpBackend,
    IdentityBackend,
    MalformedResponse,
    RateLimited,
    ScrambleBackend,
    ThrottledBackend,
    TransportError,
    UnsupportedLocale,
)
from .config import ConfigError, Settings, parse_bool
from .datasets import (
    DEFAULT_INSTRUCTION_TEMPLATE,
    Dataset,
    export_finetune_pairs,
    read_massive,
    read_multiatis,
    write_finetune_pairs,
    write_multiatis,
)
from .errors import SlotprojError
from .metrics import evaluate
from .pipeline import (
    RetryPolicy,
    load_journal,
    project_dataset,
    stats_from_journal,
    validate_tags,
)
from .tagging import MARKER_PATTERN, decode_tagged, default_mode, encode_tagged

# Target languages of the reference translation runs.
DEFAULT_TARGETS = "de,es,fr,hi,ja,pt,tr,zh"

TAGGED_FIELDS = ("id", "locale", "intent", "tagged_text", "tag_map")


def _require(settings: Settings, key: str, cast=None):
    value = settings.get(key, cast=cast)
    if value is None:
        flag = "--" + key.replace("_", "-")
        raise ConfigError(f"missing required option {flag} (config key {key!r})")
    return value


def _choice(settings: Settings, key: str, choices: tuple[str, ...], default: str):
    value = settings.get(key, default)
    if value not in choices:
        raise ConfigError(f"{key} must be one of {', '.join(choices)}, got {value!r}")
    return value


def _mode_for(tokenizer: str, locale: str) -> str:
    return default_mode(locale) if tokenizer == "auto" else tokenizer


def _read_tagged_records(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SlotprojError(f"{path}:{lineno}: not valid JSON") from exc
            records.append(record)
    return records


def cmd_convert(args: argparse.Namespace) -> int:
    settings = Settings(vars(args), args.known_keys)
    input_path = _require(settings, "input")
    output_path = _require(settings, "output")
    input_format = _choice(settings, "input_format", ("multiatis", "massive", "tagged"), "multiatis")
    output_format = _choice(settings, "output_format", ("tagged", "multiatis"), "tagged")
    tokenizer = _choice(settings, "tokenizer", ("auto", "whitespace", "char"), "auto")

    if input_format in ("multiatis", "massive") and output_format == "tagged":
        if input_format == "multiatis":
            datasets = [read_multiatis(input_path, locale=settings.get("locale", "en"))]
        else:
            corpus = read_massive(input_path)
            wanted = settings.get("locales")
            locales = (
                [loc.strip() for loc in wanted.split(",") if loc.strip()]
                if wanted
                else corpus.locales
            )
            datasets = []
            for locale in locales:
                if locale not in corpus.datasets:
                    raise SlotprojError(f"{input_path} has no locale {locale!r}")
                datasets.append(corpus.datasets[locale])
        count = 0
        with open(output_path, "w", encoding="utf-8", newline="\n") as fh:
            for dataset in datasets:
                for utt in dataset.examples:
                    try:
                        tagged, tag_map = encode_tagged(utt)
                    except SlotprojError as exc:
                        raise type(exc)(f"record {utt.id!r}: {exc}") from exc
                    record = {
                        "id": utt.id,
                        "locale": utt.locale,
                        "intent": utt.intent,
                        "tagged_text": tagged,
                        "tag_map": tag_map,
                    }
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                    count += 1
        print(f"converted {count} records to tagged form: {output_path}")
        return 0

    if input_format == "tagged" and output_format == "multiatis":
        records = _read_tagged_records(input_path)
        examples = []
        locale = None
        for record in records:
            record_id = record.get("id", "?")
            for field in TAGGED_FIELDS:
                if field not in record:
                    raise SlotprojError(f"record {record_id!r}: missing field {field!r}")
            if locale is None:
                locale = record["locale"]
            elif record["locale"] != locale:
                raise SlotprojError(
                    f"record {record['id']!r}: locale {record['locale']!r} differs "
                    f"from {locale!r}; one TSV holds one locale"
                )
            try:
                examples.append(
                    decode_tagged(
                        record["tagged_text"],
                        dict(record["tag_map"]),
                        mode=_mode_for(tokenizer, record["locale"]),
                        locale=record["locale"],
                        utt_id=record["id"],
                        intent=record["intent"],
                    )
                )
            except SlotprojError as exc:
                raise type(exc)(f"record {record['id']!r}: {exc}") from exc
        write_multiatis(Dataset(locale=locale or "", examples=tuple(examples)), output_path)
        print(f"converted {len(examples)} records to TSV: {output_path}")
        return 0

    raise ConfigError(
        f"unsupported conversion {input_format} -> {output_format}; "
        "supported: multiatis->tagged, massive->tagged, tagged->multiatis"
    )


def _build_backend(settings: Settings, seed: int):
    backend_name = _choice(settings, "backend", ("identity", "scramble", "faulty", "http"), "identity")
    if backend_name == "identity":
        backend = IdentityBackend()
    elif backend_name == "scramble":
        backend = ScrambleBackend(seed=seed)
    elif backend_name == "faulty":
        backend = FaultyBackend(
            p=settings.get("faulty_p", 1.0, cast=float),
            seed=seed,
            duplicate_prob=settings.get("faulty_duplicate_p", 0.0, cast=float),
        )
    else:
        config = BackendConfig(
            endpoint=_require(settings, "endpoint"),
            model=_require(settings, "model"),
            prompt_template=settings.get("prompt_template", DEFAULT_PROMPT_TEMPLATE),
            dialect=_choice(settings, "dialect", ("completions", "chat"), "completions"),
            timeout=settings.get("timeout", 60.0, cast=float),
            max_concurrent=settings.get("max_concurrent", 1, cast=int),
            credential_env=settings.get("api_key_env", DEFAULT_CREDENTIAL_ENV),
        )
        backend = HttpBackend(config)
    throttle_ms = settings.get("throttle_ms", 0, cast=int)
    if throttle_ms:
        backend = ThrottledBackend(backend, throttle_ms)
    return backend


def cmd_translate(args: argparse.Namespace) -> int:
    settings = Settings(vars(args), args.known_keys)
    input_path = _require(settings, "input")
    output_dir = Path(_require(settings, "output_dir"))
    source_locale = settings.get("source_locale", "en")
    targets = [t.strip() for t in settings.get("targets", DEFAULT_TARGETS).split(",") if t.strip()]
    if not targets:
        raise ConfigError("no target locales given")
    seed = settings.get("seed", 0, cast=int)
    tokenizer = _choice(settings, "tokenizer", ("auto", "whitespace", "char"), "auto")
    policy = RetryPolicy(
        max_attempts=settings.get("max_attempts", 5, cast=int),
        on_exhaustion=_choice(settings, "on_exhaustion", ("drop", "copy_source"), "drop"),
        base_temperature=settings.get("base_temperature", 0.0, cast=float),
        temperature_step=settings.get("temperature_step", 0.3, cast=float),
        max_tokens=settings.get("max_tokens", 256, cast=int),
    )
    backend = _build_backend(settings, seed)
    no_journal = settings.get("no_journal", False, cast=parse_bool)
    max_workers = settings.get("max_concurrent", None, cast=int)

    dataset = read_multiatis(input_path, locale=source_locale)
    output_dir.mkdir(parents=True, exist_ok=True)
    for target in targets:
        journal_path = None if no_journal else output_dir / f"journal_{target}.jsonl"

        def progress(done: int, total: int, target=target) -> None:
            print(f"\r[{target}] {done}/{total}", end="", file=sys.stderr, flush=True)

        out_dataset, stats = project_dataset(
            dataset,
            target,
            backend,
            policy,
            mode=None if tokenizer == "auto" else tokenizer,
            journal_path=journal_path,
            max_workers=max_workers,
            request_seed=seed,
            progress=progress,
        )
        print(file=sys.stderr)
        out_path = output_dir / f"train_{target}.tsv"
        write_multiatis(out_dataset, out_path)
        stats_path = output_dir / f"stats_{target}.json"
        with open(stats_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(stats.as_dict(), fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")
        print(f"[{target}] translated={stats.translated} dropped={stats.dropped} -> {out_path}")
        print(stats.format_table())
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    settings = Settings(vars(args), args.known_keys)
    input_path = _require(settings, "input")
    record_format = _choice(settings, "format", ("tagged", "pairs"), "tagged")
    records = _read_tagged_records(input_path)
    invalid = 0
    for i, record in enumerate(records):
        if record_format == "tagged":
            record_id = record.get("id", f"line {i + 1}")
            text = record.get("tagged_text", "")
            report = validate_tags(text, text)
            known = set(record.get("tag_map", {}))
            unknown = [m for m in MARKER_PATTERN.findall(text) if m not in known]
            ok = report.ok and not unknown
            if not ok:
                invalid += 1
                reasons = list(report.failures) + (["UnknownTag"] if unknown else [])
                print(f"invalid {record_id}: {', '.join(sorted(set(reasons)))}")
        else:
            record_id = f"line {i + 1}"
            report = validate_tags(record.get("input", ""), record.get("output", ""))
            if not report.ok:
                invalid += 1
                print(f"invalid {record_id}: {', '.join(report.failures)}")
    print(f"checked {len(records)} records: {len(records) - invalid} valid, {invalid} invalid")
    return 1 if invalid else 0


def cmd_export_finetune(args: argparse.Namespace) -> int:
    settings = Settings(vars(args), args.known_keys)
    input_path = _require(settings, "input")
    output_path = _require(settings, "output")
    source_locale = settings.get("source_locale", "en-US")
    corpus = read_massive(input_path)
    wanted = settings.get("target_locales", "all")
    if wanted == "all":
        targets = [loc for loc in corpus.locales if loc != source_locale]
    else:
        targets = [t.strip() for t in wanted.split(",") if t.strip()]
    split = settings.get("split")
    template = settings.get("instruction_template", DEFAULT_INSTRUCTION_TEMPLATE)

    all_pairs = []
    totals = {"exported": 0, "skipped_span_count": 0, "skipped_slot_types": 0, "skipped_encode_error": 0}
    for target in targets:
        aligned = corpus.aligned(source_locale, target, split=split)
        pairs, summary = export_finetune_pairs(aligned, source_locale, target, template)
        all_pairs.extend(pairs)
        for key, value in summary.as_dict().items():
            totals[key] += value
        print(
            f"[{target}] exported={summary.exported} "
            f"skipped_span_count={summary.skipped_span_count} "
            f"skipped_slot_types={summary.skipped_slot_types} "
            f"skipped_encode_error={summary.skipped_encode_error}"
        )
    write_finetune_pairs(all_pairs, output_path)
    print(
        f"total exported={totals['exported']} skipped="
        f"{totals['skipped_span_count'] + totals['skipped_slot_types'] + totals['skipped_encode_error']}"
        f" -> {output_path}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    settings = Settings(vars(args), args.known_keys)
    pred_path = _require(settings, "pred")
    gold_path = _require(settings, "gold")
    report = evaluate(pred_path, gold_path)
    print(report.format_table())
    json_path = settings.get("json")
    if json_path:
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    settings = Settings(vars(args), args.known_keys)
    journal_path = _require(settings, "journal")
    entries = load_journal(journal_path)
    sources = None
    input_path = settings.get("input")
    if input_path:
        sources = read_multiatis(input_path, locale=settings.get("locale", "en")).examples
    stats = stats_from_journal(entries, sources)
    print(stats.format_table())
    json_path = settings.get("json")
    if json_path:
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(stats.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="flat key=value config file")
    sp.add_argument("--seed", type=int, help="seed for all randomness (default 0)")
    sp.add_argument("-v", "--verbose", action="store_true", default=None, help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slotproj",
        description="Project slot-annotated SLU training data into new languages "
        "via tagged machine translation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("convert", help="convert between dataset formats and tagged form")
    sp.add_argument("--input", help="input file")
    sp.add_argument("--output", help="output file")
    sp.add_argument("--input-format", choices=["multiatis", "massive", "tagged"])
    sp.add_argument("--output-format", choices=["tagged", "multiatis"])
    sp.add_argument("--locale", help="locale of a TSV input (default en)")
    sp.add_argument("--locales", help="comma-separated locale filter for parallel JSONL input")
    sp.add_argument("--tokenizer", choices=["auto", "whitespace", "char"])
    _add_common(sp)
    sp.set_defaults(func=cmd_convert)

    sp = sub.add_parser("translate", help="project a dataset into target locales")
    sp.add_argument("--input", help="source TSV dataset")
    sp.add_argument("--output-dir", help="directory for outputs, stats and journals")
    sp.add_argument("--source-locale", help="locale of the input (default en)")
    sp.add_argument("--targets", help=f"comma-separated target locales (default {DEFAULT_TARGETS})")
    sp.add_argument("--backend", choices=["identity", "scramble", "faulty", "http"])
    sp.add_argument("--faulty-p", type=float, help="marker corruption probability (faulty backend)")
    sp.add_argument("--faulty-duplicate-p", type=float, help="duplicate instead of drop probability")
    sp.add_argument("--endpoint", help="HTTP backend endpoint URL")
    sp.add_argument("--model", help="HTTP backend model name")
    sp.add_argument("--dialect", choices=["completions", "chat"])
    sp.add_argument("--prompt-template", help="template with {src}, {tgt} and {text}")
    sp.add_argument("--timeout", type=float, help="HTTP timeout in seconds (default 60)")
    sp.add_argument("--max-concurrent", type=int, help="in-flight request bound (default 1)")
    sp.add_argument("--api-key-env", help=f"credential env var (default {DEFAULT_CREDENTIAL_ENV})")
    sp.add_argument("--max-attempts", type=int, help="feedback-loop attempt budget (default 5)")
    sp.add_argument("--on-exhaustion", choices=["drop", "copy_source"])
    sp.add_argument("--base-temperature", type=float, help="attempt-1 temperature (default 0.0)")
    sp.add_argument("--temperature-step", type=float, help="per-retry increment (default 0.3)")
    sp.add_argument("--max-tokens", type=int, help="decode budget per request (default 256)")
    sp.add_argument("--tokenizer", choices=["auto", "whitespace", "char"])
    sp.add_argument("--no-journal", action="store_true", default=None, help="disable the journal")
    sp.add_argument("--throttle-ms", type=int, help="per-example delay in ms (testing aid)")
    _add_common(sp)
    sp.set_defaults(func=cmd_translate)

    sp = sub.add_parser("validate", help="check marker integrity of tagged records or pairs")
    sp.add_argument("--input", help="tagged JSONL or fine-tune pair JSONL")
    sp.add_argument("--format", choices=["tagged", "pairs"])
    _add_common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("export-finetune", help="export tagged parallel fine-tuning pairs")
    sp.add_argument("--input", help="parallel JSONL corpus")
    sp.add_argument("--output", help="output JSONL of {instruction, input, output}")
    sp.add_argument("--source-locale", help="source side locale (default en-US)")
    sp.add_argument("--target-locales", help="comma-separated targets, or 'all'")
    sp.add_argument("--split", help="restrict to one partition (e.g. train)")
    sp.add_argument("--instruction-template", help="template with {src} and {tgt}")
    _add_common(sp)
    sp.set_defaults(func=cmd_export_finetune)

    sp = sub.add_parser("evaluate", help="score a prediction file against a gold file")
    sp.add_argument("--pred", help="prediction TSV (or a gold-format TSV)")
    sp.add_argument("--gold", help="gold TSV")
    sp.add_argument("--json", help="also write the report as JSON here")
    _add_common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("stats", help="summarize a projection journal")
    sp.add_argument("--journal", help="journal JSONL from a translate run")
    sp.add_argument("--input", help="source TSV, enables per-slot-type survival counts")
    sp.add_argument("--locale", help="locale of --input (default en)")
    sp.add_argument("--json", help="also write the stats as JSON here")
    _add_common(sp)
    sp.set_defaults(func=cmd_stats)

    return parser


def _known_keys(parser: argparse.ArgumentParser) -> set[str]:
    return {
        action.dest
        for action in parser._actions  # noqa: SLF001 - argparse has no public accessor
        if action.dest not in ("help", "command", "func", "config")
    }


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # Attach the subparser's full key set for config-file validation.
    subparsers = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    args.known_keys = _known_keys(subparsers.choices[args.command])
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", None) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (TransportError, RateLimited, MalformedResponse, UnsupportedLocale) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except SlotprojError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
