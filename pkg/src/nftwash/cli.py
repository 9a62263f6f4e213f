"""Command-line driver.

Stages and the files they exchange (all under ``--out``)::

    preprocess  events CSV             -> clean_events.csv, clean_report.json
    detect      clean_events.csv       -> windows.json, findings.json
    mine        findings.json          -> pairs_groups.json
    analyze     findings + windows     -> report.json, trend.csv, histogram.csv,
                + pairs_groups.json       gain_loss.csv, price_deltas.csv
    export-graph findings + windows    -> graphs/*.dot
    run         all of the above in order
    synth       --spec                 -> events.csv, ..., labels.json

Each stage also writes ``manifest_<stage>.json`` with the effective config,
the sha256 of every file it read and the tool version.

Exit codes: 0 ok, 1 validation or stage-ordering error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .analytics import build_report, write_csvs
from .config import ConfigError, PipelineConfig, load_config
from .data import (
    DataError, parse_block_txns, parse_canon_timestamps, parse_erc20_txns,
    parse_events, parse_prices, write_events,
)
from .mining import TraderGroup, mine
from .pipeline import Findings, detect_all, windows_artifact, windows_from_artifact
from .preprocess import clean_corpus
from .roundtrip import build_graph, to_dot
from .synthgen import ScenarioSpec, SpecError, generate

log = logging.getLogger("nftwash")


class StageError(Exception):
    """A stage was run before the one that produces its input."""


# (flag, config key, argparse kwargs)
FLAGS = [
    ("--events", "events", {}),
    ("--block-txns", "block_txns", {}),
    ("--erc20-txns", "erc20_txns", {}),
    ("--prices", "prices", {}),
    ("--canon-timestamps", "canon_timestamps", {}),
    ("--marketplace-contract", "marketplace_contracts", {"action": "append"}),
    ("--initial-ati", "initial_ati_seconds", {"type": float}),
    ("--walk-threshold", "walk_threshold", {"type": int}),
    ("--max-cycles", "max_cycles", {"type": int}),
    ("--eth-window-min", "eth_window_min", {"type": float}),
    ("--erc20-window-min", "erc20_window_min", {"type": float}),
    ("--bidirectional", "bidirectional", {"action": "store_const", "const": True}),
    ("--hidden-min-len", "hidden_min_len", {"type": int}),
    ("--support", "support", {"type": float}),
    ("--min-count", "min_count", {"type": int}),
    ("--fee-rate", "fee_rate", {"type": float}),
    ("--pf-threshold", "pf_threshold", {"type": float}),
    ("--exclude-collection", "exclude_collections", {"action": "append"}),
    ("--jobs", "jobs", {"type": int}),
]


def _dump(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load(path: Path, stage: str) -> dict:
    if not path.exists():
        raise StageError(f"{path.name} not found in {path.parent}; run `nftwash {stage}` first")
    return json.loads(path.read_text(encoding="utf-8"))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(out: Path, stage: str, cfg: PipelineConfig, inputs: dict):
    _dump({
        "stage": stage,
        "version": __version__,
        "config": cfg.to_dict(),
        "inputs": {k: {"path": str(p), "sha256": _sha256(p)} for k, p in sorted(inputs.items())},
    }, out / f"manifest_{stage}.json")


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _prices(cfg: PipelineConfig):
    return parse_prices(cfg.prices) if cfg.prices else None


def _clean_sequences(out: Path):
    path = out / "clean_events.csv"
    if not path.exists():
        raise StageError(f"clean_events.csv not found in {out}; run `nftwash preprocess` first")
    return parse_events(path), path


# --------------------------------------------------------------------------
# stages


def cmd_preprocess(cfg: PipelineConfig) -> int:
    if not cfg.events:
        raise ConfigError("preprocess needs --events (or `events` in the config file)")
    out = _out(cfg)
    errors: list = []
    seqs = parse_events(cfg.events, errors)
    canon = parse_canon_timestamps(cfg.canon_timestamps) if cfg.canon_timestamps else None
    cleaned, report = clean_corpus(seqs, cfg.marketplace_contracts, canon)
    write_events(out / "clean_events.csv", cleaned)
    doc = {"schema": "nftwash.clean_report/1", **report.to_dict(),
           "skippedRows": [{"line": e.line, "error": e.message} for e in errors]}
    _dump(doc, out / "clean_report.json")
    inputs = {"events": cfg.events}
    if cfg.canon_timestamps:
        inputs["canon_timestamps"] = cfg.canon_timestamps
    _manifest(out, "preprocess", cfg, inputs)
    log.info("preprocess: %d tokens, %d duplicates removed, %d rows skipped",
             report.tokens, report.duplicatesRemoved, len(errors))
    return 0


def cmd_detect(cfg: PipelineConfig) -> int:
    out = _out(cfg)
    seqs, clean_path = _clean_sequences(out)
    block = parse_block_txns(cfg.block_txns) if cfg.block_txns else []
    erc = parse_erc20_txns(cfg.erc20_txns) if cfg.erc20_txns else []
    prices = _prices(cfg)
    if prices is not None:
        prices.learn_symbols(erc)
    found, windows = detect_all(seqs, block, erc, prices, cfg)
    _dump(windows_artifact(windows), out / "windows.json")
    _dump(found.to_dict(), out / "findings.json")
    inputs = {"clean_events": clean_path}
    for k in ("block_txns", "erc20_txns", "prices"):
        if getattr(cfg, k):
            inputs[k] = getattr(cfg, k)
    _manifest(out, "detect", cfg, inputs)
    s = found.summary()
    log.info("detect: %d round-trip, %d unprofitable, %d hidden findings",
             s["roundtrip"]["findings"], s["unprofitable"]["findings"], s["hidden"]["runs"])
    return 0


def _findings(out: Path) -> Findings:
    return Findings.from_dict(_load(out / "findings.json", "detect"))


def cmd_mine(cfg: PipelineConfig) -> int:
    out = _out(cfg)
    found = _findings(out)
    result = mine(found.roundtrip, found.unprofitable, found.hidden, cfg.support, cfg.min_count)
    _dump({"schema": "nftwash.pairs_groups/1", **result.to_dict()}, out / "pairs_groups.json")
    _manifest(out, "mine", cfg, {"findings": out / "findings.json"})
    log.info("mine: %d rows, threshold %d, %d pairs", result.n_rows, result.threshold, len(result.pairs))
    return 0


def cmd_analyze(cfg: PipelineConfig) -> int:
    out = _out(cfg)
    found = _findings(out)
    seqs, clean_path = _clean_sequences(out)
    windows = windows_from_artifact(_load(out / "windows.json", "detect"), seqs)
    mined = _load(out / "pairs_groups.json", "mine")
    groups = [TraderGroup(frozenset(g["addresses"])) for g in mined["components"]]
    prices = _prices(cfg)
    if prices is not None and cfg.erc20_txns:
        prices.learn_symbols(parse_erc20_txns(cfg.erc20_txns))
    report = build_report(found, windows, groups, prices, cfg.fee_rate, cfg.pf_threshold,
                          cfg.exclude_collections)
    _dump(report, out / "report.json")
    write_csvs(report, out)
    inputs = {"findings": out / "findings.json", "windows": out / "windows.json",
              "pairs_groups": out / "pairs_groups.json", "clean_events": clean_path}
    if cfg.prices:
        inputs["prices"] = cfg.prices
    _manifest(out, "analyze", cfg, inputs)
    return 0


def cmd_export_graph(cfg: PipelineConfig) -> int:
    out = _out(cfg)
    found = _findings(out)
    seqs, _ = _clean_sequences(out)
    windows = windows_from_artifact(_load(out / "windows.json", "detect"), seqs)
    flagged: dict = {}
    for f in found.roundtrip:
        flagged.setdefault((tuple(f.token_key), f.window_index), []).extend(f.records)
    gdir = out / "graphs"
    gdir.mkdir(exist_ok=True)
    for (key, j), recs in sorted(flagged.items()):
        g = build_graph(windows[key][j])
        name = f"{key[0]}_{key[1]}_w{j}".replace("/", "_").replace(" ", "_")
        (gdir / f"{name}.dot").write_text(to_dot(g, recs), encoding="utf-8")
    log.info("export-graph: %d graphs", len(flagged))
    return 0


def cmd_run(cfg: PipelineConfig) -> int:
    for stage in (cmd_preprocess, cmd_detect, cmd_mine, cmd_analyze):
        stage(cfg)
    return 0


def cmd_synth(args) -> int:
    spec = ScenarioSpec.load(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    paths = generate(spec, args.out)
    log.info("synth: wrote %s", ", ".join(p.name for p in paths.values()))
    return 0


STAGES = {
    "preprocess": cmd_preprocess,
    "detect": cmd_detect,
    "mine": cmd_mine,
    "analyze": cmd_analyze,
    "export-graph": cmd_export_graph,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nftwash", description="NFT wash-trading detection pipeline")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON config file; flags override it")
    common.add_argument("--out", dest="output_dir", help="artifact directory")
    for flag, key, kw in FLAGS:
        common.add_argument(flag, dest=key, default=None, **kw)
    for name in STAGES:
        sub.add_parser(name, parents=[common])

    s = sub.add_parser("synth", help="write a labeled synthetic corpus")
    s.add_argument("--spec", required=True, help="scenario JSON")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    return p


def _config(args) -> PipelineConfig:
    overrides = {key: getattr(args, key) for _, key, _ in FLAGS}
    overrides["output_dir"] = args.output_dir
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args)
        return STAGES[args.command](_config(args))
    except (StageError, ConfigError, DataError, SpecError, ValueError) as exc:
        print(f"nftwash: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"nftwash: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
