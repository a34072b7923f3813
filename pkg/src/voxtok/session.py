"""Save and resume a streaming memory session.

The session file is canonical JSON: fixed key order, compact separators,
floats in shortest round-trip form.  Active frames are embedded as base64
frame records and re-tokenized on load; historical tokens are stored with
their voxel cells (cells depend on the median range of their original
frame, so they cannot be recomputed later).  Because every field
round-trips exactly, saving, resuming, and saving again produces the same
bytes as an uninterrupted run.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from voxtok.config import PipelineConfig
from voxtok.errors import ConfigError, LogFormatError, ShapeMismatch
from voxtok.logio import decode_frame, encode_frame
from voxtok.memory import CacheLedger, LedgerEntry, MemoryStore
from voxtok.pruning import assign_cells, tokenize_frame
from voxtok.records import TokenRecord
from voxtok.voxel import VoxelIndex, group

SESSION_VERSION = 1


def _token_doc(token: TokenRecord) -> dict:
    return {
        "tokenIndex": token.token_index,
        "feature": [float(v) for v in token.feature],
        "anchor": None if token.anchor is None else [float(v) for v in token.anchor],
        "range": token.range,
        "cell": None if token.cell is None else list(token.cell),
    }


def _token_from_doc(frame_id: int, doc: dict) -> TokenRecord:
    anchor = doc["anchor"]
    cell = doc["cell"]
    token = TokenRecord(
        frame_id,
        doc["tokenIndex"],
        np.array(doc["feature"], dtype=np.float32),
        None if anchor is None else np.array(anchor, dtype=np.float64),
        doc["range"],
    )
    if cell is not None:
        token.cell = VoxelIndex(*cell)
    return token


def session_document(store: MemoryStore, config: PipelineConfig) -> dict:
    pruned = []
    for fid in sorted(store.pruned):
        pruned.append({
            "frameId": fid,
            "tokens": [_token_doc(t) for t in store.pruned[fid]],
        })
    return {
        "version": SESSION_VERSION,
        "instructionSlot": store.snapshot().instruction_slot,
        "config": config.to_lines(),
        "activeFrames": [
            base64.b64encode(encode_frame(frame)).decode("ascii")
            for frame, _ in store.active
        ],
        "prunedFrames": pruned,
        "ledger": [[e.frame_id, e.token_count, e.retained]
                   for e in store.ledger.entries],
    }


def dump_session(store: MemoryStore, config: PipelineConfig) -> str:
    return json.dumps(session_document(store, config), separators=(",", ":"))


def save_session(path, store: MemoryStore, config: PipelineConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_session(store, config))
        fh.write("\n")


def load_session(path) -> tuple[MemoryStore, PipelineConfig]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise LogFormatError(f"cannot read session {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"session {path} is not valid JSON: {exc}") from exc
    try:
        if doc["version"] != SESSION_VERSION:
            raise LogFormatError(
                f"unsupported session version {doc['version']!r}")
        config = PipelineConfig.from_text("\n".join(doc["config"]))
        store = config.memory_store()
        for entry in doc["prunedFrames"]:
            fid = entry["frameId"]
            store.pruned[fid] = [_token_from_doc(fid, td)
                                 for td in entry["tokens"]]
        anchored = [t for toks in store.pruned.values() for t in toks
                    if t.anchored]
        store.grid = group(anchored)
        for raw in doc["activeFrames"]:
            frame = decode_frame(base64.b64decode(raw.encode("ascii")))
            tokens = tokenize_frame(frame, store.anchor_settings)
            assign_cells(tokens, store.policy)
            store.active.append((frame, tokens))
        ledger = CacheLedger()
        for fid, count, retained in doc["ledger"]:
            ledger.entries.append(LedgerEntry(fid, count, retained))
        store.ledger = ledger
        return store, config
    except (KeyError, TypeError, ValueError, ConfigError, ShapeMismatch) as exc:
        raise LogFormatError(f"session {path} is malformed: {exc}") from exc
