"""Chain-spec ingestion: dense CSV and structured JSON formats.

CSV: a header row of state labels followed by n rows of n transition
probabilities.  JSON: ``{"states": [...], "transitions": [[from, to, p],
...]}`` with optional ``metadata``, ``v_weights`` and ``tolerances``
objects.  Probabilities are parsed from their decimal strings into
binary floats exactly once, at this boundary.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .chain import AbsorbedKernel, StateFunction, validate_kernel
from .errors import ParseError


@dataclass(frozen=True)
class ChainSpec:
    """A parsed chain description plus optional analysis overrides."""

    kernel: AbsorbedKernel
    v_weights: StateFunction | None = None
    tolerances: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    source_format: str = "json"


def _load_source(source: str | os.PathLike) -> str:
    if isinstance(source, os.PathLike) or (
        isinstance(source, str) and "\n" not in source and os.path.exists(source)
    ):
        with open(source, "r", encoding="utf-8") as fh:
            return fh.read()
    return str(source)


def _parse_json(text: str) -> ChainSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: "
                         f"{exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top-level JSON value must be an object")
    try:
        states = [str(s) for s in doc["states"]]
    except KeyError:
        raise ParseError("missing required key 'states'") from None
    if len(set(states)) != len(states):
        raise ParseError("state labels must be distinct")
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    matrix = np.zeros((n, n))
    seen: set[tuple[str, str]] = set()
    for pos, entry in enumerate(doc.get("transitions", [])):
        if not (isinstance(entry, (list, tuple)) and len(entry) == 3):
            raise ParseError(f"transition #{pos} must be [from, to, probability]")
        src, dst, prob = str(entry[0]), str(entry[1]), entry[2]
        if src not in index:
            raise ParseError(f"transition #{pos}: unknown state {src!r}")
        if dst not in index:
            raise ParseError(f"transition #{pos}: unknown state {dst!r}")
        if (src, dst) in seen:
            raise ParseError(f"transition #{pos}: duplicate edge {src!r} -> {dst!r}")
        seen.add((src, dst))
        try:
            matrix[index[src], index[dst]] = float(prob)
        except (TypeError, ValueError):
            raise ParseError(
                f"transition #{pos}: probability {prob!r} is not a number"
            ) from None
    kernel = validate_kernel(matrix, states)
    v_weights = None
    if "v_weights" in doc:
        v_weights = parse_v_weights(doc["v_weights"], kernel)
    tolerances = doc.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise ParseError("'tolerances' must be an object")
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise ParseError("'metadata' must be an object")
    return ChainSpec(
        kernel=kernel,
        v_weights=v_weights,
        tolerances={str(k): float(v) for k, v in tolerances.items()},
        metadata=metadata,
        source_format="json",
    )


def _parse_csv(text: str) -> ChainSpec:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError("empty CSV input")
    labels = [cell.strip() for cell in rows[0]]
    n = len(labels)
    if len(set(labels)) != n:
        raise ParseError("CSV header: state labels must be distinct")
    if len(rows) - 1 != n:
        raise ParseError(
            f"CSV body has {len(rows) - 1} rows, expected {n} (one per state)"
        )
    matrix = np.zeros((n, n))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != n:
            raise ParseError(f"line {i}: expected {n} fields, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                matrix[i - 2, j] = float(cell)
            except ValueError:
                raise ParseError(
                    f"line {i}, field {j + 1}: {cell.strip()!r} is not a number"
                ) from None
    return ChainSpec(kernel=validate_kernel(matrix, labels), source_format="csv")


def parse_chain_spec(source: str | os.PathLike) -> ChainSpec:
    """Parse a chain description from a path or raw text.

    The format is taken from the file extension when there is one, and
    sniffed from the first non-blank character otherwise.  Duplicate
    edges are an error, never summed; unspecified transitions are zero.
    """
    text = _load_source(source)
    name = str(source).lower()
    if name.endswith(".json"):
        return _parse_json(text)
    if name.endswith(".csv"):
        return _parse_csv(text)
    head = text.lstrip()[:1]
    if head == "{":
        return _parse_json(text)
    if head == "":
        raise ParseError("empty chain spec")
    return _parse_csv(text)


def parse_v_weights(source, kernel: AbsorbedKernel) -> StateFunction:
    """Read a weight vector (>= 1 everywhere) aligned with kernel states.

    Accepts a JSON object mapping labels to values, a plain list in
    state order, or a path/text containing either.
    """
    if isinstance(source, (str, os.PathLike)) and not isinstance(source, dict):
        text = _load_source(source)
        try:
            source = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid weight file: {exc.msg}") from exc
    if isinstance(source, dict):
        missing = [s for s in kernel.states if s not in source]
        if missing:
            raise ParseError(f"weights missing for states {missing[:4]}")
        values = np.array([float(source[s]) for s in kernel.states])
    elif isinstance(source, (list, tuple)):
        if len(source) != kernel.n:
            raise ParseError(
                f"{len(source)} weights for {kernel.n} states"
            )
        values = np.array([float(x) for x in source])
    else:
        raise ParseError("weights must be an object or a list")
    if np.any(values < 1.0):
        raise ParseError("weights must be >= 1 everywhere")
    return StateFunction(values)
