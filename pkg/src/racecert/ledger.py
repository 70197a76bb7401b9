"""Append-only NDJSON audit ledger with bit-exact fixed-point encodings.

One JSON object per line, UTF-8, ``\\n`` terminators.  The first line is a
header tagged ``racecert/ledger/v1`` carrying the public run config; every
following line is an event record.  Numeric fixed-point fields serialize as
decimal strings of the *raw* integer (unambiguous and locale independent);
human-readable scaled values are duplicated in an ignored ``_display``
object.  Potential fields mirror the downgrade-log convention and serialize
as 4-decimal scaled strings.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

from . import fixedpoint as fp

SCHEMA_TAG = "racecert/ledger/v1"

EVENT_KINDS = {"push", "pop", "leaf_eval", "guard", "budget", "stop"}

GUARD_NAMES = {
    "CountFail",
    "AcyclicityFail",
    "NumClamp",
    "Timeout",
    "BudgetFail",
    "CapExceeded",
}

# field -> (lo, hi) for raw-integer decimal-string fields.
RAW_INT_FIELDS: dict[str, tuple[int, int]] = {
    "U": (0, fp.Q0_64_MAX),
    "W": (0, fp.Q0_64_MAX),
    "Nub": (0, (1 << 64) - 1),
    "key_raw": (fp.Q64_64_MIN, fp.Q64_64_MAX),
    "key_tight": (fp.Q64_64_MIN, fp.Q64_64_MAX),
    "value": (fp.Q64_64_MIN, fp.Q64_64_MAX),
    "incumbent": (fp.Q64_64_MIN, fp.Q64_64_MAX),
    "kappa": (fp.Q32_32_MIN, fp.Q32_32_MAX),
    "router_rdp_eps": (fp.Q32_32_MIN, fp.Q32_32_MAX),
    "dkey_pred": (fp.Q32_32_MIN, fp.Q32_32_MAX),
    "dkey_real": (fp.Q32_32_MIN, fp.Q32_32_MAX),
    "eps_train": (fp.Q32_32_MIN, fp.Q32_32_MAX),
    "alpha_selected": (0, (1 << 32) - 1),
    "price_spent": (0, (1 << 64) - 1),
    "price_cap": (0, (1 << 64) - 1),
    "sla_ms": (0, (1 << 32) - 1),
    "tie_token": (0, (1 << 32) - 1),
}

# Scaled 4-decimal strings (Q32.32 resolution underneath).
SCALED_FIELDS = {"phi_before", "phi_after", "delta_phi", "eta"}

STRING_FIELDS = {
    "event",
    "ctx_digest",
    "node_id",
    "parent_id",
    "mode",
    "claim_type",
    "claim_type_before",
    "claim_type_after",
    "privacy_scope",
    "budget_event",
    "model_id",
    "adapter_id",
    "dp_cert_id",
    "delta_train",
    "eps_delta.eps",
    "eps_delta.delta",
    "reason",
}

KNOWN_FIELDS = (
    set(RAW_INT_FIELDS) | SCALED_FIELDS | STRING_FIELDS | {"guards", "_display"}
)


class MalformedLineError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class SchemaViolationError(MalformedLineError):
    pass


class OverflowOnParseError(MalformedLineError):
    pass


@dataclass
class LedgerRecord:
    """One event.  ``raw`` holds decoded values: ints for raw fields,
    Q32.32 raw ints for scaled fields, strings/lists otherwise."""

    fields: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.fields.get(key, default)

    def __getitem__(self, key):
        return self.fields[key]

    def __contains__(self, key):
        return key in self.fields

    def to_json_obj(self) -> dict:
        out: dict = {}
        for key in sorted(self.fields):
            val = self.fields[key]
            if key in RAW_INT_FIELDS:
                out[key] = str(val)
            elif key in SCALED_FIELDS:
                out[key] = fp.format_scaled_q32_32(val)
            else:
                out[key] = val
        return out

    @classmethod
    def from_json_obj(cls, obj: dict, lineno: int = 0) -> "LedgerRecord":
        fields: dict = {}
        for key, val in obj.items():
            if key not in KNOWN_FIELDS:
                raise SchemaViolationError(lineno, f"unknown field {key!r}")
            if key in RAW_INT_FIELDS:
                lo, hi = RAW_INT_FIELDS[key]
                if not isinstance(val, str):
                    raise SchemaViolationError(lineno, f"{key} must be a decimal string")
                try:
                    fields[key] = fp.parse_raw(val, lo, hi)
                except fp.NumClampError as exc:
                    raise OverflowOnParseError(lineno, str(exc)) from exc
                except ValueError as exc:
                    raise MalformedLineError(lineno, f"bad integer in {key}: {exc}")
            elif key in SCALED_FIELDS:
                try:
                    fields[key] = fp.parse_scaled_q32_32(val)
                except fp.NumClampError as exc:
                    raise OverflowOnParseError(lineno, str(exc)) from exc
                except (ValueError, ZeroDivisionError) as exc:
                    raise MalformedLineError(lineno, f"bad decimal in {key}: {exc}")
            elif key == "guards":
                if not isinstance(val, list) or not set(val) <= GUARD_NAMES:
                    raise SchemaViolationError(lineno, f"bad guards {val!r}")
                fields[key] = list(val)
            elif key == "_display":
                fields[key] = val
            else:
                if not isinstance(val, str):
                    raise SchemaViolationError(lineno, f"{key} must be a string")
                fields[key] = val
        event = fields.get("event")
        if event is not None and event not in EVENT_KINDS:
            raise SchemaViolationError(lineno, f"unknown event kind {event!r}")
        return cls(fields=fields)


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class Ledger:
    """Single-writer, append-only event log for one run."""

    def __init__(self, header: dict):
        header = dict(header)
        header["schema"] = SCHEMA_TAG
        self.header = header
        self.records: list[LedgerRecord] = []

    def append(self, record: LedgerRecord | dict) -> None:
        if isinstance(record, dict):
            record = LedgerRecord.from_json_obj(
                {k: v for k, v in record.items()}, lineno=len(self.records) + 2
            )
        self.records.append(record)

    def serialize(self) -> str:
        lines = [_dump(self.header)]
        lines.extend(_dump(r.to_json_obj()) for r in self.records)
        return "\n".join(lines) + "\n"

    def save(self, path: str) -> None:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.serialize())

    @classmethod
    def parse_text(cls, text: str) -> "Ledger":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise MalformedLineError(1, "empty ledger")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise MalformedLineError(1, f"bad JSON: {exc}")
        if not isinstance(header, dict) or header.get("schema") != SCHEMA_TAG:
            raise SchemaViolationError(1, "missing or wrong schema tag")
        ledger = cls.__new__(cls)
        ledger.header = header
        ledger.records = []
        for i, line in enumerate(lines[1:], start=2):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(i, f"bad JSON: {exc}")
            if not isinstance(obj, dict):
                raise MalformedLineError(i, "record is not an object")
            ledger.records.append(LedgerRecord.from_json_obj(obj, lineno=i))
        return ledger

    @classmethod
    def parse(cls, path: str) -> "Ledger":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return cls.parse_text(fh.read())


def make_uuid7(unix_ms: int, rand_a: int, rand_b: int) -> str:
    """Assemble a UUIDv7 from an explicit timestamp and random bits.

    Deterministic runs feed a seeded counter clock; otherwise callers pass
    the wall clock.
    """
    unix_ms &= (1 << 48) - 1
    rand_a &= (1 << 12) - 1
    rand_b &= (1 << 62) - 1
    value = (unix_ms << 80) | (0x7 << 76) | (rand_a << 64) | (0b10 << 62) | rand_b
    hx = f"{value:032x}"
    return f"{hx[0:8]}-{hx[8:12]}-{hx[12:16]}-{hx[16:20]}-{hx[20:32]}"


class Uuid7Source:
    """UUIDv7 generator; seeded (counter clock) or wall clock."""

    def __init__(self, stream=None, deterministic: bool | None = None):
        if deterministic is None:
            deterministic = os.environ.get("RACECERT_DETERMINISTIC") == "1"
        self.deterministic = deterministic and stream is not None
        self.stream = stream
        self.counter = 0

    def next(self, digest: bytes = b"") -> str:
        self.counter += 1
        if self.deterministic:
            ms = self.counter
            bits = self.stream.raw(digest, "uuid", counter=self.counter)
            return make_uuid7(ms, bits >> 52, bits & ((1 << 52) - 1))
        ms = time.time_ns() // 1_000_000
        bits = int.from_bytes(os.urandom(10), "big")
        return make_uuid7(ms, bits >> 62, bits & ((1 << 62) - 1))
