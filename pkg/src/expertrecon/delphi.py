"""Round-by-round storage for a probabilistic Delphi elicitation.

A study lives in a directory::

    study.json      metadata: quantities, experts, group labels, max rounds
    round-1.csv     one row per (expert, quantity) judgement
    round-2.csv
    ...

Round files are written once and never modified; revised judgements go into
the next round.  Group labels are facilitator input and are stored in
``study.json``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import secrets
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ._io import atomic_write_text, fmt
from .judgements import EventJudgement, QuantileJudgement
from .sll import QuantileTriplet

__all__ = [
    "InputError",
    "Entry",
    "RoundRecord",
    "Quantity",
    "Study",
    "StopDecision",
    "read_round_csv",
    "write_round_csv",
    "anonymised_bundle",
    "stopping_check",
    "final_panel",
    "ROUND_COLUMNS",
]

ROUND_COLUMNS = (
    "expert_id", "quantity_id", "p_low", "low", "median", "high",
    "plausible_low", "plausible_high", "probability", "rationale",
)
_NUMERIC = ("p_low", "low", "median", "high", "plausible_low", "plausible_high", "probability")
_QUANTILE_FIELDS = ("low", "median", "high")


class InputError(ValueError):
    """Malformed study or panel input; ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class Entry:
    """One expert's judgement on one quantity in one round."""

    expert: str
    quantity: str
    low: float | None = None
    median: float | None = None
    high: float | None = None
    p_low: float | None = None
    plausible_low: float | None = None
    plausible_high: float | None = None
    probability: float | None = None
    rationale: str = ""
    group: str | None = None
    timestamp: str = ""

    def __post_init__(self):
        # ints and floats must serialise identically in bundles and round files
        for name in _NUMERIC:
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, float(value))

    @property
    def is_event(self) -> bool:
        return self.probability is not None

    def values(self) -> tuple:
        """The numbers compared between rounds (rationale excluded)."""
        if self.is_event:
            return (self.probability,)
        return (self.plausible_low, self.low, self.median, self.high, self.plausible_high)

    def validate(self):
        if self.is_event:
            if any(getattr(self, f) is not None for f in _QUANTILE_FIELDS):
                raise ValueError("row gives both a probability and quantiles")
            if not 0.0 <= self.probability <= 1.0:
                raise ValueError(f"probability {self.probability} outside [0, 1]")
            return
        if any(getattr(self, f) is None for f in _QUANTILE_FIELDS):
            raise ValueError("row needs low, median and high, or a probability")
        if not (self.low < self.median < self.high):
            raise ValueError(
                f"quantiles must satisfy low < median < high, got "
                f"({self.low}, {self.median}, {self.high})"
            )
        if self.plausible_low is not None and not self.plausible_low <= self.low:
            raise ValueError("plausible_low exceeds the lower quantile")
        if self.plausible_high is not None and not self.high <= self.plausible_high:
            raise ValueError("plausible_high is below the upper quantile")
        if self.p_low is not None and not 0.0 < self.p_low < 0.5:
            raise ValueError(f"p_low {self.p_low} outside (0, 0.5)")


@dataclass(frozen=True)
class RoundRecord:
    index: int
    entries: tuple[Entry, ...]

    def keyed(self) -> dict[tuple[str, str], Entry]:
        return {(e.expert, e.quantity): e for e in self.entries}


@dataclass(frozen=True)
class Quantity:
    id: str
    kind: str = "quantile"      # or "event"
    p_low: float = 0.05
    units: str = ""

    def __post_init__(self):
        if self.kind not in ("quantile", "event"):
            raise ValueError(f"quantity {self.id!r}: unknown kind {self.kind!r}")


def _parse_float(text: str, column: str, path, line: int) -> float | None:
    text = text.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"column {column!r}: cannot parse {text!r} as a number", path, line)
    if not math.isfinite(value):
        raise InputError(f"column {column!r}: value must be finite", path, line)
    return value


def read_round_csv(path, text: str | None = None, required=("expert_id", "quantity_id")) -> list[Entry]:
    """Parse a judgement table; errors carry the file line number.

    Accepts any subset of :data:`ROUND_COLUMNS` plus optional ``group`` and
    ``timestamp`` columns.
    """
    if text is None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except UnicodeDecodeError as exc:
            raise InputError(f"not valid UTF-8 ({exc})", path)
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("file is empty", path, 1)
    header = [h.strip() for h in header]
    known = set(ROUND_COLUMNS) | {"group", "timestamp"}
    unknown = [h for h in header if h not in known]
    if unknown:
        raise InputError(f"unknown column(s) {unknown}", path, 1)
    for col in required:
        if col not in header:
            raise InputError(f"missing column {col!r}", path, 1)
    entries = []
    for row in reader:
        line = reader.line_num
        if not row or all(c.strip() == "" for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"expected {len(header)} fields, found {len(row)}", path, line)
        rec = dict(zip(header, row))
        nums = {c: _parse_float(rec.get(c, ""), c, path, line) for c in _NUMERIC}
        expert = rec.get("expert_id", "").strip()
        if not expert:
            raise InputError("empty expert_id", path, line)
        entry = Entry(
            expert=expert,
            quantity=rec.get("quantity_id", "").strip() or "q1",
            low=nums["low"], median=nums["median"], high=nums["high"],
            p_low=nums["p_low"],
            plausible_low=nums["plausible_low"], plausible_high=nums["plausible_high"],
            probability=nums["probability"],
            rationale=rec.get("rationale", ""),
            group=(rec.get("group") or "").strip() or None,
            timestamp=(rec.get("timestamp") or "").strip(),
        )
        try:
            entry.validate()
        except ValueError as exc:
            raise InputError(str(exc), path, line)
        entries.append(entry)
    keys = [(e.expert, e.quantity) for e in entries]
    if len(set(keys)) != len(keys):
        dup = sorted({k for k in keys if keys.count(k) > 1})
        raise InputError(f"duplicate (expert, quantity) rows: {dup}", path)
    return entries


def write_round_csv(entries: Iterable[Entry]) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    has_time = any(e.timestamp for e in entries)
    w.writerow(ROUND_COLUMNS + (("timestamp",) if has_time else ()))
    for e in sorted(entries, key=lambda e: (e.quantity, e.expert)):
        row = [e.expert, e.quantity, fmt(e.p_low), fmt(e.low), fmt(e.median), fmt(e.high),
               fmt(e.plausible_low), fmt(e.plausible_high), fmt(e.probability), e.rationale]
        if has_time:
            row.append(e.timestamp)
        w.writerow(row)
    return buf.getvalue()


@dataclass
class Study:
    path: Path
    name: str
    quantities: list[Quantity]
    experts: list[str]
    groups: dict[str, str] = field(default_factory=dict)
    display_names: dict[str, str] = field(default_factory=dict)
    max_rounds: int = 3
    change_rtol: float = 0.0
    salt: str = ""
    rounds: list[RoundRecord] = field(default_factory=list)

    # -- persistence ----------------------------------------------------

    @classmethod
    def create(
        cls,
        path,
        name: str,
        quantities: Sequence[Quantity],
        experts: Sequence[str],
        max_rounds: int = 3,
        display_names: dict | None = None,
        groups: dict | None = None,
        change_rtol: float = 0.0,
        salt: str | None = None,
    ) -> "Study":
        path = Path(path)
        if (path / "study.json").exists():
            raise FileExistsError(f"{path} already holds a study")
        if len(set(experts)) != len(experts):
            raise ValueError("expert ids must be unique")
        study = cls(
            path=path, name=name, quantities=list(quantities), experts=list(experts),
            groups=dict(groups or {}), display_names=dict(display_names or {}),
            max_rounds=max_rounds, change_rtol=change_rtol,
            salt=salt if salt is not None else secrets.token_hex(8),
        )
        study.save_metadata()
        return study

    def save_metadata(self):
        doc = {
            "name": self.name,
            "quantities": [asdict(q) for q in self.quantities],
            "experts": [
                {"id": e, **({"name": self.display_names[e]} if e in self.display_names else {})}
                for e in self.experts
            ],
            "groups": dict(sorted(self.groups.items())),
            "max_rounds": self.max_rounds,
            "change_rtol": self.change_rtol,
            "salt": self.salt,
        }
        atomic_write_text(self.path / "study.json", json.dumps(doc, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Study":
        path = Path(path)
        meta_path = path / "study.json"
        try:
            doc = json.loads(meta_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise InputError("no study.json in study directory", meta_path)
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid JSON: {exc.msg}", meta_path, exc.lineno)
        experts, names = [], {}
        for e in doc.get("experts", []):
            if isinstance(e, str):
                experts.append(e)
            else:
                experts.append(e["id"])
                if "name" in e:
                    names[e["id"]] = e["name"]
        study = cls(
            path=path,
            name=doc.get("name", path.name),
            quantities=[Quantity(**q) for q in doc.get("quantities", [])],
            experts=experts,
            groups=dict(doc.get("groups", {})),
            display_names=names,
            max_rounds=int(doc.get("max_rounds", 3)),
            change_rtol=float(doc.get("change_rtol", 0.0)),
            salt=doc.get("salt", ""),
        )
        n = 1
        while (path / f"round-{n}.csv").exists():
            entries = read_round_csv(path / f"round-{n}.csv")
            study._check_entries(entries, path / f"round-{n}.csv")
            study.rounds.append(RoundRecord(n, tuple(entries)))
            n += 1
        return study

    # -- rounds ---------------------------------------------------------

    def quantity(self, qid: str) -> Quantity:
        for q in self.quantities:
            if q.id == qid:
                return q
        raise KeyError(qid)

    def _check_entries(self, entries: Sequence[Entry], where=None):
        qids = {q.id for q in self.quantities}
        for e in entries:
            if e.expert not in self.experts:
                raise InputError(f"unknown expert {e.expert!r}", where)
            if e.quantity not in qids:
                raise InputError(f"unknown quantity {e.quantity!r}", where)
            kind = self.quantity(e.quantity).kind
            if (kind == "event") != e.is_event:
                raise InputError(
                    f"expert {e.expert!r}: quantity {e.quantity!r} expects a {kind} judgement",
                    where,
                )

    def add_round(self, entries: Sequence[Entry]) -> RoundRecord:
        """Append a new round; earlier rounds are never rewritten."""
        if len(self.rounds) >= self.max_rounds:
            raise ValueError(f"study already has the maximum of {self.max_rounds} rounds")
        for e in entries:
            e.validate()
        self._check_entries(entries)
        index = len(self.rounds) + 1
        target = self.path / f"round-{index}.csv"
        if target.exists():
            raise FileExistsError(f"{target} exists; rounds are append-only")
        filled = [
            e if e.is_event or e.p_low is not None
            else Entry(**{**asdict(e), "p_low": self.quantity(e.quantity).p_low})
            for e in entries
        ]
        atomic_write_text(target, write_round_csv(filled))
        record = RoundRecord(index, tuple(sorted(filled, key=lambda e: (e.quantity, e.expert))))
        self.rounds.append(record)
        return record

    def assign_groups(self, groups: dict[str, str]):
        unknown = set(groups) - set(self.experts)
        if unknown:
            raise ValueError(f"unknown experts {sorted(unknown)}")
        self.groups.update(groups)
        self.save_metadata()

    def missing(self, index: int) -> list[tuple[str, str]]:
        """(expert, quantity) pairs with no entry in the given round."""
        have = self.rounds[index - 1].keyed()
        return [(e, q.id) for e in self.experts for q in self.quantities if (e, q.id) not in have]

    def is_complete(self, index: int) -> bool:
        return 1 <= index <= len(self.rounds) and not self.missing(index)

    def pseudonym(self, expert: str) -> str:
        digest = hashlib.sha256(f"{self.salt}:{expert}".encode()).hexdigest()
        return f"expert-{digest[:10]}"


def anonymised_bundle(study: Study, round_index: int) -> str:
    """JSON document of one round's values and rationales under pseudonyms.

    Only pseudonyms, quantity ids, numbers and rationale text are included;
    expert ids, display names, groups and timestamps are left out.  The
    output is deterministic for a given study.
    """
    if not 1 <= round_index <= len(study.rounds):
        raise ValueError(f"round {round_index} does not exist")
    missing = study.missing(round_index)
    if missing:
        experts = sorted({e for e, _ in missing})
        raise ValueError(f"round {round_index} is incomplete; missing: {', '.join(experts)}")
    rows = []
    for e in study.rounds[round_index - 1].entries:
        row = {"expert": study.pseudonym(e.expert), "quantity": e.quantity}
        if e.is_event:
            row["probability"] = e.probability
        else:
            row.update(p_low=e.p_low, plausible_low=e.plausible_low, low=e.low,
                       median=e.median, high=e.high, plausible_high=e.plausible_high)
        row["rationale"] = e.rationale
        rows.append(row)
    rows.sort(key=lambda r: (r["quantity"], r["expert"]))
    doc = {"study": study.name, "round": round_index, "entries": rows}
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    reason: str = ""

    def __str__(self) -> str:
        return f"stop: {self.reason}" if self.stop else "continue"


def _same(a: tuple, b: tuple, rtol: float) -> bool:
    for x, y in zip(a, b):
        if x is None or y is None:
            if x is not y:
                return False
        elif rtol == 0.0:
            if x != y:
                return False
        elif not math.isclose(x, y, rel_tol=rtol, abs_tol=0.0):
            return False
    return True


def stopping_check(study: Study) -> StopDecision:
    """Stop when nobody changed anything since the previous round, or when
    the round budget is spent."""
    if not study.rounds or not study.is_complete(len(study.rounds)):
        raise ValueError("need at least one complete round")
    if len(study.rounds) >= 2:
        last, prev = study.rounds[-1].keyed(), study.rounds[-2].keyed()
        if last.keys() == prev.keys() and all(
            _same(last[k].values(), prev[k].values(), study.change_rtol) for k in last
        ):
            return StopDecision(True, "no-change")
    if len(study.rounds) >= study.max_rounds:
        return StopDecision(True, "max-rounds")
    return StopDecision(False)


def final_panel(study: Study, force: bool = False) -> dict[str, list]:
    """Final-round judgements with group labels, one panel per quantity."""
    decision = stopping_check(study)
    if not (decision.stop or force):
        raise ValueError("the study has not met a stopping criterion; refusing to finalize")
    unassigned = [e for e in study.experts if not study.groups.get(e)]
    if unassigned:
        raise ValueError(f"no group assigned for expert(s): {', '.join(unassigned)}")
    last = study.rounds[-1]
    panels: dict[str, list] = {q.id: [] for q in study.quantities}
    for e in sorted(last.entries, key=lambda e: (e.quantity, e.expert)):
        group = study.groups[e.expert]
        if e.is_event:
            panels[e.quantity].append(
                EventJudgement(e.expert, group, e.probability, e.quantity, last.index))
        else:
            p_low = e.p_low if e.p_low is not None else study.quantity(e.quantity).p_low
            panels[e.quantity].append(QuantileJudgement(
                e.expert, group, QuantileTriplet(e.low, e.median, e.high, p_low),
                e.plausible_low, e.plausible_high, e.quantity, last.index))
    return panels
