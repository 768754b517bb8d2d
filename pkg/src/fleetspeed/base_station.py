"""The aggregation boundary: scalar gradient reports up, one scalar sum down.

This is the only place where anything derived from a cost function leaves a
vehicle. What crosses is a single float per vehicle per round (the slope of
its cost at its current recommendation), and what comes back is the fleet sum.
The message log records exactly those two record kinds, nothing else, and the
audit checks that shape after the fact.

Summation order is fixed (ascending vehicle id) so reruns are bit-identical;
floating-point addition does not commute with reordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import DuplicateReport, MissingReport, StaleRound

REPORT_KIND = "report"
BROADCAST_KIND = "broadcast"


@dataclass(frozen=True)
class GradientReport:
    round_index: int
    vehicle_id: int
    value: float  # f'_i at the vehicle's current recommended speed


@dataclass(frozen=True)
class AggregateBroadcast:
    round_index: int
    value: float  # sum of the round's report values
    fleet_size: int = 0

    @property
    def empty_fleet(self) -> bool:
        return self.fleet_size == 0


class MessageLog:
    """Append-only record of everything that crossed the boundary.

    Rounds are stored compactly (id and value arrays) but iterate as
    GradientReport / AggregateBroadcast records. The schema is closed: no
    other record kind can enter.
    """

    def __init__(self):
        self._rounds: list[tuple[int, np.ndarray, np.ndarray, AggregateBroadcast]] = []
        self._extras: list = []  # hand-crafted records, for audit exercises

    def append_round(
        self,
        round_index: int,
        vehicle_ids: np.ndarray,
        values: np.ndarray,
        broadcast: AggregateBroadcast,
    ) -> None:
        self._rounds.append(
            (round_index, np.array(vehicle_ids, dtype=np.int64), np.array(values, dtype=float), broadcast)
        )

    def append_record(self, record) -> None:
        """Append an arbitrary record object.

        The normal pipeline never calls this; it exists so audits can be run
        against adversarial or corrupted logs.
        """
        self._extras.append(record)

    def __len__(self) -> int:
        return sum(len(ids) + 1 for _, ids, _, _ in self._rounds) + len(self._extras)

    @property
    def round_count(self) -> int:
        return len(self._rounds)

    def records(self) -> Iterator[GradientReport | AggregateBroadcast]:
        for round_index, ids, values, broadcast in self._rounds:
            for vid, val in zip(ids.tolist(), values.tolist()):
                yield GradientReport(round_index, vid, val)
            yield broadcast
        yield from self._extras

    # -- serialization: one record per line, fields in fixed order ----------
    # kind, round, id-or-blank, value

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                if isinstance(rec, GradientReport):
                    fh.write(f"{REPORT_KIND},{rec.round_index},{rec.vehicle_id},{rec.value!r}\n")
                else:
                    fh.write(f"{BROADCAST_KIND},{rec.round_index},,{rec.value!r}\n")

    @staticmethod
    def load(path) -> "MessageLog":
        log = MessageLog()
        pending_ids: list[int] = []
        pending_vals: list[float] = []
        pending_round: int | None = None
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    kind, round_s, id_s, value_s = line.split(",")
                    if kind == REPORT_KIND:
                        r = int(round_s)
                        if pending_round is None:
                            pending_round = r
                        pending_ids.append(int(id_s))
                        pending_vals.append(float(value_s))
                        continue
                    if kind == BROADCAST_KIND:
                        r = int(round_s)
                        log.append_round(
                            r,
                            np.array(pending_ids, dtype=np.int64),
                            np.array(pending_vals, dtype=float),
                            AggregateBroadcast(r, float(value_s), fleet_size=len(pending_ids)),
                        )
                        pending_ids, pending_vals, pending_round = [], [], None
                        continue
                except ValueError:
                    pass
                # anything off-schema is kept verbatim so the audit can flag it
                log.append_record(line)
        return log


class BaseStation:
    """Single logical aggregator; one aggregation per round, then the round's
    per-vehicle values are discarded (retention check relies on this)."""

    def __init__(self, log: MessageLog | None = None, anonymous: bool = False):
        self.log = log
        self.anonymous = anonymous
        self.current_round: int | None = None
        self.last_broadcast: AggregateBroadcast | None = None

    def collect_and_aggregate(
        self,
        reports: list[GradientReport],
        round_index: int,
        expected_ids: list[int] | None = None,
    ) -> AggregateBroadcast:
        """Close a round from explicit report records.

        Raises StaleRound / DuplicateReport / MissingReport on contract
        violations; an empty fleet aggregates to 0.0 with the empty flag set.
        """
        ids: list[int] = []
        values: list[float] = []
        seen: set[int] = set()
        for rep in reports:
            if rep.round_index != round_index:
                raise StaleRound(
                    f"report from vehicle {rep.vehicle_id} carries round "
                    f"{rep.round_index}, aggregating round {round_index}"
                )
            if not self.anonymous:
                if rep.vehicle_id in seen:
                    raise DuplicateReport(f"vehicle {rep.vehicle_id} reported twice in round {round_index}")
                seen.add(rep.vehicle_id)
            if not math.isfinite(rep.value):
                raise ValueError(f"non-finite gradient report from vehicle {rep.vehicle_id}")
            ids.append(rep.vehicle_id)
            values.append(rep.value)
        if expected_ids is not None and not self.anonymous:
            silent = sorted(set(expected_ids) - seen)
            if silent:
                raise MissingReport(f"no report from active vehicles {silent} in round {round_index}")
        order = np.argsort(np.array(ids, dtype=np.int64), kind="stable")
        id_arr = np.array(ids, dtype=np.int64)[order]
        val_arr = np.array(values, dtype=float)[order]
        return self._close_round(round_index, id_arr, val_arr)

    def aggregate_array(
        self, round_index: int, vehicle_ids: np.ndarray, values: np.ndarray
    ) -> AggregateBroadcast:
        """Hot-path variant: ids already unique and ascending."""
        return self._close_round(round_index, vehicle_ids, values)

    def _close_round(
        self, round_index: int, id_arr: np.ndarray, val_arr: np.ndarray
    ) -> AggregateBroadcast:
        total = sequential_sum(val_arr)
        broadcast = AggregateBroadcast(round_index, total, fleet_size=len(val_arr))
        if self.log is not None:
            self.log.append_round(round_index, id_arr, val_arr, broadcast)
        # Per-vehicle values are not retained past this point.
        self.current_round = round_index
        self.last_broadcast = broadcast
        return broadcast

    def retained_state(self) -> dict:
        """Everything the station holds between rounds (for retention tests)."""
        return {"current_round": self.current_round, "last_broadcast": self.last_broadcast}


def sequential_sum(values: np.ndarray) -> float:
    """Left-to-right accumulation; the fixed summation order of the protocol."""
    if len(values) == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


# -- audit --------------------------------------------------------------------


@dataclass(frozen=True)
class AuditVerdict:
    passed: bool
    offending_indices: tuple[int, ...] = ()
    v2v_checked: bool = False
    detail: str = ""

    def __str__(self) -> str:
        head = "PASS" if self.passed else "FAIL"
        v2v = "v2v trace checked" if self.v2v_checked else "v2v trace not supplied"
        tail = f" at records {list(self.offending_indices)}" if self.offending_indices else ""
        return f"{head}{tail} ({v2v}){(': ' + self.detail) if self.detail else ''}"


def audit_privacy(
    log: MessageLog,
    v2v_broadcasts: "V2VTrace | None" = None,
    recommended_trace: dict[tuple[int, int], float] | None = None,
) -> AuditVerdict:
    """Check that nothing but the protocol's scalars crossed any boundary.

    (a) every record in `log` is one of the two closed-schema kinds with a
        single finite scalar payload;
    (b) when the vehicle-to-vehicle broadcast trace is supplied, each v2v
        payload is a single finite scalar equal to the sender's recommended
        speed that round;
    (c) no payload smuggles structure (tuples, arrays, strings) that could
        encode curve coefficients.

    An empty log passes vacuously. Failure lists offending record indices.
    """
    bad: list[int] = []
    detail = ""
    for idx, rec in enumerate(log.records()):
        if isinstance(rec, GradientReport):
            ok = _is_scalar(rec.value) and _is_id(rec.vehicle_id) and _is_id(rec.round_index)
        elif isinstance(rec, AggregateBroadcast):
            ok = _is_scalar(rec.value) and _is_id(rec.round_index)
        else:
            ok = False
        if not ok:
            bad.append(idx)
    if bad and not detail:
        detail = "non-scalar or malformed record payload"
    v2v_checked = False
    if v2v_broadcasts is not None:
        v2v_checked = True
        base = sum(1 for _ in log.records())
        for j in range(len(v2v_broadcasts.rounds)):
            value = v2v_broadcasts.values[j]
            if not _is_scalar(value):
                bad.append(base + j)
                detail = detail or "v2v payload is not a single scalar"
                continue
            if recommended_trace is not None:
                key = (int(v2v_broadcasts.rounds[j]), int(v2v_broadcasts.senders[j]))
                expected = recommended_trace.get(key)
                if expected is None or expected != value:
                    bad.append(base + j)
                    detail = detail or "v2v payload differs from the sender's recommended speed"
    return AuditVerdict(
        passed=not bad,
        offending_indices=tuple(bad),
        v2v_checked=v2v_checked,
        detail=detail,
    )


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_id(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


@dataclass
class V2VTrace:
    """One record per vehicle per round: the broadcast it sent to neighbours.

    Payloads live in `values`; anything that is not a plain finite float is
    kept in `values` as-is so the audit can flag it.
    """

    rounds: list = field(default_factory=list)
    senders: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def record_round(self, round_index: int, sender_ids: np.ndarray, speeds: np.ndarray) -> None:
        self.rounds.extend([round_index] * len(sender_ids))
        self.senders.extend(int(i) for i in sender_ids)
        self.values.extend(float(v) for v in speeds)

    def inject(self, round_index: int, sender: int, payload) -> None:
        """Append an arbitrary payload (mutation hook for audit tests)."""
        self.rounds.append(round_index)
        self.senders.append(sender)
        self.values.append(payload)
