"""Serializable event descriptions evaluated on configurations."""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import colorfield, events
from ..clusters import label, label_closed
from ..events import AnnulusSpec, PartitionSpec
from ..lattice import GeometryError, LatticeRegion, embed
from ..sampling import Configuration

KINDS = (
    "always",
    "never",
    "site_open",
    "connection",
    "partition",
    "correlation",
    "one_arm",
    "annulus_crossing",
    "open_circuit",
    "closed_crossing",
    "four_arm",
    "four_arm_closed",
    "disjoint_connections",
)


def _ann(p):
    return AnnulusSpec(tuple(p.get("center", (0.0, 0.0))), float(p["r"]), float(p["R"]))


@dataclass(frozen=True)
class EventSpec:
    """``kind`` plus a parameter dict; see ``KINDS``.

    Parameters: ``points`` (site list) for connection/correlation/partition
    (with ``blocks``); ``x`` and ``r`` for one_arm and site_open;
    ``center``, ``r``, ``R`` for annulus events; ``pairs`` and ``holes`` for
    disjoint_connections.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, d)

    def to_dict(self):
        return {"kind": self.kind, **self.params}

    def __hash__(self):
        return hash((self.kind, repr(sorted(self.params.items()))))

    def check(self, region: LatticeRegion):
        """Raise ``GeometryError``/``ValueError`` when the event does not fit ``region``."""
        p = self.params
        k = self.kind
        if k in ("connection", "correlation", "partition"):
            pts = p["points"]
            for s in pts:
                region.index_of(s)
            if k == "partition":
                PartitionSpec(pts, p["blocks"])
            if k == "connection" and len(pts) < 2:
                raise ValueError("connection needs two points")
        elif k == "site_open":
            region.index_of(p["x"])
        elif k == "one_arm":
            region.require_disk(embed(p["x"], region), float(p["r"]), "one_arm")
        elif k in ("annulus_crossing", "open_circuit", "closed_crossing", "four_arm", "four_arm_closed"):
            a = _ann(p)
            a.check(region)
            if k in ("open_circuit", "closed_crossing") and not events.annulus_sets(region, a)["hole"].any():
                raise GeometryError("inner radius must contain at least one whole hexagon")
        elif k == "disjoint_connections":
            events._hole_masks(region, p["holes"])

    def evaluate(self, config: Configuration) -> bool:
        p = self.params
        k = self.kind
        if k == "always":
            return True
        if k == "never":
            return False
        reg = config.region
        if k == "site_open":
            return bool(config.open[reg.index_of(p["x"])])
        if k in ("open_circuit", "closed_crossing"):
            v = events.closed_crossing_in_annulus(config, _ann(p))
            return (not v) if k == "open_circuit" else v
        if k == "disjoint_connections":
            return events.disjoint_connections(config, p["pairs"], p["holes"])
        if k == "four_arm_closed":
            return events.four_arm_closed(label_closed(config), _ann(p))
        lab = label(config)
        if k == "connection":
            return events.connection_event(lab, p["points"])
        if k == "partition":
            return events.partition_event(lab, PartitionSpec(p["points"], p["blocks"]))
        if k == "correlation":
            return bool(colorfield.correlation_partition(lab, p["points"]))
        if k == "one_arm":
            return events.one_arm(lab, p["x"], float(p["r"]), p.get("convention", "hexagon"))
        if k == "annulus_crossing":
            return events.annulus_crossing(lab, _ann(p))
        if k == "four_arm":
            return events.four_arm(lab, None, _ann(p))
        raise AssertionError(k)

    __call__ = evaluate
