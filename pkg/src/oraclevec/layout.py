"""Layout annotations: concept, key components with normalized boxes, relations.

JSON form::

    {"id": "...", "concept": "...",
     "components": [{"label": "...", "box": [x_tl, y_tl, x_br, y_br]}],
     "relations": [["label_a", "label_b", "relation"], ...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError


@dataclass(frozen=True)
class Component:
    label: str
    box: tuple[float, float, float, float]


@dataclass(frozen=True)
class LayoutAnnotation:
    id: str
    concept: str
    components: tuple[Component, ...]
    relations: tuple[tuple[str, str, str], ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "relations", tuple(tuple(r) for r in self.relations))
        for c in self.components:
            if not c.label:
                raise ParseError("component label must be non-empty")
            x0, y0, x1, y1 = c.box
            if min(c.box) < 0.0 or max(c.box) > 1.0:
                raise ParseError(f"component {c.label!r}: box {list(c.box)} must be normalized to [0, 1]")
            if not (x0 < x1 and y0 < y1):
                raise ParseError(f"component {c.label!r}: box {list(c.box)} needs x_tl < x_br and y_tl < y_br")
        labels = {c.label for c in self.components}
        for a, b, _r in self.relations:
            for end in (a, b):
                if end not in labels:
                    raise ParseError(f"relation endpoint {end!r} is not a component label")
        if _has_cycle(self.relations):
            raise ParseError("relations form a directed cycle")

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.components]

    def box(self, label: str) -> tuple[float, float, float, float]:
        for c in self.components:
            if c.label == label:
                return c.box
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "concept": self.concept,
            "components": [{"label": c.label, "box": list(c.box)} for c in self.components],
            "relations": [list(r) for r in self.relations],
        }


def _has_cycle(relations) -> bool:
    graph: dict[str, list[str]] = {}
    for a, b, _ in relations:
        graph.setdefault(a, []).append(b)
    state: dict[str, int] = {}

    def visit(n: str) -> bool:
        state[n] = 1
        for m in graph.get(n, ()):
            s = state.get(m, 0)
            if s == 1 or (s == 0 and visit(m)):
                return True
        state[n] = 2
        return False

    return any(state.get(n, 0) == 0 and visit(n) for n in list(graph))


def layout_from_dict(data: dict, where: str = "layout") -> LayoutAnnotation:
    if not isinstance(data, dict):
        raise ParseError(f"{where}: expected a JSON object")
    try:
        comps = []
        for k, c in enumerate(data["components"]):
            box = c["box"]
            if not isinstance(box, (list, tuple)) or len(box) != 4:
                raise ParseError(f"{where}: components[{k}].box must have 4 numbers")
            comps.append(Component(str(c["label"]), tuple(float(v) for v in box)))
        rels = []
        for k, r in enumerate(data.get("relations") or []):
            if not isinstance(r, (list, tuple)) or len(r) != 3:
                raise ParseError(f"{where}: relations[{k}] must be [label_a, label_b, relation]")
            rels.append((str(r[0]), str(r[1]), str(r[2])))
    except KeyError as exc:
        raise ParseError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from None
    try:
        return LayoutAnnotation(str(data.get("id", "")), str(data.get("concept", "")), tuple(comps), tuple(rels))
    except ParseError as exc:
        raise ParseError(f"{where}: {exc}") from None


def load_layout(path: str | Path) -> LayoutAnnotation:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return layout_from_dict(data, str(path))
