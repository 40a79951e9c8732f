"""Landmark scheme: named contour groups with open/closed topology.

The scheme fixes landmark order and tells profile extraction which
neighbors define each landmark's contour tangent.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ShapeArityError


@dataclass(frozen=True)
class ContourGroup:
    name: str
    count: int
    closed: bool

    def __post_init__(self):
        if self.count < 2:
            raise ShapeArityError(f"group {self.name!r} needs at least 2 points, got {self.count}")


@dataclass(frozen=True, eq=False)
class LandmarkScheme:
    groups: tuple

    def __post_init__(self):
        groups = tuple(self.groups)
        if not groups:
            raise ShapeArityError("scheme needs at least one contour group")
        object.__setattr__(self, "groups", groups)
        starts = []
        pos = 0
        for g in groups:
            starts.append(pos)
            pos += g.count
        object.__setattr__(self, "_starts", tuple(starts))
        object.__setattr__(self, "_total", pos)

    @property
    def total(self) -> int:
        return self._total

    def group_of(self, index: int):
        """(group, start offset) owning the global landmark index."""
        if not 0 <= index < self._total:
            raise ShapeArityError(f"landmark index {index} outside scheme of {self._total}")
        for g, start in zip(self.groups, self._starts):
            if index < start + g.count:
                return g, start
        raise AssertionError("unreachable")

    def neighbors(self, index: int):
        """Global indices (prev, next) along the landmark's contour.

        Open-contour endpoints get None on the missing side; closed
        contours wrap around.
        """
        g, start = self.group_of(index)
        local = index - start
        prev = local - 1
        nxt = local + 1
        if g.closed:
            prev %= g.count
            nxt %= g.count
            return start + prev, start + nxt
        return (start + prev if prev >= 0 else None,
                start + nxt if nxt < g.count else None)

    def group_slices(self):
        """(name, slice) per group, in scheme order."""
        return [(g.name, slice(s, s + g.count)) for g, s in zip(self.groups, self._starts)]

    def to_jsonable(self):
        return [[g.name, g.count, "closed" if g.closed else "open"] for g in self.groups]

    @classmethod
    def from_jsonable(cls, spec_list) -> "LandmarkScheme":
        groups = []
        for entry in spec_list:
            name, count, topo = entry
            if topo not in ("open", "closed"):
                raise ShapeArityError(f"group topology must be open or closed, got {topo!r}")
            groups.append(ContourGroup(str(name), int(count), topo == "closed"))
        return cls(tuple(groups))


DEFAULT_SCHEME = LandmarkScheme((
    ContourGroup("face_boundary", 15, False),
    ContourGroup("right_eyebrow", 8, True),
    ContourGroup("left_eyebrow", 8, True),
    ContourGroup("left_eye", 8, True),
    ContourGroup("right_eye", 8, True),
    ContourGroup("nose", 9, False),
    ContourGroup("mouth", 12, True),
))


def single_contour_scheme(n: int, closed: bool = True) -> LandmarkScheme:
    """Fallback scheme treating all n landmarks as one contour."""
    return LandmarkScheme((ContourGroup("all", n, closed),))
