"""BVH (Biovision Hierarchy) reading and writing.

Rotations stay in degrees exactly as stored. End sites are kept in the
hierarchy so the file can be written back, but carry no channels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

CHANNEL_KINDS = ("Xposition", "Yposition", "Zposition", "Xrotation", "Yrotation", "Zrotation")


class BVHError(ValueError):
    """Base class for BVH problems."""


class BVHParseError(BVHError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class HierarchyError(BVHParseError):
    """Malformed HIERARCHY block (braces, keywords, CHANNELS)."""


class FrameTokenCountError(BVHParseError):
    """A motion row does not have total_channels values."""


class FrameValueError(BVHParseError):
    """A motion row contains a non-numeric or non-finite token."""


class FrameTimeError(BVHParseError):
    """Missing or non-positive Frame Time."""


class FrameCountError(BVHParseError):
    """Number of motion rows disagrees with the Frames: header."""


@dataclass(frozen=True)
class JointDef:
    name: str
    parent_index: Optional[int]
    offset: tuple[float, float, float]
    channels: tuple[str, ...] = ()
    is_end_site: bool = False


@dataclass(frozen=True)
class SkeletonDef:
    joints: tuple[JointDef, ...]

    def __post_init__(self):
        validate_skeleton(self)

    @property
    def total_channels(self) -> int:
        return sum(len(j.channels) for j in self.joints)

    def channel_names(self) -> list[str]:
        return [f"{j.name}.{c}" for j in self.joints for c in j.channels]


@dataclass
class MotionClip:
    frames: np.ndarray
    frame_time: float

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=np.float64))
        if self.frames.shape[0] < 1:
            raise BVHError("a motion clip needs at least one frame")
        if not self.frame_time > 0:
            raise BVHError(f"frame_time must be positive, got {self.frame_time}")
        if not np.all(np.isfinite(self.frames)):
            raise BVHError("motion clip contains non-finite values")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def validate_skeleton(skel: SkeletonDef) -> None:
    roots = [j for j in skel.joints if j.parent_index is None]
    if len(roots) != 1 or skel.joints[0].parent_index is not None:
        raise BVHError("skeleton must have exactly one root, listed first")
    for i, j in enumerate(skel.joints):
        if j.parent_index is not None and not 0 <= j.parent_index < i:
            raise BVHError(f"joint {j.name!r} has parent {j.parent_index} not earlier in the list")
        if j.is_end_site and j.channels:
            raise BVHError(f"end site {j.name!r} cannot have channels")
        if len(set(j.channels)) != len(j.channels):
            raise BVHError(f"joint {j.name!r} repeats a channel")
        for c in j.channels:
            if c not in CHANNEL_KINDS:
                raise BVHError(f"joint {j.name!r} has unknown channel {c!r}")
        if not all(np.isfinite(j.offset)):
            raise BVHError(f"joint {j.name!r} has a non-finite offset")


def frame_rate(clip: MotionClip) -> float:
    return 1.0 / clip.frame_time


class _Lines:
    """Cursor over non-blank lines that remembers 1-based line numbers."""

    def __init__(self, text: str):
        self.items = [(n + 1, ln.split()) for n, ln in enumerate(text.splitlines()) if ln.strip()]
        self.pos = 0

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else (None, None)

    def next(self):
        item = self.peek()
        if item[0] is None:
            last = self.items[-1][0] if self.items else 0
            raise HierarchyError("unexpected end of file", last)
        self.pos += 1
        return item


def _parse_floats(tokens, lineno, err=HierarchyError):
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise err(f"non-numeric value in {' '.join(tokens)!r}", lineno) from None
    if not all(np.isfinite(vals)):
        raise err("non-finite value", lineno)
    return vals


def _parse_joint(lines: _Lines, joints: list, parent: Optional[int], name: str, header_line: int):
    lineno, toks = lines.next()
    if toks != ["{"]:
        raise HierarchyError(f"expected '{{' after joint {name!r}", lineno)
    lineno, toks = lines.next()
    if toks[0] != "OFFSET" or len(toks) != 4:
        raise HierarchyError("expected OFFSET x y z", lineno)
    offset = tuple(_parse_floats(toks[1:], lineno))
    lineno, toks = lines.next()
    if toks[0] != "CHANNELS":
        raise HierarchyError(f"missing CHANNELS for joint {name!r}", lineno)
    try:
        n = int(toks[1])
    except (IndexError, ValueError):
        raise HierarchyError("CHANNELS count is not an integer", lineno) from None
    channels = tuple(toks[2:])
    if len(channels) != n:
        raise HierarchyError(f"CHANNELS declares {n} but lists {len(channels)}", lineno)
    if len(set(channels)) != n or any(c not in CHANNEL_KINDS for c in channels):
        raise HierarchyError(f"invalid channel list {' '.join(channels)}", lineno)
    index = len(joints)
    joints.append(JointDef(name, parent, offset, channels, False))

    while True:
        lineno, toks = lines.next()
        head = toks[0]
        if head == "}":
            return
        if head == "JOINT":
            if len(toks) != 2:
                raise HierarchyError("JOINT needs exactly one name", lineno)
            _parse_joint(lines, joints, index, toks[1], lineno)
        elif head == "End" and toks[1:] == ["Site"]:
            _parse_end_site(lines, joints, index, name)
        else:
            raise HierarchyError(f"unexpected token {head!r} in joint {name!r}", lineno)


def _parse_end_site(lines: _Lines, joints: list, parent: int, parent_name: str):
    lineno, toks = lines.next()
    if toks != ["{"]:
        raise HierarchyError("expected '{' after End Site", lineno)
    lineno, toks = lines.next()
    if toks[0] != "OFFSET" or len(toks) != 4:
        raise HierarchyError("expected OFFSET x y z in End Site", lineno)
    offset = tuple(_parse_floats(toks[1:], lineno))
    lineno, toks = lines.next()
    if toks != ["}"]:
        raise HierarchyError("expected '}' closing End Site", lineno)
    joints.append(JointDef(f"{parent_name}_End", parent, offset, (), True))


def _parse_hierarchy(lines: _Lines) -> SkeletonDef:
    lineno, toks = lines.next()
    if toks != ["HIERARCHY"]:
        raise HierarchyError("document must start with HIERARCHY", lineno)
    lineno, toks = lines.next()
    if toks[0] != "ROOT" or len(toks) != 2:
        raise HierarchyError("expected ROOT <name>", lineno)
    joints: list[JointDef] = []
    _parse_joint(lines, joints, None, toks[1], lineno)
    try:
        return SkeletonDef(tuple(joints))
    except BVHError as e:
        raise HierarchyError(str(e), lineno) from None


def parse_hierarchy(text: str) -> SkeletonDef:
    """Parse only the HIERARCHY block; anything after it must be a MOTION block or nothing."""
    lines = _Lines(text)
    skeleton = _parse_hierarchy(lines)
    lineno, toks = lines.peek()
    if lineno is not None and toks != ["MOTION"]:
        raise HierarchyError("unexpected content after the hierarchy", lineno)
    return skeleton


def parse_bvh(text: str) -> tuple[SkeletonDef, MotionClip]:
    lines = _Lines(text)
    skeleton = _parse_hierarchy(lines)

    lineno, toks = lines.next()
    if toks == ["}"]:
        raise HierarchyError("unbalanced '}'", lineno)
    if toks != ["MOTION"]:
        raise HierarchyError("expected MOTION after the hierarchy", lineno)
    lineno, toks = lines.next()
    if toks[:1] != ["Frames:"] or len(toks) != 2:
        raise FrameCountError("expected 'Frames: <n>'", lineno)
    try:
        n_frames = int(toks[1])
    except ValueError:
        raise FrameCountError(f"bad frame count {toks[1]!r}", lineno) from None
    lineno, toks = lines.next()
    if toks[:2] != ["Frame", "Time:"] or len(toks) != 3:
        raise FrameTimeError("expected 'Frame Time: <seconds>'", lineno)
    frame_time = _parse_floats(toks[2:], lineno, FrameTimeError)[0]
    if frame_time <= 0:
        raise FrameTimeError(f"Frame Time must be positive, got {frame_time}", lineno)

    width = skeleton.total_channels
    rows = []
    while lines.peek()[0] is not None:
        lineno, toks = lines.next()
        if len(toks) != width:
            raise FrameTokenCountError(f"frame row has {len(toks)} values, expected {width}", lineno)
        rows.append(_parse_floats(toks, lineno, FrameValueError))
    if len(rows) != n_frames or n_frames < 1:
        raise FrameCountError(f"Frames: declares {n_frames} but {len(rows)} rows follow", lineno)
    frames = np.array(rows, dtype=np.float64).reshape(n_frames, width)
    return skeleton, MotionClip(frames, frame_time)


def _fmt(v: float) -> str:
    """Fixed-point text with at least six significant digits."""
    v = float(v)
    if v == 0:
        return "0.000000"
    digits = max(6, 5 - math.floor(math.log10(abs(v))))
    if digits > 20:
        return f"{v:.6e}"
    return f"{v:.{digits}f}"


def serialize_hierarchy(skeleton: SkeletonDef) -> str:
    children: dict[int, list[int]] = {i: [] for i in range(len(skeleton.joints))}
    for i, j in enumerate(skeleton.joints):
        if j.parent_index is not None:
            children[j.parent_index].append(i)
    out = ["HIERARCHY"]

    def emit(i: int, depth: int):
        j = skeleton.joints[i]
        pad = "    " * depth
        off = " ".join(_fmt(x) for x in j.offset)
        if j.is_end_site:
            out.extend([f"{pad}End Site", f"{pad}{{", f"{pad}    OFFSET {off}", f"{pad}}}"])
            return
        out.append(f"{pad}{'ROOT' if j.parent_index is None else 'JOINT'} {j.name}")
        out.append(f"{pad}{{")
        out.append(f"{pad}    OFFSET {off}")
        out.append(f"{pad}    CHANNELS {len(j.channels)} {' '.join(j.channels)}".rstrip())
        for c in children[i]:
            emit(c, depth + 1)
        out.append(f"{pad}}}")

    emit(0, 0)
    return "\n".join(out) + "\n"


def serialize_bvh(skeleton: SkeletonDef, clip: MotionClip) -> str:
    if clip.frames.shape[1] != skeleton.total_channels:
        raise BVHError(
            f"clip has {clip.frames.shape[1]} columns but skeleton has {skeleton.total_channels} channels")
    # the writer emits joints depth-first, so children must follow their parent contiguously
    order = _depth_first_order(skeleton)
    if order != list(range(len(skeleton.joints))):
        raise BVHError("joints are not stored in depth-first order")
    body = [serialize_hierarchy(skeleton), "MOTION\n", f"Frames: {clip.num_frames}\n",
            f"Frame Time: {clip.frame_time!r}\n"]
    body.extend(" ".join(_fmt(v) for v in row) + "\n" for row in clip.frames)
    return "".join(body)


def _depth_first_order(skeleton: SkeletonDef) -> list[int]:
    children: dict[int, list[int]] = {i: [] for i in range(len(skeleton.joints))}
    for i, j in enumerate(skeleton.joints):
        if j.parent_index is not None:
            children[j.parent_index].append(i)
    order: list[int] = []
    stack = [0]
    while stack:
        i = stack.pop()
        order.append(i)
        stack.extend(reversed(children[i]))
    return order


def read_bvh(path) -> tuple[SkeletonDef, MotionClip]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_bvh(f.read())


def write_bvh(path, skeleton: SkeletonDef, clip: MotionClip) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_bvh(skeleton, clip))
