import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadgest.bvh import (BVHError, FrameCountError, FrameTimeError, FrameTokenCountError, FrameValueError,
                          HierarchyError, JointDef, MotionClip, SkeletonDef, frame_rate, parse_bvh,
                          parse_hierarchy, serialize_bvh)

MINIMAL = """HIERARCHY
ROOT Hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Chest
  {
    OFFSET 0 10 0
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 0 5 0
    }
  }
}
MOTION
Frames: 2
Frame Time: 0.033333
1 2 3 4 5 6 7 8 9
9 8 7 6 5 4 3 2 1
"""


def test_parse_minimal():
    skel, clip = parse_bvh(MINIMAL)
    assert skel.total_channels == 9
    assert [j.name for j in skel.joints] == ["Hips", "Chest", "Chest_End"]
    assert skel.joints[2].is_end_site and skel.joints[2].channels == ()
    assert clip.frames.shape == (2, 9)
    assert clip.frame_time == 0.033333
    np.testing.assert_array_equal(clip.frames[0], np.arange(1, 10))


def test_whitespace_insensitive():
    messy = MINIMAL.replace("  ", "\t\t ").replace("\n", "\n\n")
    a, b = parse_bvh(MINIMAL), parse_bvh(messy)
    assert a[0] == b[0]
    np.testing.assert_array_equal(a[1].frames, b[1].frames)


def test_short_frame_line_names_line():
    text = MINIMAL.replace("9 8 7 6 5 4 3 2 1", "9 8 7 6 5 4 3 2")
    with pytest.raises(FrameTokenCountError, match="line 20"):
        parse_bvh(text)


@pytest.mark.parametrize("mutate, err", [
    (lambda s: s.replace("1 2 3 4", "1 x 3 4"), FrameValueError),
    (lambda s: s.replace("0.033333", "0"), FrameTimeError),
    (lambda s: s.replace("0.033333", "-1"), FrameTimeError),
    (lambda s: s.replace("Frames: 2", "Frames: 3"), FrameCountError),
    (lambda s: s.replace("    CHANNELS 3 Zrotation Xrotation Yrotation\n", ""), HierarchyError),
    (lambda s: s.replace("    }\n  }\n}", "    }\n  }\n"), HierarchyError),
    (lambda s: s.replace("}\nMOTION", "}\n}\nMOTION"), HierarchyError),
    (lambda s: s.replace("CHANNELS 3 Zrotation Xrotation Yrotation", "CHANNELS 3 Zrotation Zrotation Yrotation"),
     HierarchyError),
])
def test_parse_errors_are_distinct(mutate, err):
    with pytest.raises(err) as info:
        parse_bvh(mutate(MINIMAL))
    assert info.value.line is not None


def test_serialize_zero_frame():
    skel, _ = parse_bvh(MINIMAL)
    text = serialize_bvh(skel, MotionClip(np.zeros((1, 9)), 1 / 30))
    motion_line = text.strip().splitlines()[-1]
    assert motion_line.split() == ["0.000000"] * 9
    assert "    OFFSET" in text  # canonical 4-space indentation


def test_serialize_rejects_wrong_width():
    skel, _ = parse_bvh(MINIMAL)
    with pytest.raises(BVHError):
        serialize_bvh(skel, MotionClip(np.zeros((1, 10)), 1 / 30))


def test_frame_time_round_trip():
    skel, clip = parse_bvh(MINIMAL)
    _, clip2 = parse_bvh(serialize_bvh(skel, clip))
    assert abs(clip2.frame_time - clip.frame_time) < 1e-9


@pytest.mark.parametrize("ft, fps", [(0.033333, 1 / 0.033333), (0.05, 20.0), (1.0, 1.0)])
def test_frame_rate(ft, fps):
    assert frame_rate(MotionClip(np.zeros((1, 1)), ft)) == pytest.approx(fps, rel=1e-6)


def test_parse_hierarchy_only():
    skel = parse_hierarchy(MINIMAL.split("MOTION")[0])
    assert skel == parse_bvh(MINIMAL)[0]


def test_skeleton_invariants():
    with pytest.raises(BVHError):
        SkeletonDef((JointDef("a", None, (0, 0, 0), ("Xrotation",)), JointDef("b", None, (0, 0, 0))))
    with pytest.raises(BVHError):
        SkeletonDef((JointDef("a", None, (0, 0, 0), ("Xrotation",)), JointDef("e", 0, (0, 0, 0), ("Xrotation",), True)))


# --- random skeletons -------------------------------------------------------

KINDS = ["Xposition", "Yposition", "Zposition", "Xrotation", "Yrotation", "Zrotation"]
finite = st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False)


@st.composite
def skeletons_and_clips(draw):
    n_joints = draw(st.integers(1, 6))
    joints = []
    stack = []
    for i in range(n_joints):
        # depth-first: parent is some joint on the current root-to-leaf path
        parent = None if i == 0 else stack[draw(st.integers(0, len(stack) - 1))]
        if parent is not None:
            stack = stack[:stack.index(parent) + 1]
        chans = tuple(draw(st.permutations(KINDS))[:draw(st.integers(1 if i == 0 else 0, 6))])
        joints.append(JointDef(f"j{i}", parent, tuple(draw(finite) for _ in range(3)), chans))
        stack.append(i)
    # attach end sites to some leaves
    has_child = {j.parent_index for j in joints}
    out, remap = [], {}
    for i, j in enumerate(joints):
        remap[i] = len(out)
        out.append(JointDef(j.name, None if j.parent_index is None else remap[j.parent_index], j.offset, j.channels))
        if i not in has_child and draw(st.booleans()):
            out.append(JointDef(f"{j.name}_End", remap[i], tuple(draw(finite) for _ in range(3)), (), True))
    skel = SkeletonDef(tuple(out))
    n = draw(st.integers(1, 4))
    frames = np.array([[draw(finite) for _ in range(skel.total_channels)] for _ in range(n)]).reshape(
        n, skel.total_channels)
    ft = draw(st.floats(1e-3, 1.0))
    return skel, MotionClip(frames, ft)


def _depth_first(skel):
    # re-serialising must keep order; only skeletons already in DFS order are valid inputs
    from dyadgest.bvh import _depth_first_order
    return _depth_first_order(skel) == list(range(len(skel.joints)))


@settings(max_examples=200, deadline=None)
@given(skeletons_and_clips())
def test_round_trip_property(case):
    skel, clip = case
    if not _depth_first(skel) or skel.total_channels == 0:
        return
    skel2, clip2 = parse_bvh(serialize_bvh(skel, clip))
    assert [j.name for j in skel2.joints] == [j.name for j in skel.joints]
    assert [j.channels for j in skel2.joints] == [j.channels for j in skel.joints]
    assert [j.parent_index for j in skel2.joints] == [j.parent_index for j in skel.joints]
    np.testing.assert_allclose([j.offset for j in skel2.joints], [j.offset for j in skel.joints], atol=1e-5, rtol=0)
    np.testing.assert_allclose(clip2.frames, clip.frames, atol=1e-5, rtol=0)
    assert abs(clip2.frame_time - clip.frame_time) < 1e-9
