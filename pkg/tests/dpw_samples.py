"""Shared .dpw inputs: the two documented examples and a document generator."""

import string

from hypothesis import strategies as st

from xformtree.dpw import DpwDocument, DpwObject

# The two documented examples, with their "<...>" placeholder lines removed.
SHELL_EXAMPLE = """\
shell {
    label "example_object"
    file "path/to/file.mesh"
}
"""

TRANS_EXAMPLE = """\
trans {
    label "Identity transformation"
    matrix [ 1.0 0.0 0.0 0.0
             0.0 1.0 0.0 0.0
             0.0 0.0 1.0 0.0
             0.0 0.0 0.0 1.0 ]
}
"""

finite = st.floats(allow_nan=False, allow_infinity=False)
idents = st.sampled_from(["note", "colour", "weights", "_x", "residual_rms", "method", "a1", "T"])
text = st.text(string.ascii_letters + string.digits + ' _-./#{}[]"\\\n\t', max_size=20)
values = st.one_of(text, finite, st.lists(finite, max_size=6).map(tuple))
matrices = st.lists(finite, min_size=16, max_size=16).map(tuple)


@st.composite
def dpw_objects(draw, depth=0):
    otype = draw(st.sampled_from(["shell", "volume", "trans", "group", "motion", "landmark_set", "x"]))
    props = []
    if draw(st.booleans()):
        props.append(("label", draw(text)))
    if otype == "trans":
        props.append(("matrix", draw(matrices)))
    elif otype in ("shell", "volume", "motion") and draw(st.booleans()):
        props.append(("file", draw(text)))
    props += draw(st.lists(st.tuples(idents, values), max_size=3))
    children = [] if depth >= 3 else draw(st.lists(dpw_objects(depth=depth + 1), max_size=3 - depth))
    return DpwObject(otype, props, children)


documents = st.lists(dpw_objects(), max_size=3).map(DpwDocument)
