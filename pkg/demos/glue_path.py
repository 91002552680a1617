"""Trace a glue bead around a window edge, then around a shape of our own.

Nothing in the tracker, stream or bridge changes between the grasp and the
glue task. Only the plan differs: the edge template is placed on the
tracked window pose and offset along the surface normal.
"""
import tempfile
from pathlib import Path

from rapidgrasp import harness

r = harness.run_glue_demo()
print(f"bundled rectangle: {r.vertices} vertices, max deviation {r.max_deviation * 1e3:.2f} mm, "
      f"mean {r.mean_deviation * 1e3:.2f} mm over {r.duration:.1f} s")

triangle = """\
standoff 0.015
-0.06 0.0 -0.05
 0.06 0.0 -0.05
 0.00 0.0  0.06
-0.06 0.0 -0.05
"""
with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "triangle.txt"
    path.write_text(triangle)
    r = harness.run_glue_demo(path)
print(f"triangle:          {r.vertices} vertices, max deviation {r.max_deviation * 1e3:.2f} mm")
