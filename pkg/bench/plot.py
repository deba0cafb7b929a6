"""Top-down SVG drawings of episode traces."""

import io
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Circle

from core.schemas import Scenario, TraceRecord
from core.track import Track

PATH_GID = "vehicle-path"

_RC = {
    "path.simplify": False,
    "svg.fonttype": "none",
    "svg.hashsalt": "planner-bench",
}


def plot_trace(
    trace: list[TraceRecord],
    scenario: Scenario,
    out_path: str | Path | None = None,
    plan_every: int = 10,
) -> str:
    """
    Draw the road, the obstacles, the driven path and the local plans.

    The centre line is red and the outer lines black; every ``plan_every``-th
    local plan is overlaid in purple. The driven path has one vertex per
    trace record and carries the SVG id ``vehicle-path``.

    Args:
        trace: Non-empty episode trace.
        scenario: Scenario the trace was recorded on.
        out_path: Optional destination file.
        plan_every: Tick stride of the local-plan overlays.

    Returns:
        The standalone SVG document.

    Raises:
        ValueError: If the trace is empty.
    """
    if not trace:
        raise ValueError("cannot plot an empty trace")
    track = Track(scenario.track)
    s = np.linspace(0.0, track.length, 1000)
    width = scenario.track.lane_width

    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(10, 6))
        centre = track.point_at(s)
        ax.plot(centre[:, 0], centre[:, 1], color="red", lw=1.5, label="centre line")
        for side in (-1.0, 1.0):
            outer = track.point_at(s, side * width)
            ax.plot(outer[:, 0], outer[:, 1], color="black", lw=1.0)

        for circle in track.resolve_obstacles(scenario.obstacles):
            ax.add_patch(
                Circle((circle.x, circle.y), circle.radius, color="0.35", zorder=3)
            )

        for record in trace[::plan_every]:
            if len(record.local_plan) > 1:
                plan = np.asarray(record.local_plan)
                ax.plot(plan[:, 0], plan[:, 1], color="purple", lw=0.6, alpha=0.6)

        path = np.array([[r.pose.x, r.pose.y] for r in trace])
        ax.plot(
            path[:, 0],
            path[:, 1],
            color="tab:blue",
            lw=1.2,
            gid=PATH_GID,
            label="vehicle path",
        )

        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_title(f"{scenario.name} / {scenario.planner}")
        ax.legend(loc="upper left")
        fig.tight_layout()

        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        plt.close(fig)

    svg = buffer.getvalue()
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(svg, encoding="utf-8")
    return svg
