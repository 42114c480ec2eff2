"""Static SVG output: branch diagram and orbit curves."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SEGMENT_STYLE = {
    "vertical": dict(color="tab:blue", label="vertical family"),
    "axial": dict(color="tab:orange", label="axial family"),
    "mirror": dict(color="tab:gray", linestyle="--", label="mirror side"),
}


def plot_diagram(archive, path: Path) -> Path:
    """Frequency against amplitude for every archived segment.

    The polygon is a black dot, the eight a green dot, the branch switch a red
    cross; Morse indices are written next to the points that carry one.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    recs = archive.records
    for seg, style in SEGMENT_STYLE.items():
        pts = [(r.omega, r.amplitude) for r in recs if r.segment == seg]
        if seg == "axial" and archive.branch_point is not None and pts:
            bp = archive.branch_point
            from .continuation import amplitude
            pts.insert(0, (float(bp.X_bif[-1]),
                           amplitude(bp.X_bif, archive.params, archive.config.amplitude_measure)))
        if pts:
            w, a = np.array(pts).T
            ax.plot(w, a, lw=1.2, **style)
    if recs:
        first = recs[0]
        ax.plot(first.omega, first.amplitude, "o", color="black", ms=7, label="polygon", zorder=5)
    if archive.branch_point is not None:
        from .continuation import amplitude
        bp = archive.branch_point
        ax.plot(bp.X_bif[-1], amplitude(bp.X_bif, archive.params, archive.config.amplitude_measure),
                "x", color="red", ms=9, mew=2, label="branch switch", zorder=6)
    eight = [r for r in recs if r.state_ref == archive.eight_key]
    if eight:
        ax.plot(eight[0].omega, eight[0].amplitude, "o", color="green", ms=7,
                label="figure eight", zorder=5)
    last = None
    for r in recs:
        if r.morse_index is not None and r.morse_index != last:
            ax.annotate(str(r.morse_index), (r.omega, r.amplitude), fontsize=7,
                        xytext=(3, 3), textcoords="offset points")
            last = r.morse_index
    ax.set_xlabel(r"$\omega$")
    ax.set_ylabel(f"amplitude ({archive.config.amplitude_measure})")
    if recs:
        ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_orbit(archive, key: str, path: Path, frame: str = "inertial",
               samples: int = 1024) -> Path:
    """All bodies' curves of one archived state, in 3D projection."""
    from .cli import export_samples

    p = archive.params
    rows = np.array(export_samples(archive.states[key], p, frame, samples))
    fig = plt.figure(figsize=(5.5, 5.5))
    ax = fig.add_subplot(projection="3d")
    for j in range(1, p.n + 1):
        pts = rows[rows[:, 1] == j][:, 2:]
        closed = np.vstack([pts, pts[:1]])
        ax.plot(*closed.T, lw=1.0)
        ax.plot(*pts[0], "o", ms=4, color="black")
    # equal scales, so flat curves stay flat
    centre = (rows[:, 2:].max(axis=0) + rows[:, 2:].min(axis=0)) / 2
    half = max(np.ptp(rows[:, 2:], axis=0).max() / 2, 1e-12)
    ax.set_xlim(centre[0] - half, centre[0] + half)
    ax.set_ylim(centre[1] - half, centre[1] + half)
    ax.set_zlim(centre[2] - half, centre[2] + half)
    ax.set_box_aspect((1, 1, 1))
    ax.set_title(f"n = {p.n}, step {key}, omega = {archive.states[key][-1]:.6f} ({frame})",
                 fontsize=9)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
