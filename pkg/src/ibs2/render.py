"""PNG heatmaps of truth and reconstruction panels."""

from __future__ import annotations

from io import BytesIO

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def render_panels(rows, path, labels=None, title=None):
    """Draw rows of 2-D arrays with one symmetric color scale per row.

    ``rows`` is a list of lists of arrays; ``labels`` mirrors its shape.
    Inputs are only read, never modified.
    """
    nr = len(rows)
    nc = max(len(r) for r in rows)
    fig, axes = plt.subplots(nr, nc, figsize=(2.6 * nc, 2.4 * nr), squeeze=False)
    for i, row in enumerate(rows):
        vmax = max(float(np.max(np.abs(np.real(a)))) for a in row) or 1.0
        for j in range(nc):
            ax = axes[i][j]
            ax.set_xticks([])
            ax.set_yticks([])
            if j >= len(row):
                ax.axis("off")
                continue
            im = ax.imshow(np.real(row[j]).T, origin="lower", extent=(-1, 1, -1, 1),
                           cmap="RdBu_r", vmin=-vmax, vmax=vmax)
            if labels is not None:
                ax.set_title(labels[i][j], fontsize=9)
        fig.colorbar(im, ax=list(axes[i]), shrink=0.8)
    if title:
        fig.suptitle(title)
    buf = BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    from .io import _atomic_write

    _atomic_write(path, buf.getvalue())


def default_labels(n_cols: int, prefix_rows=("γ", "η")):
    return [[f"{p}_{j + 1}" for j in range(n_cols)] for p in prefix_rows]
