"""Deterministic SVG plots of relay tests, step responses and disturbances."""

from __future__ import annotations

import numpy as np

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

matplotlib.rcParams["svg.hashsalt"] = "servotune"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def _load_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1)
    except ValueError as ex:
        raise ValueError(f"malformed CSV {path}: {ex}") from ex
    if data.ndim == 1:
        data = data[None, :]
    if data.shape[1] != len(header):
        raise ValueError(f"malformed CSV {path}: line 1 declares "
                         f"{len(header)} columns, data has {data.shape[1]}")
    return header, data


def plot_relay(csv_path, out_path) -> None:
    """Relay test plot with the switch-inhibition windows shaded."""
    header, data = _load_csv(csv_path)
    cols = {name: data[:, i] for i, name in enumerate(header)}
    t = cols["t"]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8, 5))
    ax1.plot(t, cols["e"], lw=0.9, label="error")
    if "b1" in cols and np.any(cols["b1"] != 0.0):
        ax1.plot(t, cols["b1"], "k--", lw=0.6, label="b1")
    if "b2" in cols and np.any(cols["b2"] != 0.0):
        ax1.plot(t, -cols["b2"], "k:", lw=0.6, label="-b2")
    if "inhibited" in cols:
        inh = cols["inhibited"] > 0.5
        ax1.fill_between(t, *ax1.get_ylim(), where=inh, color="0.8", alpha=0.6,
                         label="switch inhibited")
    ax1.set_ylabel("error")
    ax1.legend(loc="upper right", fontsize=7)
    ax2.step(t, cols["u"], where="post", lw=0.9)
    ax2.set_ylabel("relay output")
    ax2.set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)


def plot_step(csv_path, out_path) -> None:
    """Closed-loop step response from a traces CSV."""
    header, data = _load_csv(csv_path)
    cols = {name: data[:, i] for i, name in enumerate(header)}
    t = cols["t"]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8, 5))
    for name, style in (("reference", "k--"), ("output", "-"), ("truth", "-"),
                        ("estimate", ":")):
        if name in cols and np.any(cols[name] != 0.0):
            ax1.plot(t, cols[name], style, lw=0.9, label=name)
    ax1.set_ylabel("position")
    ax1.legend(loc="lower right", fontsize=7)
    ax2.plot(t, cols["control"], lw=0.9)
    ax2.set_ylabel("control")
    ax2.set_xlabel("t [s]")
    if "schedule" in cols:
        sw = np.nonzero(np.diff(cols["schedule"]) != 0)[0]
        for i in sw:
            ax1.axvline(t[i], color="0.4", ls="--", lw=0.8)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
