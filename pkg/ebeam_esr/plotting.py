import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_spectrum(df: pd.DataFrame, path) -> None:
    fig, ax = plt.subplots()
    mhz = df.omega_rad_s / (2e6 * np.pi)
    for col, label in (("on_V", "beam on"), ("off_V", "beam off"), ("value_V", "differential")):
        if col in df:
            ax.plot(mhz, df[col], label=label)
    ax.set_xlabel("f (MHz)")
    ax.set_ylabel("lock-in output (V)")
    ax.legend()
    _save(fig, path)


def plot_field_map(df: pd.DataFrame, path) -> None:
    # voxel maps are drawn per sample layer, beam maps per standoff
    group_col, axis_col = ("x_m", "y_m") if "x_m" in df else ("h_m", "d_m")
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, col in zip(axes, ("b1x_T", "b1y_T")):
        for level, group in df.groupby(group_col):
            ax.plot(group[axis_col] * 1e3, group[col], label=f"{group_col[0]} = {level * 1e3:.2f} mm")
        ax.set_xlabel(f"{axis_col[0]} (mm)")
        ax.set_ylabel(col)
    axes[0].legend(fontsize="small")
    _save(fig, path)


def plot_sweep(df: pd.DataFrame, path) -> None:
    fig, ax = plt.subplots()
    pos = df.position_m * 1e3
    ax.plot(pos, df.s_beam_i_V, label="S_beam I")
    ax.plot(pos, df.s_beam_q_V, label="S_beam Q")
    ax.plot(pos, df.u_emf_i_V, "--", label="U_EMF I")
    ax.plot(pos, df.u_emf_q_V, "--", label="U_EMF Q")
    ax.set_xlabel("position (mm)")
    ax.set_ylabel("V")
    ax.legend()
    _save(fig, path)


def plot_csv(df: pd.DataFrame, path) -> str:
    """Pick the renderer from the columns of an emitted CSV; returns its kind."""
    if "omega_rad_s" in df:
        plot_spectrum(df, path)
        return "spectrum"
    if "b1x_T" in df:
        plot_field_map(df, path)
        return "field-map"
    if "s_beam_i_V" in df:
        plot_sweep(df, path)
        return "sweep"
    raise ValueError("unrecognized CSV layout")
