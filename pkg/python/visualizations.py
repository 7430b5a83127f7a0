"""
Charts for the simulation results:
- robustness scatter: detection probability vs Eve's distinguishability, per unitary family
- detection rates: mean CTRL error rate per attack next to the analytic value
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

sns.set_palette("husl")

FAMILY_COLORS = {
    'identity': '#2E8B57',
    'haar': '#4682B4',
    'constrained': '#CD853F',
    'constrained-equal': '#9370DB',
    'constrained-orthogonal': '#DC143C',
}


def _ensure_parent(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def plot_robustness_scan(frame: pd.DataFrame, path: str = "images/robustness_scan.png") -> str:
    """Scatter of detection probability against Eve's trace distance"""
    _ensure_parent(path)
    fig, ax = plt.subplots(figsize=(10, 6))

    for family, group in frame.groupby('family'):
        ax.scatter(group['detection_probability'], group['avg_trace_distance'],
                   label=family, alpha=0.7, color=FAMILY_COLORS.get(family, '#808080'))

    ax.axvline(1e-6, color='grey', linestyle=':', linewidth=1)
    ax.set_title('Return-Leg Attacks: Detection vs Information', fontsize=14, fontweight='bold')
    ax.set_xlabel('Detection probability per EPR pair')
    ax.set_ylabel("Eve's trace distance (key 0 vs key 1)")
    ax.set_xlim(left=-0.01)
    ax.set_ylim(bottom=-0.02)
    ax.legend(title='Family')
    ax.grid(alpha=0.3)

    plt.tight_layout()
    plt.savefig(path, dpi=150, bbox_inches='tight')
    plt.close(fig)
    return path


def plot_detection_rates(frame: pd.DataFrame, path: str = "images/detection_rates.png") -> str:
    """Bars of measured CTRL error rate per attack; `expected` column drawn as markers"""
    _ensure_parent(path)
    fig, ax = plt.subplots(figsize=(10, 6))

    bars = ax.bar(frame['attack'], frame['ctrl_error_rate'], alpha=0.7,
                  color=sns.color_palette("husl", len(frame)))
    ax.scatter(frame['attack'], frame['expected'], color='black', marker='_', s=600,
               label='Analytic value', zorder=3)

    for bar, rate in zip(bars, frame['ctrl_error_rate']):
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height() + 0.01,
                f'{rate:.3f}', ha='center', va='bottom', fontweight='bold')

    ax.set_title('CTRL Bell-Check Error Rate by Attack', fontsize=14, fontweight='bold')
    ax.set_ylabel('Error rate')
    ax.set_ylim(0, 1)
    ax.legend()
    plt.xticks(rotation=20, ha='right')

    plt.tight_layout()
    plt.savefig(path, dpi=150, bbox_inches='tight')
    plt.close(fig)
    return path
