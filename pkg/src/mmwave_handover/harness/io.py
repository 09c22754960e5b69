"""CSV outputs, the channel-trace input and the policy file."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from mmwave_handover.baselines import UcbStats
from mmwave_handover.errors import ConfigurationError
from mmwave_handover.harness.episode import EpisodeMetrics
from mmwave_handover.learning import QTable

METRICS_HEADER = ("policy", "replication", "location_index", "rate_bps", "serving_bs", "handover_flag")
SUMMARY_HEADER = ("policy", "mean_Rtraj_bps", "std_Rtraj_bps", "mean_handovers")
LOCATION_HEADER = ("policy", "location_index", "mean_rate_bps", "std_rate_bps")
HISTOGRAM_HEADER = ("policy", "handovers", "episodes")
TRACE_HEADER = ("realization", "bs", "location", "theta_bs", "phi_bs", "theta_ue", "phi_ue", "gain_db", "los")

POLICY_FORMAT = "mmwave-handover-policy"
POLICY_VERSION = 1


def _num(x: float) -> str:
    """Shortest text that parses back to the same float."""
    return repr(float(x))


@dataclass(frozen=True)
class MetricsRow:
    policy: str
    replication: int
    location_index: int
    rate_bps: float
    serving_bs: int
    handover_flag: int

    def emit(self) -> str:
        return (
            f"{self.policy},{self.replication},{self.location_index},{_num(self.rate_bps)},"
            f"{self.serving_bs},{self.handover_flag}"
        )

    @classmethod
    def parse(cls, line: str) -> "MetricsRow":
        f = line.rstrip("\r\n").split(",")
        if len(f) != len(METRICS_HEADER):
            raise ValueError(f"expected {len(METRICS_HEADER)} fields, got {len(f)}: {line!r}")
        flag = int(f[5])
        if flag not in (0, 1):
            raise ValueError(f"handover_flag must be 0 or 1, got {flag}")
        return cls(f[0], int(f[1]), int(f[2]), float(f[3]), int(f[4]), flag)


def metrics_rows(metrics: Iterable[EpisodeMetrics]) -> Iterable[MetricsRow]:
    for m in metrics:
        for i in range(len(m.rate)):
            yield MetricsRow(m.policy, m.replication, i, float(m.rate[i]), int(m.serving[i]), int(m.handover[i]))


def metrics_csv(metrics: Iterable[EpisodeMetrics]) -> str:
    lines = [",".join(METRICS_HEADER)]
    lines.extend(row.emit() for row in metrics_rows(metrics))
    return "\n".join(lines) + "\n"


def read_metrics_csv(path) -> list[MetricsRow]:
    with open(path) as fh:
        header = fh.readline().rstrip("\r\n")
        if header != ",".join(METRICS_HEADER):
            raise ValueError(f"{path}: unexpected header {header!r}")
        return [MetricsRow.parse(line) for line in fh if line.strip()]


def summary_csv(summaries) -> str:
    buf = io.StringIO()
    buf.write(",".join(SUMMARY_HEADER) + "\n")
    for s in summaries:
        buf.write(f"{s.policy},{_num(s.mean_Rtraj_bps)},{_num(s.std_Rtraj_bps)},{_num(s.mean_handovers)}\n")
    return buf.getvalue()


def location_csv(summaries) -> str:
    lines = [",".join(LOCATION_HEADER)]
    for s in summaries:
        for i, (m, sd) in enumerate(zip(s.mean_rate_by_location, s.std_rate_by_location)):
            lines.append(f"{s.policy},{i},{_num(m)},{_num(sd)}")
    return "\n".join(lines) + "\n"


def histogram_csv(summaries) -> str:
    lines = [",".join(HISTOGRAM_HEADER)]
    for s in summaries:
        for k, v in sorted(s.handover_histogram.items()):
            lines.append(f"{s.policy},{k},{v}")
    return "\n".join(lines) + "\n"


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


# --- channel traces ----------------------------------------------------------------


@dataclass
class ChannelTrace:
    """Single-ray clusters per (realization, BS, location).

    ``clusters[k][j][i]`` is a (C, 6) array of (theta_bs, phi_bs, theta_ue,
    phi_ue, gain_db, los) rows; angles in radians, gain in dB.
    """

    clusters: list
    n_bs: int
    n_locations: int

    @property
    def n_realizations(self) -> int:
        return len(self.clusters)


def load_trace(path) -> ChannelTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader, ()))
        if header != TRACE_HEADER:
            raise ConfigurationError(f"{path}: trace header must be {','.join(TRACE_HEADER)}")
        rows = []
        for n, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                k, j, i = int(rec[0]), int(rec[1]), int(rec[2])
                vals = [float(x) for x in rec[3:8]]
                los = int(rec[8])
            except (ValueError, IndexError) as exc:
                raise ConfigurationError(f"{path}:{n}: {exc}") from exc
            if min(k, j, i) < 0 or los not in (0, 1):
                raise ConfigurationError(f"{path}:{n}: negative index or bad los flag")
            rows.append((k, j, i, *vals, los))
    if not rows:
        raise ConfigurationError(f"{path}: empty trace")
    arr = np.array(rows, dtype=float)
    K, N, M = (int(arr[:, c].max()) + 1 for c in range(3))
    clusters = [[[[] for _ in range(M)] for _ in range(N)] for _ in range(K)]
    for r in arr:
        clusters[int(r[0])][int(r[1])][int(r[2])].append(r[3:9])
    clusters = [[[np.array(c).reshape(-1, 6) for c in per_bs] for per_bs in per_k] for per_k in clusters]
    return ChannelTrace(clusters, N, M)


def trace_csv(trace: ChannelTrace) -> str:
    lines = [",".join(TRACE_HEADER)]
    for k, per_k in enumerate(trace.clusters):
        for j, per_bs in enumerate(per_k):
            for i, rows in enumerate(per_bs):
                for r in rows:
                    vals = ",".join(_num(x) for x in r[:5])
                    lines.append(f"{k},{j},{i},{vals},{int(r[5])}")
    return "\n".join(lines) + "\n"


# --- policy file --------------------------------------------------------------------


def save_policy(path, art) -> None:
    header = {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "fingerprint": art.fingerprint,
        "T_D": [float(t) for t in art.T_D],
        "tuning": art.tuning,
        "q_shape": None if art.Q is None else list(art.Q.values.shape),
        "ucb_shape": None if art.ucb is None else list(art.ucb.counts.shape),
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True))}
    if art.Q is not None:
        arrays["q_values"] = art.Q.values.ravel(order="C")
    if art.ucb is not None:
        arrays["ucb_counts"] = art.ucb.counts.ravel(order="C")
        arrays["ucb_means"] = art.ucb.means.ravel(order="C")
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_policy(path):
    from mmwave_handover.harness.experiment import Artifacts

    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != POLICY_FORMAT or header.get("version") != POLICY_VERSION:
            raise ConfigurationError(f"{path}: not a version-{POLICY_VERSION} policy file")
        Q = ucb = None
        if header["q_shape"] is not None:
            shape = tuple(header["q_shape"])
            Q = QTable(shape[:-1], shape[-1], z["q_values"].reshape(shape, order="C"))
        if header["ucb_shape"] is not None:
            shape = tuple(header["ucb_shape"])
            ucb = UcbStats(shape[:-1], shape[-1])
            ucb.counts[...] = z["ucb_counts"].reshape(shape, order="C")
            ucb.means[...] = z["ucb_means"].reshape(shape, order="C")
    return Artifacts(np.array(header["T_D"]), header["fingerprint"], Q, ucb, header.get("tuning", {}))


def write_outputs(out_dir, metrics: Sequence[EpisodeMetrics], summaries) -> dict:
    """metrics.csv, summary.csv, locations.csv and handovers.csv under ``out_dir``."""
    out_dir = Path(out_dir)
    files = {
        "metrics": out_dir / "metrics.csv",
        "summary": out_dir / "summary.csv",
        "locations": out_dir / "locations.csv",
        "handovers": out_dir / "handovers.csv",
    }
    write_text(files["metrics"], metrics_csv(metrics))
    write_text(files["summary"], summary_csv(summaries))
    write_text(files["locations"], location_csv(summaries))
    write_text(files["handovers"], histogram_csv(summaries))
    return files
