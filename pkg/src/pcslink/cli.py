"""Batch scenario runner: format comparisons, entropy/launch/distance sweeps,
DWDM grid accounting, and stability monitoring.

Every run is seeded explicitly (no wall-clock seeding); per-point generators
derive from the scenario seed by index, so results are byte-identical across
reruns and independent of worker scheduling. Records carry a hash of the
full configuration.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib
from pathlib import Path

import numpy as np

from . import channel as ch
from . import metrics as mt
from . import rxdsp as rx
from . import shaping as sh
from . import txdsp as tx
from .constellation import apply_maxwell_boltzmann, build_qam, shaped_qam, solve_entropy

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "schema_version",
    "config_hash",
    "sweep_axis",
    "sweep_value",
    "status",
    "stage_failed",
    "format_label",
    "entropy_bits",
    "bits_per_symbol",
    "symbol_rate_baud",
    "snr_db",
    "air_bits_per_symbol",
    "air_symbol_metric_bits",
    "air_tbps",
    "ngmi",
    "net_bitrate_tbps",
    "backoff_tbps",
    "bitwise_margin_tbps",
    "feasible",
    "seed",
]


@dataclass(frozen=True)
class ScenarioConfig:
    """One batch experiment: format, link, DSP toggles, sweep, and outputs."""

    mode: str = "b2b"  # b2b | single_channel | dwdm_budget | monitor
    base_qam: int = 256
    entropy_bits: float | None = 7.9  # None: uniform (log2 M)
    rs_gbaud: float = 130.0
    fec_overhead: float = 0.137
    snr_db: float = 18.0  # operating point for b2b-style runs
    launch_dbm: float = 7.0
    n_spans: int = 1
    span_km: float = 61.3
    span_att_db: float = 19.5
    edfa_nf_db: float = 5.0
    snr_penalty_db: float = 0.0  # implementation margin off the analytic budget
    impairments: ch.ImpairmentConfig = field(default_factory=ch.ImpairmentConfig)
    use_waveform: bool = False
    rolloff: float = 0.1
    preemphasis_db: float = 0.0
    dac_enob: float | None = None  # None: ideal converter
    dac_bandwidth_ghz: float | None = None
    tx_cubic_a3: float = 0.0
    volterra: bool = False
    preq_bcjr: bool = False
    allow_large_trellis: bool = False
    sweep_axis: str | None = None  # entropy | launch_power | distance | frequency
    sweep_values: tuple[float, ...] = ()
    n_symbols: int = 2**14
    train_symbols: int = 1024
    seed: int = 1
    # dwdm / monitor specifics
    dwdm_start_thz: float = 191.225
    dwdm_count: int = 34
    dwdm_spacing_ghz: float = 150.0
    per_channel_net_tbps: float | None = None
    edge_penalty_db: float = 0.0
    repetitions: int = 16
    interval_label: str = "45s"
    drift_db: float = 0.0
    workers: int = 1
    output_prefix: str | None = None

    def __post_init__(self):
        if self.sweep_axis is not None and not self.sweep_values:
            raise ValueError("sweep axis set but no sweep values given")
        if self.seed is None:
            raise ValueError("a seed is mandatory")

    def link(self, n_spans: int | None = None) -> ch.LinkConfig:
        spans = tuple(
            ch.Span(self.span_km, self.span_att_db)
            for _ in range(n_spans if n_spans is not None else self.n_spans)
        )
        link = ch.LinkConfig(spans=spans, edfa_noise_figure_db=self.edfa_nf_db)
        return link.with_eta(ch.calibrate_eta(link, 7.0))

    def config_hash(self) -> str:
        payload = json.dumps(dataclasses.asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ResultRecord:
    """One sweep point, flattened for CSV emission."""

    config_hash: str
    sweep_axis: str
    sweep_value: float
    status: str
    stage_failed: str | None
    report: mt.MetricsReport | None
    feasible: bool | None
    seed: int

    def row(self) -> dict:
        r = self.report
        return {
            "schema_version": SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "sweep_axis": self.sweep_axis,
            "sweep_value": repr(self.sweep_value),
            "status": self.status,
            "stage_failed": self.stage_failed or "",
            "format_label": r.format_label if r else "",
            "entropy_bits": repr(r.entropy_bits) if r else "",
            "bits_per_symbol": r.bits_per_symbol if r else "",
            "symbol_rate_baud": repr(r.symbol_rate_baud) if r else "",
            "snr_db": repr(r.snr_db) if r else "",
            "air_bits_per_symbol": repr(r.air_bits_per_symbol) if r else "",
            "air_symbol_metric_bits": (
                repr(r.air_symbol_metric_bits)
                if r and r.air_symbol_metric_bits is not None
                else ""
            ),
            "air_tbps": repr(r.air_tbps) if r else "",
            "ngmi": repr(r.ngmi) if r else "",
            "net_bitrate_tbps": repr(r.net_bitrate_tbps) if r else "",
            "backoff_tbps": repr(r.backoff_tbps) if r else "",
            "bitwise_margin_tbps": repr(r.bitwise_margin_tbps) if r else "",
            "feasible": "" if self.feasible is None else str(self.feasible),
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# single-point simulation


def _shaped_for(cfg: ScenarioConfig, entropy: float | None):
    c = build_qam(cfg.base_qam)
    if entropy is None or entropy == math.log2(cfg.base_qam):
        return apply_maxwell_boltzmann(c, 0.0)
    return apply_maxwell_boltzmann(c, solve_entropy(c, entropy))


def _operating_snr(cfg: ScenarioConfig, axis: str, value: float) -> float:
    """Resolve the per-polarization symbol SNR for one sweep point."""
    if cfg.mode == "b2b" and axis in ("entropy", "none"):
        return cfg.snr_db
    if axis == "launch_power":
        link = cfg.link()
        return ch.gn_link_snr(link, value).snr_db - cfg.snr_penalty_db
    if axis == "distance":
        link = cfg.link(n_spans=int(value))
        return ch.gn_link_snr(link, cfg.launch_dbm).snr_db - cfg.snr_penalty_db
    if axis == "frequency":
        penalty = 0.0
        if cfg.edge_penalty_db:
            center = cfg.dwdm_start_thz + (cfg.dwdm_count - 1) * cfg.dwdm_spacing_ghz / 2e3
            half_span = max((cfg.dwdm_count - 1) * cfg.dwdm_spacing_ghz / 2e3, 1e-9)
            penalty = cfg.edge_penalty_db * abs(value - center) / half_span
        base = (
            ch.gn_link_snr(cfg.link(), cfg.launch_dbm).snr_db - cfg.snr_penalty_db
            if cfg.mode != "b2b"
            else cfg.snr_db
        )
        return base - penalty
    if cfg.mode == "single_channel":
        link = cfg.link()
        return ch.gn_link_snr(link, cfg.launch_dbm).snr_db - cfg.snr_penalty_db
    return cfg.snr_db


def _frame_both_polarizations(shaped, cfg, rng):
    """Independent PAS frames for X and Y; returns indices (2, n) and bits."""
    n_info = sh.frame_info_bit_count(shaped, cfg.fec_overhead, cfg.n_symbols)
    indices = np.empty((2, cfg.n_symbols), dtype=np.int64)
    info = []
    for p in range(2):
        bits = rng.integers(0, 2, size=n_info)
        frame = sh.pas_frame(bits, shaped, cfg.fec_overhead, cfg.n_symbols, rng)
        indices[p] = frame.symbol_indices
        info.append(bits)
    return indices, info


def _waveform_roundtrip(cfg, shaped, tx_syms, snr_db, rng):
    """Full sampled chain; returns symbol-rate streams aligned to tx_syms."""
    rs = cfg.rs_gbaud * 1e9
    sps = 2
    sig = tx.rrc_shape(tx_syms, cfg.rolloff, sps, sample_rate=sps * rs)
    if cfg.tx_cubic_a3:
        sig = tx.memoryless_nonlinearity(sig, cfg.tx_cubic_a3)
    if cfg.preemphasis_db:
        sig = tx.preemphasis(sig, cfg.preemphasis_db)
    if cfg.dac_enob is not None or cfg.dac_bandwidth_ghz is not None:
        dac = tx.DacConfig(
            sampling_rate=sps * rs,
            enob=cfg.dac_enob,
            bandwidth_3db=(
                cfg.dac_bandwidth_ghz * 1e9 if cfg.dac_bandwidth_ghz else None
            ),
        )
        sig = tx.dac_model(sig, dac, rng)

    link = cfg.link() if cfg.mode != "b2b" else None
    if link is not None:
        sig = ch.apply_cd(sig, link)
    jones = ch.random_polarization(rng)
    sig = ch.polarization_rotate(sig, jones)
    osnr_db = snr_db + 10.0 * math.log10(rs / ch.REFERENCE_BANDWIDTH_HZ)
    sig = ch.add_ase(sig, osnr_db, rng, signal_power=float(sig.power().sum()))
    if cfg.impairments.linewidth_hz:
        sig = ch.phase_noise(sig, cfg.impairments.linewidth_hz, rng)
    sig = ch.iq_impair(sig, cfg.impairments)

    if link is not None:
        sig = rx.cd_compensate(sig, link)
    sig = tx.apply_rrc(sig, cfg.rolloff)

    needs_carrier = (
        cfg.impairments.linewidth_hz > 0 or cfg.impairments.frequency_offset_hz != 0
    )
    if cfg.impairments.frequency_offset_hz != 0:
        # coarse removal before the butterfly; residual goes to carrier recovery
        coarse = rx.coarse_frequency_offset(sig.samples[:, ::sps], rs)
        t = np.arange(sig.num_samples) / sig.sample_rate
        sig = sig.with_samples(sig.samples * np.exp(-2j * math.pi * coarse * t))

    state = rx.create_equalizer(num_taps=33, step=2e-3)
    delay = state.num_taps // (2 * sps)
    n_train = min(cfg.train_symbols, tx_syms.shape[1] // 4)
    pilots = np.roll(tx_syms, -delay, axis=1)[:, :n_train]
    eq = rx.mimo_equalize(sig, state, pilots=pilots, shaped=shaped)

    if needs_carrier:
        ccfg = rx.CarrierConfig(
            symbol_rate_hz=rs, pilot_symbols=np.roll(tx_syms, -delay, axis=1)[:, :n_train]
        )
        eq = rx.carrier_recover(eq, shaped, ccfg).symbols

    aligned = np.empty((2, tx_syms.shape[1]), dtype=np.complex128)
    pad = np.zeros(tx_syms.shape[1], dtype=np.complex128)
    for p in range(2):
        pad[:] = 0.0
        pad[: eq.shape[1]] = eq[p]
        aligned[p], _, _ = rx.align_to_reference(pad, tx_syms[p])
    if cfg.volterra:
        vcfg = rx.VolterraConfig(placement="tx")
        tribs = np.stack(
            [aligned[0].real, aligned[0].imag, aligned[1].real, aligned[1].imag]
        )
        ref = np.stack(
            [tx_syms[0].real, tx_syms[0].imag, tx_syms[1].real, tx_syms[1].imag]
        )
        out, _ = rx.volterra_equalize(tribs, vcfg, ref)
        aligned = np.stack([out[0] + 1j * out[1], out[2] + 1j * out[3]])
    guard = state.num_taps
    return aligned, guard


def _detect_and_measure(cfg, shaped, rx_syms, tx_indices, tx_syms, valid):
    """Demap (memoryless or PREQ+BCJR) and estimate both AIR flavors."""
    span = valid.stop - valid.start
    n_train = min(cfg.train_symbols, max(span // 4, 1))
    train = slice(valid.start, valid.start + n_train)
    payload = slice(valid.start + n_train, valid.stop)

    air_sym = None
    all_llrs = []
    all_idx = []
    for p in range(2):
        resid = rx_syms[p, train] - tx_syms[p, train]
        sigma2 = float(np.mean(np.abs(resid) ** 2))
        sigma2 = max(sigma2, 1e-12)
        y = rx_syms[p, payload]
        if cfg.preq_bcjr:
            model = rx.estimate_preq_alpha(resid)
            z = rx.preq_filter(y, model.alpha)
            result = rx.bcjr_detect(
                z,
                rx.PartialResponseModel(model.alpha, max(model.sigma2, 1e-12)),
                shaped,
                allow_large_trellis=cfg.allow_large_trellis,
            )
            llrs = result.llrs
            a, _ = mt.air_from_posteriors(
                result.posteriors, tx_indices[p, payload], shaped
            )
            air_sym = a if air_sym is None else 0.5 * (air_sym + a)
        else:
            llrs = rx.soft_demap(y, shaped, sigma2)
        all_llrs.append(llrs)
        all_idx.append(tx_indices[p, payload])

    block = rx.llr_block(
        np.concatenate(all_llrs), np.concatenate(all_idx), shaped
    )
    air_bit = mt.air_from_llrs(block)
    snr_est = mt.snr_estimate(
        np.concatenate([rx_syms[0, payload], rx_syms[1, payload]]),
        np.concatenate([tx_syms[0, payload], tx_syms[1, payload]]),
    )
    return air_bit, air_sym, snr_est


def simulate_point(
    cfg: ScenarioConfig, axis: str, value: float, seed_seq: np.random.SeedSequence
) -> ResultRecord:
    """Run tx -> channel -> rx -> metrics for one sweep coordinate."""
    stage = "setup"
    seed_int = int(seed_seq.generate_state(1)[0])
    try:
        entropy = value if axis == "entropy" else cfg.entropy_bits
        shaped = _shaped_for(cfg, entropy)
        snr_db = _operating_snr(cfg, axis, value)
        rng = np.random.default_rng(seed_seq)

        stage = "tx_frame"
        tx_indices, _ = _frame_both_polarizations(shaped, cfg, rng)
        tx_syms = np.stack(
            [tx.map_symbols(tx_indices[0], shaped), tx.map_symbols(tx_indices[1], shaped)]
        )

        if cfg.use_waveform:
            stage = "waveform_chain"
            rx_syms, guard = _waveform_roundtrip(cfg, shaped, tx_syms, snr_db, rng)
            valid = slice(guard, cfg.n_symbols - guard)
        else:
            stage = "channel"
            sigma2 = 10.0 ** (-snr_db / 10.0)
            noise = rng.normal(size=(2, 2, cfg.n_symbols)) * math.sqrt(sigma2 / 2.0)
            rx_syms = tx_syms + noise[0] + 1j * noise[1]
            valid = slice(0, cfg.n_symbols)

        stage = "detection"
        air_bit, air_sym, snr_est = _detect_and_measure(
            cfg, shaped, rx_syms, tx_indices, tx_syms, valid
        )

        stage = "metrics"
        budget = sh.rate_budget(
            cfg.rs_gbaud * 1e9,
            shaped.entropy_bits,
            shaped.bits_per_symbol,
            cfg.fec_overhead,
        )
        report = mt.build_report(
            shaped,
            cfg.rs_gbaud * 1e9,
            snr_est,
            air_bit,
            budget.net_bitrate_tbps,
            air_symbol_metric_bits=air_sym,
            seed=seed_int,
            dsp_config_hash=cfg.config_hash(),
            format_label=f"PCS{cfg.base_qam}QAM",
        )
        feasible = report.air_tbps >= report.net_bitrate_tbps
        return ResultRecord(
            cfg.config_hash(), axis, value, "ok", None, report, feasible, seed_int
        )
    except Exception as exc:  # noqa: BLE001 - record and continue the sweep
        return ResultRecord(
            cfg.config_hash(), axis, value, f"failed: {exc}", stage, None, None, seed_int
        )


# ---------------------------------------------------------------------------
# scenario drivers


@dataclass(frozen=True)
class ScenarioSummary:
    records: list[ResultRecord]
    best_axis_value: float | None
    best_air_tbps: float | None
    aggregate_net_tbps: float | None = None
    spectral_efficiency: float | None = None
    derived_end_frequency_thz: float | None = None

    @property
    def any_failed(self) -> bool:
        return any(r.status != "ok" for r in self.records)


def _run_points(cfg: ScenarioConfig, axis: str, values) -> list[ResultRecord]:
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(values))
    if cfg.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(simulate_point, *zip(*[
                (cfg, axis, v, s) for v, s in zip(values, seeds)
            ])))
    else:
        records = [
            simulate_point(cfg, axis, v, s) for v, s in zip(values, seeds)
        ]
    order = np.argsort([r.sweep_value for r in records], kind="stable")
    return [records[i] for i in order]


def run_scenario(cfg: ScenarioConfig) -> ScenarioSummary:
    """Execute the configured sweep (or a single point) and summarize."""
    if cfg.mode == "dwdm_budget":
        return dwdm_budget(cfg)
    if cfg.mode == "monitor":
        return monitor(cfg, cfg.repetitions, cfg.interval_label)
    axis = cfg.sweep_axis or "none"
    values = list(cfg.sweep_values) if cfg.sweep_axis else [float("nan")]
    if axis == "none":
        values = [0.0]
    records = _run_points(cfg, axis, values)
    best_value = best_air = None
    ok = [r for r in records if r.status == "ok"]
    if ok:
        best = max(ok, key=lambda r: r.report.air_tbps)
        best_value, best_air = best.sweep_value, best.report.air_tbps
    return ScenarioSummary(records, best_value, best_air)


def dwdm_budget(cfg: ScenarioConfig) -> ScenarioSummary:
    """Evaluate every grid channel through the analytic budget and aggregate."""
    freqs = [
        cfg.dwdm_start_thz + i * cfg.dwdm_spacing_ghz / 1e3 for i in range(cfg.dwdm_count)
    ]
    records = _run_points(cfg, "frequency", freqs)
    total = 0.0
    for r in records:
        if r.status != "ok":
            continue
        net = (
            cfg.per_channel_net_tbps
            if cfg.per_channel_net_tbps is not None
            else r.report.net_bitrate_tbps
        )
        total += net
    se = mt.spectral_efficiency(total, cfg.dwdm_count, cfg.dwdm_spacing_ghz)
    ok = [r for r in records if r.status == "ok"]
    best = max(ok, key=lambda r: r.report.air_tbps) if ok else None
    return ScenarioSummary(
        records,
        best.sweep_value if best else None,
        best.report.air_tbps if best else None,
        aggregate_net_tbps=total,
        spectral_efficiency=se,
        derived_end_frequency_thz=freqs[-1],
    )


def monitor(cfg: ScenarioConfig, repetitions: int, interval_label: str) -> ScenarioSummary:
    """Repeated AIR measurements with derived seeds and optional slow drift.

    The drift profile is one sinusoidal period of +/- drift_db across the
    series, added to the operating SNR and recorded via the sweep value
    (the repetition index).
    """
    if repetitions < 2:
        raise ValueError("monitoring needs at least 2 repetitions")
    seeds = np.random.SeedSequence(cfg.seed).spawn(repetitions)
    records = []
    for i in range(repetitions):
        drift = cfg.drift_db * math.sin(2.0 * math.pi * i / repetitions)
        point_cfg = replace(cfg, snr_db=cfg.snr_db + drift, sweep_axis=None, sweep_values=())
        rec = simulate_point(point_cfg, "repetition", float(i), seeds[i])
        records.append(rec)
    ok = [r for r in records if r.status == "ok"]
    airs = [r.report.air_tbps for r in ok]
    best = max(ok, key=lambda r: r.report.air_tbps) if ok else None
    return ScenarioSummary(
        records,
        best.sweep_value if best else None,
        best.report.air_tbps if best else None,
        aggregate_net_tbps=None,
        spectral_efficiency=None,
    )


# ---------------------------------------------------------------------------
# outputs


def records_to_csv(records: list[ResultRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(r.row())
    return buf.getvalue()


def summary_to_json(summary: ScenarioSummary, cfg: ScenarioConfig) -> str:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": cfg.config_hash(),
        "config": dataclasses.asdict(cfg),
        "num_records": len(summary.records),
        "num_failed": sum(1 for r in summary.records if r.status != "ok"),
        "best_axis_value": summary.best_axis_value,
        "best_air_tbps": summary.best_air_tbps,
        "aggregate_net_tbps": summary.aggregate_net_tbps,
        "spectral_efficiency": summary.spectral_efficiency,
        "derived_end_frequency_thz": summary.derived_end_frequency_thz,
    }
    return json.dumps(payload, indent=2, sort_keys=True, default=str)


def write_outputs(summary: ScenarioSummary, cfg: ScenarioConfig) -> None:
    if cfg.output_prefix is None:
        return
    prefix = Path(cfg.output_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    prefix.with_suffix(".csv").write_text(records_to_csv(summary.records))
    prefix.with_suffix(".json").write_text(summary_to_json(summary, cfg))
    _write_plot(summary, prefix.with_suffix(".svg"))


def _write_plot(summary: ScenarioSummary, path: Path) -> None:
    ok = [r for r in summary.records if r.status == "ok"]
    if len(ok) < 2:
        return
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [r.sweep_value for r in ok]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, [r.report.air_tbps for r in ok], marker="o", label="AIR")
    ax.plot(
        xs,
        [r.report.net_bitrate_tbps for r in ok],
        marker="s",
        label="net bitrate",
    )
    ax.set_xlabel(ok[0].sweep_axis)
    ax.set_ylabel("Tb/s")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# command-line interface


def load_scenario(path: str | Path | None, overrides: dict) -> ScenarioConfig:
    """Layered config: TOML file values, then command-line overrides."""
    data: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    imp_data = data.pop("impairments", {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "sweep_values" in data and not isinstance(data["sweep_values"], tuple):
        data["sweep_values"] = tuple(data["sweep_values"])
    imp = ch.ImpairmentConfig(
        linewidth_hz=imp_data.get("linewidth_khz", 0.0) * 1e3,
        iq_gain_imbalance_db=imp_data.get("iq_gain_db", 0.0),
        iq_phase_error_deg=imp_data.get("iq_phase_deg", 0.0),
        skew_ps=tuple(imp_data.get("skew_ps", (0.0, 0.0, 0.0, 0.0))),
        frequency_offset_hz=imp_data.get("freq_offset_mhz", 0.0) * 1e6,
    )
    return ScenarioConfig(impairments=imp, **data)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML scenario file")
    p.add_argument("--seed", type=int)
    p.add_argument("--base-qam", dest="base_qam", type=int)
    p.add_argument("--entropy-bits", dest="entropy_bits", type=float)
    p.add_argument("--rs-gbaud", dest="rs_gbaud", type=float)
    p.add_argument("--snr-db", dest="snr_db", type=float)
    p.add_argument("--launch-dbm", dest="launch_dbm", type=float)
    p.add_argument("--fec-overhead", dest="fec_overhead", type=float)
    p.add_argument("--n-symbols", dest="n_symbols", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--output-prefix", dest="output_prefix")
    p.add_argument("--full", action="store_true", help="allow large BCJR trellises")


def _gather(args: argparse.Namespace, extra: dict | None = None) -> ScenarioConfig:
    keys = [
        "seed",
        "base_qam",
        "entropy_bits",
        "rs_gbaud",
        "snr_db",
        "launch_dbm",
        "fec_overhead",
        "n_symbols",
        "workers",
        "output_prefix",
    ]
    overrides = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "full", False):
        overrides["allow_large_trellis"] = True
    if extra:
        overrides.update(extra)
    return load_scenario(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pcslink", description="Shaped coherent-link scenario runner"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured scenario")
    _add_common_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="sweep one axis")
    _add_common_flags(p_sweep)
    p_sweep.add_argument(
        "--axis", required=True, choices=["entropy", "launch_power", "distance", "frequency"]
    )
    p_sweep.add_argument("--values", required=True, help="comma-separated sweep values")
    p_sweep.add_argument(
        "--mode", choices=["b2b", "single_channel"], default=None
    )

    p_dwdm = sub.add_parser("dwdm", help="DWDM grid budget")
    _add_common_flags(p_dwdm)
    p_dwdm.add_argument("--start-thz", dest="dwdm_start_thz", type=float)
    p_dwdm.add_argument("--channels", dest="dwdm_count", type=int)
    p_dwdm.add_argument("--spacing-ghz", dest="dwdm_spacing_ghz", type=float)
    p_dwdm.add_argument(
        "--per-channel-net-tbps", dest="per_channel_net_tbps", type=float
    )

    p_mon = sub.add_parser("monitor", help="repeated-run stability series")
    _add_common_flags(p_mon)
    p_mon.add_argument("--repetitions", type=int)
    p_mon.add_argument("--interval-label", dest="interval_label")
    p_mon.add_argument("--drift-db", dest="drift_db", type=float)

    p_exp = sub.add_parser("export-constellation", help="dump a shaped format as JSON")
    p_exp.add_argument("--base-qam", dest="base_qam", type=int, required=True)
    p_exp.add_argument("--entropy-bits", dest="entropy_bits", type=float, required=True)
    p_exp.add_argument("--output", required=True)

    args = parser.parse_args(argv)

    if args.command == "export-constellation":
        shaped = shaped_qam(args.base_qam, args.entropy_bits)
        Path(args.output).write_text(shaped.export_json())
        print(f"wrote {args.output}")
        return 0

    extra: dict = {}
    if args.command == "sweep":
        extra["sweep_axis"] = args.axis
        extra["sweep_values"] = tuple(float(v) for v in args.values.split(","))
        if args.mode:
            extra["mode"] = args.mode
        elif args.axis in ("launch_power", "distance"):
            extra["mode"] = "single_channel"
    elif args.command == "dwdm":
        extra["mode"] = "dwdm_budget"
        for k in ("dwdm_start_thz", "dwdm_count", "dwdm_spacing_ghz", "per_channel_net_tbps"):
            v = getattr(args, k, None)
            if v is not None:
                extra[k] = v
    elif args.command == "monitor":
        extra["mode"] = "monitor"
        for k in ("repetitions", "interval_label", "drift_db"):
            v = getattr(args, k, None)
            if v is not None:
                extra[k] = v

    cfg = _gather(args, extra)
    summary = run_scenario(cfg)
    write_outputs(summary, cfg)
    print(summary_to_json(summary, cfg))
    return 1 if summary.any_failed else 0


if __name__ == "__main__":
    sys.exit(main())
