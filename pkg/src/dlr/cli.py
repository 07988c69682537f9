"""``dlr`` command-line interface.

Exit codes: 0 success, 2 input error, 3 contract or hash mismatch.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import experiment as exp
from . import fom, io, synth
from . import signal as sig
from .config import RunConfig, load_config
from .readout import SplitError

EXIT_INPUT = 2
EXIT_CONTRACT = 3


class ContractError(Exception):
    """Artifacts do not belong together (shape or config-hash mismatch)."""


class _Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *lines):
        if not self.quiet:
            for line in lines:
                print(line)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> RunConfig:
    return load_config(args.config, seed=args.seed)


def _write_kv(path: Path, items: dict):
    path.write_text("".join(f"{k} = {v}\n" for k, v in items.items()))


# --------------------------------------------------------------------------
# data generation and extraction
# --------------------------------------------------------------------------

def _calibration(data, labels, q, cfg: RunConfig) -> float:
    return exp.train_eval(data, labels, q, cfg, features="raw").report.accuracy


def cmd_synth(args, say):
    cfg = _config(args)
    out = _outdir(args)
    corruption = None
    if args.snr:
        lo, hi = (float(v) for v in args.snr.split(","))
        corruption = cfg.corruption(lo, hi)
    t0 = time.perf_counter()
    ds = synth.gen_dataset(cfg.synth(), corruption, (cfg.window_start, cfg.window_end),
                           cfg.dataset_normalization)
    io.write_dataset(out / "dataset.dlrd", ds.data, ds.labels, ds.num_classes)
    if args.captures:
        for cap in ds.captures:
            io.write_capture(out / f"{cap.capture_id}.dlrc", cap)
    manifest = {"seed": cfg.seed, "datapoints": ds.data.shape[0], "length": ds.data.shape[1],
                "classes": ds.num_classes}
    for key, value in ds.manifest["synth"].items():
        manifest[f"synth.{key}"] = value
    if corruption is not None:
        for key, value in ds.manifest["corruption"].items():
            manifest[f"corruption.{key}"] = value
    manifest["window"] = ds.manifest["window"]
    manifest["normalization"] = ds.manifest["normalization"]
    for m in ds.emitters:
        manifest[f"emitter.{m.device_id}"] = (
            f"cfo_hz={m.cfo_hz:.3f} gain_db={m.iq_gain_imbalance_db:.4f} "
            f"skew_rad={m.iq_phase_skew_rad:.5f} pa={m.pa_coeffs[0]:.4f},{m.pa_coeffs[1]:.4f},"
            f"{m.pa_coeffs[2]:.4f} ramp={m.ramp_samples}")
    if not args.no_calibration and ds.num_classes >= 2:
        manifest["calibration.raw_linear_accuracy"] = f"{_calibration(ds.data, ds.labels, ds.num_classes, cfg):.6f}"
    manifest["failures"] = len(ds.manifest["failures"])
    for i, msg in enumerate(ds.manifest["failures"]):
        manifest[f"failure.{i}"] = msg
    _write_kv(out / "manifest.txt", manifest)
    say(f"wrote {ds.data.shape[0]} datapoints x {ds.data.shape[1]} samples, "
        f"{ds.num_classes} classes to {out / 'dataset.dlrd'} ({time.perf_counter() - t0:.1f} s)")
    if "calibration.raw_linear_accuracy" in manifest:
        say(f"raw-linear calibration accuracy {float(manifest['calibration.raw_linear_accuracy']) * 100:.2f} %")


def _labels_for(captures: list[str], labels: str | None) -> list[int]:
    if labels:
        out = [int(v) for v in labels.split(",")]
        if len(out) != len(captures):
            raise ValueError(f"{len(out)} labels for {len(captures)} captures")
        return out
    return list(range(len(captures)))


def _extract(args, say, corruption):
    cfg = _config(args)
    out = _outdir(args)
    labels = _labels_for(args.captures, args.labels)
    rows, row_labels, failures, index = [], [], [], 0
    for path, label in zip(args.captures, labels):
        cap = io.read_capture(path)
        bursts, _, fails = synth.bursts_from_capture(cap)
        failures += fails
        for burst in bursts:
            if corruption is not None:
                burst = sig.corrupt(burst, corruption, cap.sample_rate_hz, index=index)
            index += 1
            rows.append(sig.magnitude(sig.sub_burst(burst, cfg.window_start, cfg.window_end)))
            row_labels.append(label)
    if not rows:
        raise ValueError("no bursts detected in the given captures")
    data, _ = sig.normalize(np.array(rows), cfg.dataset_normalization)
    name = "corrupted.dlrd" if corruption is not None else "dataset.dlrd"
    io.write_dataset(out / name, data, np.array(row_labels), max(labels) + 1)
    for msg in failures:
        say(f"skipped: {msg}")
    say(f"wrote {len(rows)} datapoints to {out / name}")


def cmd_extract(args, say):
    _extract(args, say, None)


def cmd_corrupt(args, say):
    cfg = _config(args)
    _extract(args, say, cfg.corruption())


# --------------------------------------------------------------------------
# training and inference
# --------------------------------------------------------------------------

def cmd_train(args, say):
    cfg = _config(args)
    out = _outdir(args)
    data, labels, q = io.read_dataset(args.dataset)
    if args.features == "reservoir" and not cfg.reservoir().separable_for(data.shape[1]):
        say(f"warning: {cfg.n_nodes} nodes is not larger than the datapoint length {data.shape[1]}"
            + (" / 2" if cfg.split else ""))
    result = exp.train_eval(data, labels, q, cfg, workers=args.workers, features=args.features)
    if args.features == "reservoir":
        io.write_weights(out / "weights.dlrw", result.weights, cfg.digest())
    (out / "report.txt").write_text(result.report.to_text())
    _write_kv(out / "timings.txt", {k: f"{v:.3f}" for k, v in result.report.timings.items()})
    say(result.report.table())


def cmd_infer(args, say):
    cfg = _config(args)
    out = _outdir(args)
    data, labels, q = io.read_dataset(args.dataset)
    weights, digest = io.read_weights(args.weights)
    if digest != cfg.digest():
        raise ContractError("weights were trained under a different reservoir config "
                            f"(digest {digest.hex()} != {cfg.digest().hex()})")
    if weights.n_features != cfg.reservoir().state_size:
        raise ContractError(f"weights expect {weights.n_features} state values, config gives "
                            f"{cfg.reservoir().state_size}")
    if weights.n_classes != q:
        raise ContractError(f"weights have {weights.n_classes} classes, dataset has {q}")
    report = exp.infer_dataset(data, labels, weights, q, cfg, workers=args.workers)
    (out / "infer_report.txt").write_text(report.to_text())
    say(report.table())


def cmd_sweep(args, say):
    cfg = _config(args)
    out = _outdir(args)
    data, labels, q = io.read_dataset(args.dataset)
    results = exp.sweep(data, labels, q, cfg, workers=args.workers)
    text = exp.format_sweep(results)
    (out / "sweep.txt").write_text(text + "\n")
    say(text)


def cmd_saliency(args, say):
    cfg = _config(args)
    out = _outdir(args)
    if args.captures:
        labels = _labels_for(args.captures, args.labels)
        bursts, burst_labels = [], []
        for path, label in zip(args.captures, labels):
            got, _, _ = synth.bursts_from_capture(io.read_capture(path))
            bursts += got
            burst_labels += [label] * len(got)
        bursts = np.array(bursts)
        burst_labels = np.array(burst_labels)
    else:
        ds = synth.gen_dataset(cfg.synth(), keep_bursts=True)
        bursts, burst_labels = ds.bursts, ds.labels.astype(np.int64)
    smap = sig.saliency_sweep(bursts, burst_labels, cfg.saliency_step, exp.quick_train_fn(cfg),
                              min_window=cfg.saliency_min_window)
    lines = [f"best_start = {smap.best[0]}", f"best_end = {smap.best[1]}",
             f"best_accuracy = {smap.best_accuracy:.6f}",
             "grid = " + " ".join(str(int(g)) for g in smap.grid)]
    for i, start in enumerate(smap.grid):
        row = " ".join("nan" if np.isnan(a) else f"{a:.4f}" for a in smap.accuracy[i])
        lines.append(f"start.{int(start)} = {row}")
    (out / "saliency.txt").write_text("\n".join(lines) + "\n")
    say(*lines[:3])


def cmd_mackey(args, say):
    cfg = _config(args)
    out = _outdir(args)
    base = cfg.replace(n_nodes=cfg.mg_n_nodes, split=False,
                       filter_taps=min(cfg.filter_taps, cfg.mg_n_nodes))
    configs = {"reservoir": base}
    if args.compare_layers:
        configs["reservoir_2layer"] = base.replace(layers=2, layer2_n_nodes=base.layer2_n_nodes or base.n_nodes)
    length = cfg.mg_window + cfg.mg_train + cfg.mg_test + 1
    series = synth.gen_mackey_glass(cfg.mackey(length))
    result = exp.mackey_bench(series, base, configs, workers=args.workers)
    items = {f"nrmse.{k}": f"{v:.6f}" for k, v in result.items()}
    _write_kv(out / "mackey.txt", items)
    say(*(f"{k:<28} {v}" for k, v in items.items()))


# --------------------------------------------------------------------------
# calculators
# --------------------------------------------------------------------------

def cmd_stability(args, say):
    out = _outdir(args)
    g, stable = fom.loop_gain(fom.StabilityParams(args.gain, args.traversals))
    items = {"loop_gain": repr(g), "loop_gain_stable": stable}
    if args.alpha is not None:
        ga, stable_a = fom.average_gain(args.alpha, args.traversals)
        items.update({"average_gain": repr(ga), "average_gain_stable": stable_a})
    _write_kv(out / "stability.txt", items)
    say(*(f"{k:<22} {v}" for k, v in items.items()))


def _fom_inputs(args) -> fom.FomInputs:
    values = dict(fom.REFERENCE_INPUTS)
    if args.inputs:
        for line in Path(args.inputs).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in fom.FomInputs.__dataclass_fields__:
                raise ValueError(f"unknown FOM input {key!r}")
            values[key] = float(value)
    for key in ("q", "n", "b"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    for key in ("q", "n", "b"):
        values[key] = int(values[key])
    return fom.FomInputs(**values)


def cmd_fom(args, say):
    out = _outdir(args)
    table = fom.compute_foms(_fom_inputs(args))
    items = {k: repr(v) for k, v in table.items()}
    items.update({f"note.{k}": v for k, v in fom.REFERENCE_NOTES.items()})
    _write_kv(out / "fom.txt", items)
    say(*(f"{k:<26} {v}" for k, v in items.items()))


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value run config")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--quiet", action="store_true", help="suppress tables on stdout")
    common.add_argument("--workers", type=int, default=None, help="threads for state computation")

    parser = argparse.ArgumentParser(prog="dlr", description="Delay-loop reservoir computing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic emitter dataset")
    p.add_argument("--snr", help="corrupt bursts with carrier jitter and noise, SNR range 'low,high' dB")
    p.add_argument("--captures", action="store_true", help="also write the DLRC captures")
    p.add_argument("--no-calibration", action="store_true", help="skip the raw-linear calibration run")
    p.set_defaults(func=cmd_synth)

    for name, func, help_ in (("extract", cmd_extract, "captures -> labelled dataset"),
                              ("corrupt", cmd_corrupt, "captures -> corrupted labelled dataset")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("captures", nargs="+", help="DLRC capture files, one device each")
        p.add_argument("--labels", help="comma-separated label per capture (default: 0, 1, ...)")
        p.set_defaults(func=func)

    p = sub.add_parser("train", parents=[common], help="train the readout and evaluate")
    p.add_argument("dataset")
    p.add_argument("--features", choices=("reservoir", "raw"), default="reservoir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="classify a dataset with trained weights")
    p.add_argument("dataset")
    p.add_argument("weights")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sweep", parents=[common], help="rank a hyperparameter grid")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("saliency", parents=[common], help="accuracy map over sub-burst windows")
    p.add_argument("captures", nargs="*", help="DLRC captures (default: synthesise from config)")
    p.add_argument("--labels")
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("mackey", parents=[common], help="Mackey-Glass one-step prediction")
    p.add_argument("--compare-layers", action="store_true", help="also run two stacked loops")
    p.set_defaults(func=cmd_mackey)

    p = sub.add_parser("stability", parents=[common], help="loop-gain stability")
    p.add_argument("--gain", type=float, required=True, help="one-pass gain")
    p.add_argument("--traversals", type=int, required=True, help="loop traversals K")
    p.add_argument("--alpha", type=float, help="also report the opened-loop average gain")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("fom", parents=[common], help="figures of merit and training latency")
    p.add_argument("--inputs", help="key = value file of FomInputs fields")
    p.add_argument("--q", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--b", type=int)
    p.set_defaults(func=cmd_fom)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    say = _Out(args.quiet)
    try:
        args.func(args, say)
    except ContractError as exc:
        print(f"dlr: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (OSError, ValueError, SplitError) as exc:
        print(f"dlr: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
