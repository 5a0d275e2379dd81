"""Command-line entry point: ``mistream <subcommand> [config.yaml] [--key value ...]``.

Every ExperimentConfig key is also a flag (``--check-interval 50`` or
``--check_interval 50``). Flags override the config file. Outputs go to
``$MISTREAM_OUTPUT_DIR`` if set, else to the configured ``output_dir``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments
from .config import FIELD_TYPES, load_config
from .errors import MistreamError
from .io import load_mapping, output_dir, write_csv, write_features
from .synth import gaussian_clusters

COMMANDS = ("synth", "train-online", "train-batch", "eval", "correlate", "sweep")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mistream", description="Streaming mutual-information hashing experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "write a Gaussian-cluster dataset (MIHF, or CSV for a .csv path)",
        "train-online": "online training with baseline and triggered table refresh",
        "train-batch": "minibatch training; saves the learned mapping",
        "eval": "mAP and overlap of a saved mapping on the configured data",
        "correlate": "MI vs AP/DCG/NDCG over random mappings",
        "sweep": "vary theta or U of the triggered policy",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("config", nargs="?", help="YAML config file")
        if name == "synth":
            sp.add_argument("--out", required=True, help="output feature file")
        if name == "eval":
            sp.add_argument("--mapping", required=True, help="MHSH mapping file")
        for key in FIELD_TYPES:
            flags = sorted({f"--{key}", f"--{key.replace('_', '-')}"})
            sp.add_argument(*flags, dest=f"cfg_{key}", default=None, metavar="VALUE")
    return p


def _overrides(ns) -> dict:
    return {k[4:]: v for k, v in vars(ns).items() if k.startswith("cfg_") and v is not None}


def _run(ns) -> str:
    cfg = load_config(ns.config, **_overrides(ns))
    if ns.command == "synth":
        data = gaussian_clusters(cfg.synth_n, cfg.synth_d, cfg.synth_classes, cfg.synth_spread,
                                 seed=cfg.seed, radius=cfg.synth_radius)
        path = Path(ns.out)
        if path.suffix.lower() == ".csv":
            write_csv(data, path)
        else:
            write_features(data, path)
        return f"wrote {len(data)} examples to {path}"
    out = output_dir(cfg.output_dir)
    if ns.command == "train-online":
        res = experiments.run_online(cfg, out)
        b, t = res.summary[experiments.BASELINE], res.summary[experiments.TU]
        return (f"baseline updates {b[0]:g}, auc {b[2]:.4f}; triggered updates {t[0]:g}, "
                f"auc {t[2]:.4f}; results in {out}")
    if ns.command == "sweep":
        rows = experiments.sweep(cfg, out=out)
        return f"{len(rows)} sweep rows written to {out / 'sweep.csv'}"
    if ns.command == "train-batch":
        res = experiments.run_batch(cfg, out)
        r = res[-1]
        return f"final mAP {r.final_map:.4f} (initial {r.initial_map:.4f}); results in {out}"
    if ns.command == "correlate":
        res = experiments.run_correlation(cfg, out)
        return f"pearson(MI, AP) = {experiments.fmt(res.pearson_ap) or 'undefined'}; results in {out}"
    if ns.command == "eval":
        mapping = load_mapping(ns.mapping)
        data = experiments.load_dataset(cfg)
        split = experiments.split_dataset(data, cfg, cfg.seed)
        ap, overlap = experiments.evaluate_mapping(mapping, split, cfg)
        experiments.write_table(out / "eval.csv", ["mapping", "map", "overlap"], [(ns.mapping, ap, overlap)])
        return f"mAP {ap:.4f}, overlap {overlap:.4f}"
    raise AssertionError(ns.command)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    ns = _parser().parse_args(argv)
    try:
        print(_run(ns))
    except (MistreamError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"mistream {ns.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
