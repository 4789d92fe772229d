"""Command-line interface.

Subcommands: loss, verify, gibbs, mil, gradcheck, demo, heatmap. Reports are
JSON (stdout by default, file via --out) and carry a schema_version; they
contain no timestamps or host details so identical seeds give byte-identical
bytes. The verify-style commands print a human pass/fail table unless --json
is given, and exit nonzero when any requested check fails.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__, sceneio, synth, verify
from .errors import DimensionError, DomainError, SceneFormatError
from .gaco import GacoConfig
from .gradients import ObjectiveConfig, forward, fused_maps
from .heatmap import export_heatmaps
from .synth import RNG_NAME, SceneSpec

REPORT_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

CONFIG_KEYS = ("tau_t", "tau", "lambda_sem", "lambda_geo", "clip", "eps",
               "k_ratio", "normalize_sim", "std_mode", "seed", "seeds",
               "steps", "lr", "signal")


def _parse_seeds(text):
    try:
        return [int(s) for s in str(text).split(",") if s != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seeds expects comma-separated integers, got {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="expalign",
        description="Alignment-map losses, property suites, gradient checks, and a synthetic training demo.",
    )
    parser.add_argument("--version", action="version", version=f"expalign {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", metavar="PATH", help="JSON file with hyperparameter defaults")
        p.add_argument("--seed", type=int, default=None, help="base RNG seed (default 0)")
        p.add_argument("--json", action="store_true", help="machine-readable JSON to stdout")
        p.add_argument("--out", metavar="PATH", help="also write the JSON report to this file")
        hp = p.add_argument_group("hyperparameters")
        hp.add_argument("--tau-t", dest="tau_t", type=float, default=None, help="token-posterior temperature")
        hp.add_argument("--tau", type=float, default=None, help="contrastive temperature")
        hp.add_argument("--lambda-sem", dest="lambda_sem", type=float, default=None)
        hp.add_argument("--lambda-geo", dest="lambda_geo", type=float, default=None)
        hp.add_argument("--clip", type=float, default=None, help="advantage clip bound")
        hp.add_argument("--eps", type=float, default=None, help="stabilizer epsilon")
        hp.add_argument("--k-ratio", dest="k_ratio", type=float, default=None, help="top-k budget ratio")
        hp.add_argument("--normalize-sim", dest="normalize_sim", action="store_true", default=None,
                        help="divide the fine map by its max |value| before the geometry chain")
        hp.add_argument("--no-normalize-sim", dest="normalize_sim", action="store_false",
                        help="use the raw fine map in the geometry chain")
        hp.add_argument("--std-mode", dest="std_mode", choices=("population", "std_plus_eps"), default=None)

    p_loss = sub.add_parser("loss", help="evaluate the losses on a scene file or a synthetic scene")
    add_common(p_loss)
    p_loss.add_argument("--scene", metavar="PATH", help="scene JSON (default: synthetic from --seed)")
    p_loss.add_argument("--signal", type=float, default=None, help="synthetic signal strength")

    for name, help_text in (("verify", "run every property suite"),
                            ("gibbs", "closed-form vs numeric free-energy minimization"),
                            ("mil", "instance-pooling equivalence checks"),
                            ("gradcheck", "analytic vs finite-difference gradients")):
        p = sub.add_parser(name, help=help_text)
        add_common(p)
        p.add_argument("--inject-fault", dest="fault", choices=verify.KNOWN_FAULTS, default=None,
                       help="mutation sanity check: corrupt the suite's geometry-loss evaluator")

    p_demo = sub.add_parser("demo", help="train the synthetic benchmark and report accuracies")
    add_common(p_demo)
    p_demo.add_argument("--seeds", type=_parse_seeds, default=None,
                        help="comma-separated scene seeds (default: the frozen benchmark set)")
    p_demo.add_argument("--steps", type=int, default=None)
    p_demo.add_argument("--lr", type=float, default=None)
    p_demo.add_argument("--signal", type=float, default=None)
    p_demo.add_argument("--heatmap", action="store_true", help="export fine-map heatmaps after training")
    p_demo.add_argument("--heatmap-dir", default="heatmaps", metavar="DIR")

    p_heat = sub.add_parser("heatmap", help="export per-prompt fine fused maps as PGM files")
    add_common(p_heat)
    p_heat.add_argument("--scene", metavar="PATH", help="scene JSON (default: synthetic from --seed)")
    p_heat.add_argument("--signal", type=float, default=None)
    p_heat.add_argument("--out-dir", default="heatmaps", metavar="DIR")

    return parser


def load_config_file(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise SceneFormatError(f"cannot read config file: {e}") from e
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"invalid config JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise SceneFormatError("config file must hold a JSON object")
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise SceneFormatError(f"unknown config keys: {unknown}; known: {sorted(CONFIG_KEYS)}")
    return doc


def resolve_settings(args):
    """defaults < config file < explicit flags."""
    base = synth.benchmark_config()
    settings = {
        "tau_t": base.tau_t, "tau": base.tau,
        "lambda_sem": base.lambda_sem, "lambda_geo": base.lambda_geo,
        "clip": base.gaco.clip, "eps": base.gaco.eps,
        "k_ratio": base.topk_ratio, "normalize_sim": base.gaco.normalize,
        "std_mode": base.gaco.std_mode,
        "seed": 0, "seeds": list(synth.BENCHMARK_SEEDS),
        "steps": synth.BENCHMARK_STEPS, "lr": synth.BENCHMARK_LR,
        "signal": synth.BENCHMARK_SIGNAL,
    }
    if getattr(args, "config", None):
        settings.update(load_config_file(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def objective_config(settings):
    return ObjectiveConfig(
        lambda_sem=settings["lambda_sem"], lambda_geo=settings["lambda_geo"],
        tau_t=settings["tau_t"], tau=settings["tau"], topk_ratio=settings["k_ratio"],
        gaco=GacoConfig(clip=settings["clip"], eps=settings["eps"],
                        normalize=settings["normalize_sim"], std_mode=settings["std_mode"]),
    )


def config_echo(settings):
    echo = {k: settings[k] for k in sorted(settings)}
    echo["rng"] = RNG_NAME
    return echo


def _to_jsonable(value):
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def render_report(report):
    return json.dumps(_to_jsonable(report), sort_keys=True, indent=2) + "\n"


def emit(report, args, human_lines=None):
    text = render_report(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    if getattr(args, "json", False) or human_lines is None:
        sys.stdout.write(text)
    else:
        for line in human_lines:
            sys.stdout.write(line + "\n")


def _load_scene(args, settings):
    if getattr(args, "scene", None):
        return sceneio.read_scene(args.scene), {"source": "file", "path": args.scene}
    spec = SceneSpec(seed=settings["seed"], signal=settings["signal"])
    return synth.generate_scene(spec), {"source": "synthetic", "seed": settings["seed"],
                                        "signal": settings["signal"]}


def cmd_loss(args):
    settings = resolve_settings(args)
    scene, source = _load_scene(args, settings)
    cfg = objective_config(settings)
    tr = forward([f.values for f in scene.features], [t.embeddings for t in scene.tokens],
                 scene.masks, scene.positives, cfg, [t.valid for t in scene.tokens])
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "loss",
        "scene": source,
        "config": config_echo(settings),
        "k": tr.k,
        "pooled_logits": tr.logits,
        "topk_indices": [sel.tolist() for sel in tr.selections],
        "l_sem": tr.l_sem,
        "l_geo": tr.l_geo,
        "total": tr.total,
    }
    emit(report, args)
    return EXIT_OK


def _suite_command(args, groups, command):
    settings = resolve_settings(args)
    results = verify.run_suite(groups=groups, seed=settings["seed"],
                               fault=getattr(args, "fault", None), threads=verify.thread_cap())
    all_passed = all(r.passed for r in results)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": command,
        "seed": settings["seed"],
        "fault": getattr(args, "fault", None),
        "checks": [r.to_dict() for r in results],
        "all_passed": all_passed,
    }
    lines = [
        f"{'PASS' if r.passed else 'FAIL'} {r.name:34s} residual={r.residual:.3e} tol={r.tolerance:.1e}"
        for r in results
    ]
    lines.append(f"{'all checks passed' if all_passed else 'FAILURES detected'} "
                 f"({sum(r.passed for r in results)}/{len(results)})")
    emit(report, args, human_lines=lines)
    return EXIT_OK if all_passed else EXIT_CHECK_FAILED


def cmd_verify(args):
    return _suite_command(args, None, "verify")


def cmd_gibbs(args):
    return _suite_command(args, ("gibbs",), "gibbs")


def cmd_mil(args):
    return _suite_command(args, ("mil",), "mil")


def cmd_gradcheck(args):
    return _suite_command(args, ("grad",), "gradcheck")


def cmd_demo(args):
    settings = resolve_settings(args)
    cfg = objective_config(settings)
    seeds = settings["seeds"]
    runs = []
    for seed in seeds:
        spec = SceneSpec(seed=seed, signal=settings["signal"])
        runs.append(synth.demo_train(spec, steps=settings["steps"],
                                     learning_rate=settings["lr"], cfg=cfg))
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "demo",
        "config": config_echo(settings),
        "seeds": list(seeds),
        "mean_initial_accuracy": float(np.mean([r.initial_accuracy for r in runs])),
        "mean_final_accuracy": float(np.mean([r.final_accuracy for r in runs])),
        "runs": [r.to_dict() for r in runs],
    }
    if args.heatmap:
        # trained fine maps of the first seed's scene
        spec = SceneSpec(seed=seeds[0], signal=settings["signal"])
        scene = synth.generate_scene(spec)
        report["heatmaps"] = _export_scene_heatmaps(scene, cfg, args.heatmap_dir,
                                                    token_delta=runs[0].final_delta)
    emit(report, args)
    return EXIT_OK


def _export_scene_heatmaps(scene, cfg, out_dir, token_delta=None):
    tvals = [t.embeddings for t in scene.tokens]
    if token_delta is not None:
        tvals = [t + d for t, d in zip(tvals, token_delta)]
    _, up = fused_maps([f.values for f in scene.features], tvals,
                       cfg.tau_t, [t.valid for t in scene.tokens])
    sidecar = export_heatmaps(out_dir, up)
    return {"dir": out_dir, "maps": sidecar["maps"]}


def cmd_heatmap(args):
    settings = resolve_settings(args)
    scene, source = _load_scene(args, settings)
    cfg = objective_config(settings)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "heatmap",
        "scene": source,
        "config": config_echo(settings),
        "heatmaps": _export_scene_heatmaps(scene, cfg, args.out_dir),
    }
    emit(report, args)
    return EXIT_OK


HANDLERS = {
    "loss": cmd_loss,
    "verify": cmd_verify,
    "gibbs": cmd_gibbs,
    "mil": cmd_mil,
    "gradcheck": cmd_gradcheck,
    "demo": cmd_demo,
    "heatmap": cmd_heatmap,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except (SceneFormatError, DomainError, DimensionError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE
    except OSError as e:
        sys.stderr.write(f"i/o error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
