"""Command-line surface: synthesize, train, detect, verify, and report.

Configuration comes from an optional JSON file with flag overrides; every
command embeds the resolved config digest in its outputs and derives all
randomness from a single seed so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from . import codec, injection, metrics, offline, rewards, verify
from .core import HallucinationType
from .gateway import RemoteHttpProvider, ResponseCache

BUILTIN_GOLDEN = "builtin:mini"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


_LOCATION_KEYS = ("out_dir", "cache_dir")
_INPUT_KEYS = (
    "golden",
    "corpus",
    "eval_corpus",
    "pools",
    "bundle",
    "detection_report",
    "verification_report",
)


def _fingerprint_path(value: str) -> str:
    """Content hash of an input file or directory; identical inputs at
    different paths fingerprint identically."""
    h = hashlib.sha256()
    if value == BUILTIN_GOLDEN:
        data = resources.files("fgprm.data").joinpath("mini_golden.jsonl")
        h.update(data.read_bytes())
        return h.hexdigest()[:16]
    path = Path(value)
    if path.is_dir():
        for child in sorted(path.rglob("*")):
            if child.is_file():
                h.update(child.name.encode("utf-8"))
                h.update(child.read_bytes())
    elif path.is_file():
        h.update(path.read_bytes())
    else:
        h.update(value.encode("utf-8"))
    return h.hexdigest()[:16]


def _semantic(resolved: dict) -> dict:
    """Config with output locations dropped and input paths replaced by
    content fingerprints, so the digest identifies the run, not its layout."""
    out = {}
    for key, value in resolved.items():
        if key in _LOCATION_KEYS:
            continue
        if key in _INPUT_KEYS and isinstance(value, str):
            out[key] = _fingerprint_path(value)
        else:
            out[key] = value
    return out


def _config_digest(resolved: dict) -> str:
    canonical = json.dumps(_semantic(resolved), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _resolve_config(args: argparse.Namespace, keys: Sequence[str]) -> dict:
    """Merge layers: per-command defaults < config file < explicit flags."""
    resolved: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must contain a JSON object")
        resolved.update({k: v for k, v in file_cfg.items() if k in keys})
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    resolved.setdefault("seed", 0)
    return resolved


def _load_golden(path: str) -> list:
    if path == BUILTIN_GOLDEN:
        data = resources.files("fgprm.data").joinpath("mini_golden.jsonl")
        with resources.as_file(data) as real_path:
            return codec.read_dataset(real_path)
    return codec.read_dataset(path)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )


def _make_provider(cfg: dict, golden, corpus_config) -> object:
    if cfg["provider"] == "mock":
        return offline.offline_provider(golden, corpus_config)
    endpoint = cfg.get("endpoint")
    if not endpoint:
        raise ValueError("remote provider requires an endpoint in the config")
    return RemoteHttpProvider(endpoint=endpoint)


def cmd_synthesize(args: argparse.Namespace) -> int:
    keys = (
        "golden",
        "out_dir",
        "cache_dir",
        "provider",
        "endpoint",
        "model_id",
        "quota_per_type",
        "golden_ratio",
        "seed",
        "deterministic_ce",
    )
    cfg = _resolve_config(args, keys)
    cfg.setdefault("golden", BUILTIN_GOLDEN)
    cfg.setdefault("provider", "mock")
    cfg.setdefault("quota_per_type", 5)
    cfg.setdefault("golden_ratio", 1.0)
    cfg.setdefault("model_id", "mock-model")
    cfg.setdefault("deterministic_ce", True)
    out_dir = Path(cfg.get("out_dir") or "out/synthesize")
    digest = _config_digest(cfg)

    golden = _load_golden(cfg["golden"])
    corpus_config = injection.CorpusConfig(
        per_type_quota=cfg["quota_per_type"],
        golden_ratio=cfg["golden_ratio"],
        seed=cfg["seed"],
        model_id=cfg["model_id"],
        use_deterministic_ce=cfg["deterministic_ce"],
    )
    provider = _make_provider(cfg, golden, corpus_config)
    cache = ResponseCache(cfg["cache_dir"]) if cfg.get("cache_dir") else None

    result = injection.build_corpus(golden, provider, corpus_config, cache)
    corpus_path = out_dir / "corpus.jsonl"
    codec.write_dataset(result.instances, corpus_path)
    _write_json(out_dir / "audit.json", dict(result.audit, config_digest=digest))
    _write_json(
        out_dir / "manifest.json",
        {
            "config_digest": digest,
            "config": _semantic(cfg),
            "corpus": corpus_path.name,
            "instances": len(result.instances),
            "status": "PARTIAL" if result.audit["quota_unreachable"] else "COMPLETE",
        },
    )
    print(
        f"synthesized {result.audit['injected']} injected + "
        f"{result.audit['golden']} golden instances -> {corpus_path}"
    )
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    keys = (
        "corpus",
        "mode",
        "out_dir",
        "seed",
        "learning_rate",
        "epochs",
        "batch_size",
        "patience",
    )
    cfg = _resolve_config(args, keys)
    if not cfg.get("corpus"):
        raise ValueError("train requires --corpus")
    cfg.setdefault("mode", "fg_prm")
    cfg.setdefault("learning_rate", 2.0)
    cfg.setdefault("epochs", 60)
    cfg.setdefault("batch_size", 32)
    cfg.setdefault("patience", 5)
    out_dir = Path(cfg.get("out_dir") or "out/train")
    digest = _config_digest(cfg)

    corpus = codec.read_dataset(cfg["corpus"])
    train_cfg = rewards.TrainConfig(
        learning_rate=cfg["learning_rate"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        early_stop_patience=cfg["patience"],
    )
    bundle, trace = rewards.train(cfg["mode"], corpus, train_cfg)
    bundle.config_digest = digest
    bundle_dir = out_dir / f"bundle-{cfg['mode']}"
    rewards.save_bundle(bundle, bundle_dir, trace)
    for scorer in trace.scorers:
        print(
            f"{scorer.name}: train loss {scorer.train_losses[-1]:.4f}, "
            f"val loss {scorer.val_losses[-1]:.4f} "
            f"(best epoch {scorer.selected_epoch})"
        )
    print(f"checkpoints -> {bundle_dir}")
    return EXIT_OK


def predict_matrices(bundle: rewards.ScorerBundle, chain, threshold: float = 0.5):
    """Boolean 6 x L prediction matrix: flag (t, i) when the clean probability
    falls below the threshold. cg_prm predictions broadcast across types."""
    probs = rewards.score_steps(bundle, chain)
    if bundle.mode == "cg_prm":
        row = [p < threshold for p in probs[0]]
        return [list(row) for _ in HallucinationType]
    return [[p < threshold for p in row] for row in probs]


def cmd_detect(args: argparse.Namespace) -> int:
    keys = ("bundle", "eval_corpus", "out_dir", "seed", "threshold", "metric_mode",
            "threshold_sweep")
    cfg = _resolve_config(args, keys)
    for required in ("bundle", "eval_corpus"):
        if not cfg.get(required):
            raise ValueError(f"detect requires --{required.replace('_', '-')}")
    cfg.setdefault("threshold", 0.5)
    cfg.setdefault("metric_mode", "standard")
    out_dir = Path(cfg.get("out_dir") or "out/detect")
    digest = _config_digest(cfg)

    bundle = rewards.load_bundle(cfg["bundle"])
    corpus = codec.read_dataset(cfg["eval_corpus"])
    if not corpus:
        raise metrics.EmptyReport("evaluation corpus is empty")
    preds = [
        predict_matrices(bundle, inst.chain, cfg["threshold"]) for inst in corpus
    ]
    golds = [inst.labels.to_lists() for inst in corpus]
    standard = metrics.detection_metrics(preds, golds, "standard")
    literal = metrics.detection_metrics(preds, golds, "literal")

    detection_block = {
        "standard": standard.as_dict(),
        "literal": literal.as_dict(),
        "primary_mode": cfg["metric_mode"],
        "threshold": cfg["threshold"],
    }
    if cfg.get("threshold_sweep"):
        detection_block["threshold_sweep"] = threshold_sweep(bundle, corpus)
    report = metrics.compile_report(detection=detection_block, config_digest=digest)
    out_path = out_dir / "detection_report.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(report.to_json(), encoding="utf-8")
    primary = standard if cfg["metric_mode"] == "standard" else literal
    macro = primary.macro_f1
    print(
        f"macro F1 ({cfg['metric_mode']}): "
        f"{macro if macro is None else round(macro, 4)}"
    )
    print(f"report -> {out_path}")
    return EXIT_OK


def threshold_sweep(
    bundle: rewards.ScorerBundle,
    corpus,
    thresholds: Optional[Sequence[float]] = None,
) -> list[dict]:
    """TPR/FPR over all (type, step) cells as the flagging threshold moves."""
    thresholds = thresholds or [i / 20 for i in range(1, 20)]
    scored = [
        (rewards.score_steps(bundle, inst.chain), inst.labels.to_lists())
        for inst in corpus
    ]
    rows = []
    for threshold in thresholds:
        tp = fp = fn = tn = 0
        for probs, gold in scored:
            gold_rows = gold if bundle.mode != "cg_prm" else None
            if bundle.mode == "cg_prm":
                flags = [p < threshold for p in probs[0]]
                truth = [any(col) for col in zip(*gold)]
                pairs = zip(flags, truth)
            else:
                pairs = (
                    (p < threshold, g)
                    for prow, grow in zip(probs, gold_rows)
                    for p, g in zip(prow, grow)
                )
            for flag, truth_value in pairs:
                if flag and truth_value:
                    tp += 1
                elif flag:
                    fp += 1
                elif truth_value:
                    fn += 1
                else:
                    tn += 1
        rows.append(
            {
                "threshold": threshold,
                "tpr": tp / (tp + fn) if tp + fn else None,
                "fpr": fp / (fp + tn) if fp + tn else None,
            }
        )
    return rows


def cmd_verify(args: argparse.Namespace) -> int:
    keys = ("pools", "bundle", "out_dir", "seed", "n_candidates")
    cfg = _resolve_config(args, keys)
    if not cfg.get("pools"):
        raise ValueError("verify requires --pools")
    out_dir = Path(cfg.get("out_dir") or "out/verify")
    digest = _config_digest(cfg)

    pools = verify.read_pools(cfg["pools"])
    if cfg.get("n_candidates"):
        pools = [verify.truncate_pool(p, cfg["n_candidates"]) for p in pools]
    verifiers: dict[str, verify.Verifier] = {
        "self_consistency": verify.self_consistency
    }
    if cfg.get("bundle"):
        bundle = rewards.load_bundle(cfg["bundle"])
        verifiers[bundle.mode] = verify.bundle_verifier(bundle)
    suite = verify.verify_suite(pools, verifiers)
    report = metrics.compile_report(
        verification=suite.as_dict(), config_digest=digest
    )
    out_path = out_dir / "verification_report.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(report.to_json(), encoding="utf-8")
    for name, acc in suite.accuracy.items():
        print(f"{name}: accuracy {acc:.4f}")
    print(f"report -> {out_path}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    keys = ("detection_report", "verification_report", "out_dir", "seed")
    cfg = _resolve_config(args, keys)
    if not cfg.get("detection_report") and not cfg.get("verification_report"):
        raise ValueError("report requires a detection or verification report")
    out_dir = Path(cfg.get("out_dir") or "out/report")
    out_dir.mkdir(parents=True, exist_ok=True)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    if cfg.get("detection_report"):
        body = json.loads(Path(cfg["detection_report"]).read_text(encoding="utf-8"))
        per_type = body["detection"]["standard"]["per_type"]
        names = [t.slug for t in HallucinationType]
        values = [per_type[n]["f1"] or 0.0 for n in names]
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.bar(names, values)
        ax.set_ylabel("F1")
        ax.set_ylim(0, 1)
        ax.set_title("Per-type detection F1")
        plt.xticks(rotation=30, ha="right")
        fig.tight_layout()
        path = out_dir / "detection_f1.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    if cfg.get("verification_report"):
        body = json.loads(
            Path(cfg["verification_report"]).read_text(encoding="utf-8")
        )
        curves = body["verification"]["by_n"]
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, curve in curves.items():
            ns = sorted(int(n) for n in curve)
            ax.plot(ns, [curve[str(n)] for n in ns], marker="o", label=name)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("candidates")
        ax.set_ylabel("accuracy")
        ax.set_title("Verification accuracy vs candidate count")
        ax.legend()
        fig.tight_layout()
        path = out_dir / "accuracy_vs_n.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    for path in written:
        print(f"figure -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fgprm",
        description=(
            "Synthesize step-level hallucination corpora, train per-type "
            "step scorers, and run detection and best-of-N verification."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--cache-dir", dest="cache_dir")

    p = sub.add_parser("synthesize", help="build an injected corpus from golden chains")
    common(p)
    p.add_argument("--golden", help=f"golden dataset path or {BUILTIN_GOLDEN}")
    p.add_argument("--provider", choices=("mock", "remote"))
    p.add_argument("--endpoint", help="chat-completion endpoint for remote provider")
    p.add_argument("--model-id", dest="model_id")
    p.add_argument("--quota-per-type", dest="quota_per_type", type=int)
    p.add_argument("--golden-ratio", dest="golden_ratio", type=float)
    p.add_argument(
        "--no-deterministic-ce",
        dest="deterministic_ce",
        action="store_const",
        const=False,
        help="route calculation errors through the provider as well",
    )
    p.set_defaults(func=cmd_synthesize, deterministic_ce=None)

    p = sub.add_parser("train", help="train a scorer bundle on a corpus")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--mode", choices=rewards.MODES)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--patience", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="score a labeled corpus and report P/R/F1")
    common(p)
    p.add_argument("--bundle")
    p.add_argument("--eval-corpus", dest="eval_corpus")
    p.add_argument("--threshold", type=float)
    p.add_argument("--metric-mode", dest="metric_mode", choices=("standard", "literal"))
    p.add_argument(
        "--threshold-sweep",
        dest="threshold_sweep",
        action="store_const",
        const=True,
    )
    p.set_defaults(func=cmd_detect, threshold_sweep=None)

    p = sub.add_parser("verify", help="rank candidate pools with verifiers")
    common(p)
    p.add_argument("--pools")
    p.add_argument("--bundle")
    p.add_argument("--n-candidates", dest="n_candidates", type=int)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="render report figures")
    common(p)
    p.add_argument("--detection-report", dest="detection_report")
    p.add_argument("--verification-report", dest="verification_report")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
