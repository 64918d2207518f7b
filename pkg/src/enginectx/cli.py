"""Command-line interface.

Every subcommand resolves its settings as flags > --config JSON > defaults,
logs the resolved config as a JSON line, and stamps output artifacts with
a hash of the settings that determine their content.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from importlib import metadata
from pathlib import Path

from . import synth as synth_mod
from .chain import ChainSpec, TrainedChain, default_spec, evaluate_chain, predict_many, train_chain
from .context import ContextVector, ContextWeights, ReferenceContextDB, match_nearest
from .dataset import clip_seed, featurize_clips
from .errors import ConfigError, EngineCtxError
from .features import FeatureConfig, write_matrix
from .learn.grid import GridSpec, grid_search, write_results
from .registry import DEFAULT_MIN_N, Registry, VehicleDescriptor
from .signal import ingest, ingest_many, segment, write_segment_manifest

log = logging.getLogger("enginectx")

# settings that never change artifact bytes stay out of the config hash
UNHASHED = {"out", "log_file", "n_jobs", "config", "log_level", "command", "func", "action"}


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.0.0"


class JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        doc = {"ts": round(record.created, 3), "level": record.levelname.lower(),
               "event": record.getMessage()}
        doc.update(getattr(record, "fields", {}))
        return json.dumps(doc, sort_keys=True, default=str)


def _setup_logging(level: str, path: str | None) -> None:
    handler = logging.FileHandler(path) if path else logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    log.handlers[:] = [handler]
    log.setLevel(level.upper())
    log.propagate = False


def _event(msg: str, **fields) -> None:
    log.info(msg, extra={"fields": fields})


def config_hash(settings: dict) -> str:
    doc = {k: v for k, v in settings.items() if k not in UNHASHED}
    text = json.dumps(doc, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _read_json(path: str | None, what: str):
    if path is None:
        return None
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{what} file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} file {path} is not valid JSON: {exc}") from None


def _write_json(path: str | Path, doc: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def _wav_paths(inputs: list[str]) -> list[Path]:
    paths = []
    for p in map(Path, inputs):
        paths.extend(sorted(p.glob("*.wav")) if p.is_dir() else [p])
    if not paths:
        raise ConfigError("no input WAV files")
    return paths


def _feature_config(settings: dict) -> FeatureConfig:
    doc = _read_json(settings.get("feature_config"), "feature config") or {}
    return FeatureConfig.from_dict(doc)


# -- subcommands -----------------------------------------------------------

def cmd_synth(s: dict) -> int:
    mixes = {"balanced": synth_mod.balanced_mix, "fleet": synth_mod.fleet_mix}
    if s["task"] == "misfire":
        clips = []
        for fam in s["families"].split(","):
            clips += synth_mod.misfire_corpus(fam, s["n_vehicles"], s["seed"], s["duration"])
    else:
        if s["mix"] not in mixes:
            raise ConfigError(f"mix must be one of {sorted(mixes)}")
        clips = synth_mod.generate_corpus(s["n_vehicles"], mixes[s["mix"]](), s["seed"],
                                          s["duration"])
    paths = synth_mod.write_corpus(clips, s["out"])
    _write_json(Path(s["out"]) / "corpus.json",
                {"config_hash": config_hash(s), "clips": [p.name for p in paths]})
    _event("synth done", n_clips=len(paths), out=s["out"])
    print(f"wrote {len(paths)} clips to {s['out']}")
    return 0


def cmd_ingest(s: dict) -> int:
    clips = ingest_many(_wav_paths(s["inputs"]), n_jobs=s["n_jobs"])
    segs = []
    for c in clips:
        segs += segment(c, s["length"], s["segments"], clip_seed(s["seed"], c))
    write_segment_manifest(segs, s["out"])
    _event("ingest done", n_clips=len(clips), n_segments=len(segs))
    print(f"{len(clips)} clips, {len(segs)} segments -> {s['out']}")
    return 0


def cmd_featurize(s: dict) -> int:
    cfg = _feature_config(s)
    clips = ingest_many(_wav_paths(s["inputs"]), n_jobs=s["n_jobs"])
    X, owner = featurize_clips(clips, cfg, s["segments"], s["seed"], s["length"], s["n_jobs"])
    meta = [{"source_id": clips[i].source_id, **{f"label.{k}": str(v) for k, v in clips[i].labels.items()}}
            for i in owner]
    bin_path, json_path = write_matrix(s["out"], X, cfg, meta)
    doc = json.loads(json_path.read_text())
    doc["run_config_hash"] = config_hash(s)
    json_path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    _event("featurize done", rows=int(X.shape[0]), width=int(X.shape[1]))
    print(f"{X.shape[0]} rows x {X.shape[1]} features -> {bin_path}")
    return 0


def _chain_spec(s: dict) -> ChainSpec:
    doc = _read_json(s.get("chain_spec"), "chain spec")
    if doc is not None:
        return ChainSpec.from_dict(doc)
    hp = {"n_estimators": s["n_estimators"]} if s.get("n_estimators") else {}
    return default_spec(augment=s["augment"], kind=s["kind"], hyperparams=hp,
                        feature_config=_feature_config(s), segments_per_clip=s["segments"])


def cmd_train(s: dict) -> int:
    spec = _chain_spec(s)
    clips = ingest_many(_wav_paths(s["inputs"]), n_jobs=s["n_jobs"])
    t0 = time.perf_counter()
    chain = train_chain(spec, clips, seed=s["seed"], n_jobs=s["n_jobs"])
    chain.save(s["out"], config_hash=config_hash(s))
    _event("train done", stages=[st.label for st in chain.stages], n_clips=len(clips),
           seconds=round(time.perf_counter() - t0, 2))
    print(f"trained {len(chain.stages)}-stage chain on {len(clips)} clips -> {s['out']}")
    return 0


def cmd_grid(s: dict) -> int:
    doc = _read_json(s["grid"], "grid")
    if doc is None:
        raise ConfigError("grid requires --grid")
    grid = GridSpec.from_dict(doc)
    clips = ingest_many(_wav_paths(s["inputs"]), n_jobs=s["n_jobs"])
    results = grid_search(grid, clips, seed=s["seed"], n_jobs=s["n_jobs"])
    csv_path, json_path = write_results(results, s["out"], config_hash(s))
    for r in results:
        roc = "-" if r["roc_auc"] is None else f"{r['roc_auc']:.3f}"
        print(f"{r['rank']:>3}  {r['cell_id']}  {r['kind']:<20} roc_auc {roc}  {r['status']}")
    _event("grid done", cells=len(results), out=str(json_path))
    return 0


def cmd_evaluate(s: dict) -> int:
    chain = TrainedChain.load(s["model"])
    clips = ingest_many(_wav_paths(s["inputs"]), n_jobs=s["n_jobs"])
    preds = predict_many(chain, clips, s["segments"], s["seed"], s["n_jobs"])
    reports = evaluate_chain(preds, clips)
    for name, rep in reports.items():
        print(f"[{name}]")
        print(rep.format_table())
        print("raw counts:", json.dumps(rep.confusion.tolist()))
        print()
    if s.get("out"):
        _write_json(s["out"], {"config_hash": config_hash(s),
                               "stages": {k: r.to_dict() for k, r in reports.items()}})
    _event("evaluate done", n_clips=len(clips))
    return 0


def cmd_classify(s: dict) -> int:
    chain = TrainedChain.load(s["model"])
    clip = ingest(s["clip"])
    pred = predict_many(chain, [clip], s["segments"], s["seed"])[0]
    doc = {"config_hash": config_hash(s), **pred.to_dict()}
    text = json.dumps(doc, indent=1, sort_keys=True)
    print(text)
    if s.get("out"):
        _write_json(s["out"], doc)
    return 0


def _descriptor(s: dict) -> VehicleDescriptor:
    doc = _read_json(s.get("descriptor"), "descriptor") or {}
    for attr in VehicleDescriptor.attributes():
        if s.get(attr) is not None:
            doc[attr] = s[attr]
    return VehicleDescriptor.from_dict(doc)


def cmd_select_model(s: dict) -> int:
    trace: dict = {"config_hash": config_hash(s)}
    kind = s["kind"]
    if s.get("context"):
        db = ReferenceContextDB.load(s["db"]) if s.get("db") else None
        if db is None:
            raise ConfigError("--context needs --db")
        ctx = ContextVector.from_mapping(_read_json(s["context"], "context"), db.schema)
        wdoc = _read_json(s.get("weights"), "weights")
        weights = ContextWeights(wdoc) if wdoc else ContextWeights.uniform(db.schema)
        match = match_nearest(ctx, db, weights)
        trace["context"] = match.to_dict()
        kind = match.model_id
    reg = Registry.open(s["registry"], create=False)
    sel = reg.query(_descriptor(s), kind, s["min_n"])
    trace["query"] = _descriptor(s).to_dict()
    trace["selection"] = sel.to_dict()
    if "context" in trace:
        c = trace["context"]
        print(f"pruned: {', '.join(c['pruned']) or '(none)'}")
        for r in c["ranking"]:
            print(f"  context {r['model_id']:<20} distance {r['distance']:g}  n={r['n_train']}")
    for rid, spec, n, verdict in sel.trace:
        print(f"  record {rid:<20} specificity {spec}  n_train {n:<4} {verdict}")
    print(f"selected {sel.record.record_id} (specificity {sel.record.descriptor.specificity}"
          f"{', root fallback' if sel.fallback else ''})")
    if s.get("out"):
        _write_json(s["out"], trace)
    return 0


def cmd_registry(s: dict) -> int:
    reg = Registry.open(s["registry"], create=s["action"] == "add")
    if s["action"] == "list":
        for r in sorted(reg.records, key=lambda r: r.record_id):
            print(f"{r.record_id:<20} {r.kind:<12} n={r.n_train:<4} {r.descriptor}")
        return 0
    if s["action"] == "add":
        blob = Path(s["blob"]).read_bytes() if s.get("blob") else None
        rec = reg.add(_descriptor(s), s["kind"], s["n_train"], blob, s.get("record_id"))
        print(f"added {rec.record_id} {rec.descriptor} (registry version {reg.version})")
        return 0
    sel = reg.query(_descriptor(s), s["kind"], s["min_n"])
    print(json.dumps(sel.to_dict(), indent=1, sort_keys=True))
    return 0


# -- parser ----------------------------------------------------------------

# per-subcommand defaults; flags default to None so config values can fill in
DEFAULTS = {
    "common": {"seed": 0, "n_jobs": 1, "log_level": "info", "log_file": None},
    "synth": {"n_vehicles": 200, "mix": "balanced", "duration": 5.0, "task": "powertrain",
              "families": "alpha,beta"},
    "ingest": {"segments": 9, "length": 1.0},
    "featurize": {"segments": 9, "length": 1.0, "feature_config": None},
    "train": {"segments": 9, "kind": "gradient_boosted", "augment": "both",
              "n_estimators": None, "chain_spec": None, "feature_config": None},
    "grid": {"grid": None},
    "evaluate": {"segments": 9, "out": None},
    "classify": {"segments": 9, "out": None},
    "select-model": {"min_n": DEFAULT_MIN_N, "kind": None, "context": None, "db": None,
                     "weights": None, "descriptor": None, "out": None},
    "registry": {"min_n": DEFAULT_MIN_N, "kind": None, "n_train": 1, "blob": None,
                 "record_id": None, "descriptor": None},
}


def _descriptor_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--descriptor", help="JSON file with descriptor attributes")
    p.add_argument("--fuel")
    p.add_argument("--configuration")
    p.add_argument("--cylinders", type=int)
    p.add_argument("--displacement-l", dest="displacement_l", type=float)
    p.add_argument("--aspiration")
    p.add_argument("--make")
    p.add_argument("--instance")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="enginectx", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings (flags take precedence)")
    common.add_argument("--seed", type=int)
    common.add_argument("--n-jobs", dest="n_jobs", type=int)
    common.add_argument("--log-level", dest="log_level", choices=["debug", "info", "warning", "error"])
    common.add_argument("--log-file", dest="log_file")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic engine corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-vehicles", dest="n_vehicles", type=int)
    p.add_argument("--mix", choices=["balanced", "fleet"])
    p.add_argument("--duration", type=float)
    p.add_argument("--task", choices=["powertrain", "misfire"])
    p.add_argument("--families", help="comma-separated misfire families")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="load WAVs and write a segment manifest")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--segments", type=int)
    p.add_argument("--length", type=float)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("featurize", parents=[common], help="extract segment feature matrices")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True, help="output stem (.f64 + .json)")
    p.add_argument("--segments", type=int)
    p.add_argument("--length", type=float)
    p.add_argument("--feature-config", dest="feature_config")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="train the classifier chain")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--chain-spec", dest="chain_spec")
    p.add_argument("--feature-config", dest="feature_config")
    p.add_argument("--segments", type=int)
    p.add_argument("--kind", choices=["bagged_forest", "extra_random_forest", "gradient_boosted"])
    p.add_argument("--augment", choices=["both", "onehot", "proba", "none"])
    p.add_argument("--n-estimators", dest="n_estimators", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", parents=[common], help="grid search models x feature configs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--grid")
    p.add_argument("--out", required=True, help="output stem (.csv + .json)")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a trained chain")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--model", required=True)
    p.add_argument("--segments", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("classify", parents=[common], help="classify one clip with voting")
    p.add_argument("clip")
    p.add_argument("--model", required=True)
    p.add_argument("--segments", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("select-model", parents=[common],
                       help="pick a diagnostic model by context match and registry fallback")
    p.add_argument("--registry", required=True)
    p.add_argument("--kind", help="diagnostic kind (with --context the matched reference model id is used)")
    p.add_argument("--min-n", dest="min_n", type=int)
    p.add_argument("--context", help="JSON query context")
    p.add_argument("--db", help="JSON reference context db")
    p.add_argument("--weights", help="JSON per-name weights")
    p.add_argument("--out")
    _descriptor_flags(p)
    p.set_defaults(func=cmd_select_model)

    p = sub.add_parser("registry", parents=[common], help="list, add or query registry records")
    p.add_argument("action", choices=["list", "add", "query"])
    p.add_argument("--registry", required=True)
    p.add_argument("--kind")
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--blob")
    p.add_argument("--record-id", dest="record_id")
    p.add_argument("--min-n", dest="min_n", type=int)
    _descriptor_flags(p)
    p.set_defaults(func=cmd_registry)
    return ap


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over the --config file over defaults."""
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    conf = _read_json(flags.get("config"), "config") or {}
    if not isinstance(conf, dict):
        raise ConfigError("config file must hold a JSON object")
    conf = {k.replace("-", "_"): v for k, v in conf.items()}
    merged = dict(DEFAULTS["common"])
    merged.update(DEFAULTS.get(args.command, {}))
    unknown = sorted(set(conf) - set(merged) - set(flags))
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    merged.update(conf)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings = resolve(args)
        _setup_logging(settings["log_level"], settings.get("log_file"))
        _event("run start", command=args.command, version=tool_version(),
               config=settings, config_hash=config_hash(settings))
        if args.command == "registry" and settings["action"] != "list" and not settings.get("kind"):
            raise ConfigError("registry add/query need --kind")
        if args.command == "select-model" and not settings.get("kind") and not settings.get("context"):
            raise ConfigError("select-model needs --kind or --context")
        code = args.func(settings)
        _event("run end", command=args.command, status=code)
        return code
    except EngineCtxError as exc:
        log.error("run failed", extra={"fields": {"error": type(exc).__name__, "detail": str(exc)}})
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        log.error("run failed", extra={"fields": {"error": "ValueError", "detail": str(exc)}})
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
