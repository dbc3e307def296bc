"""Command-line pipeline: tokenize, train, detect, aligncos, stability, eval, report, viz, synth.

Configuration is a flat set of keys. Each key resolves from, in order of
precedence: a command-line flag, an environment variable
``USAGECHANGE_<KEY>``, a config file (``key = value`` lines, or a JSON
provenance sidecar whose ``config`` section is reused), then the default.
Every output gets a ``<output>.json`` sidecar with the resolved config and the
SHA-256 of every input.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable, Mapping

from . import __version__

ENV_PREFIX = "USAGECHANGE_"


@dataclass(frozen=True)
class Key:
    name: str
    kind: str  # int, float, bool, str, ints
    default: Any
    help: str


KEYS = [
    Key("seed", "int", 1, "random seed for training"),
    Key("workers", "int", 1, "worker threads/processes"),
    Key("deterministic", "bool", False, "force sequential code paths for bit-reproducible output"),
    # tokenize
    Key("lowercase", "bool", True, "lowercase text before tokenizing"),
    Key("number_token", "str", "<num>", "replacement token for numbers"),
    Key("keep_emoji", "bool", True, "keep emoji tokens"),
    Key("dedup", "bool", False, "drop exact duplicate lines"),
    # train
    Key("dim", "int", 300, "embedding dimension"),
    Key("window", "int", 4, "maximum context window"),
    Key("train_min_count", "int", 20, "minimum count for the training vocabulary"),
    Key("negatives", "int", 5, "negative samples per positive pair"),
    Key("epochs", "int", 5, "training epochs"),
    Key("initial_lr", "float", 0.025, "initial learning rate"),
    Key("subsample_threshold", "float", 1e-3, "frequent-word subsampling threshold"),
    # detect / aligncos
    Key("k", "int", 1000, "neighbor count for the intersection score"),
    Key("min_count", "int", 200, "minimum corpus count for ranked words"),
    Key("drop_quantile", "float", 0.2, "drop this fraction of the rarest word types"),
    Key("stopword_top_n", "int", 200, "most frequent words of each corpus treated as stopwords"),
    Key("extra_stopwords", "str", "", "file with additional stopwords, one per line"),
    Key("neighbor_min_freq", "int", 100, "neighbors must occur more often than this"),
    Key("unit_normalize", "bool", True, "unit-normalize vectors before alignment"),
    Key("mean_center", "bool", False, "mean-center vectors before alignment"),
    # stability
    Key("seeds", "ints", (1, 2), "training seeds for the stability protocol"),
    Key("ks", "ints", (10, 20, 50, 100, 200, 500, 1000), "k values of the intersection@k curve"),
    Key("sweep_min_counts", "ints", (50, 100, 200, 500, 1000), "frequency cut-offs to sweep"),
    Key("sweep_ks", "ints", (10, 50, 100, 250, 500, 1000), "neighbor counts to sweep"),
    Key("sweep_at", "int", 100, "intersection depth used by the sweeps"),
    # report / viz
    Key("report_n", "int", 10, "neighbors listed per corpus in a report"),
    Key("viz_n", "int", 50, "neighbors per corpus included in a projection"),
    Key("tsne_seed", "int", 0, "t-SNE initialization seed"),
    Key("tsne_iters", "int", 1000, "t-SNE iterations"),
    # synth
    Key("synth_seed", "int", 0, "generator seed"),
    Key("synth_words", "int", 2000, "vocabulary size"),
    Key("synth_tokens", "int", 1_000_000, "tokens per corpus"),
    Key("synth_topics", "int", 20, "number of topics"),
    Key("synth_planted", "int", 5, "number of planted words"),
]
KEY_BY_NAME = {k.name: k for k in KEYS}

GROUPS = {
    "common": ["seed", "workers", "deterministic"],
    "tokenize": ["lowercase", "number_token", "keep_emoji", "dedup"],
    "train": ["dim", "window", "train_min_count", "negatives", "epochs", "initial_lr", "subsample_threshold"],
    "detect": ["k", "min_count", "drop_quantile", "stopword_top_n", "extra_stopwords", "neighbor_min_freq"],
    "align": ["unit_normalize", "mean_center"],
    "stability": ["seeds", "ks", "sweep_min_counts", "sweep_ks", "sweep_at"],
    "report": ["report_n"],
    "viz": ["viz_n", "tsne_seed", "tsne_iters"],
    "synth": ["synth_seed", "synth_words", "synth_tokens", "synth_topics", "synth_planted"],
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    pass


def parse_value(key: Key, raw: Any) -> Any:
    """Convert a raw config value (string or JSON scalar/list) to the key's type."""
    try:
        if key.kind == "bool":
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if key.kind == "int":
            if isinstance(raw, float) or isinstance(raw, bool):
                raise ValueError(raw)
            return int(raw)
        if key.kind == "float":
            return float(raw)
        if key.kind == "ints":
            items = raw if isinstance(raw, (list, tuple)) else [x for x in str(raw).split(",") if x.strip()]
            return tuple(int(x) for x in items)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {raw!r} for {key.name} (expected {key.kind})") from None


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Flat ``key = value`` file, or a JSON object (a sidecar's ``config`` section if present)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from None
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from None
        data = data.get("config", data)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be an object")
        raw = dict(data)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            raw[key] = value
    out = {}
    for key, value in raw.items():
        if key not in KEY_BY_NAME:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        out[key] = parse_value(KEY_BY_NAME[key], value)
    return out


def resolve_config(
    flags: Mapping[str, Any], config_file: str | None = None, env: Mapping[str, str] | None = None
) -> dict[str, Any]:
    """Resolve every key: flag, then ``USAGECHANGE_<KEY>`` env var, then config file, then default."""
    env = os.environ if env is None else env
    from_file = read_config_file(config_file) if config_file else {}
    resolved = {}
    for key in KEYS:
        if flags.get(key.name) is not None:
            resolved[key.name] = parse_value(key, flags[key.name])
        elif ENV_PREFIX + key.name.upper() in env:
            resolved[key.name] = parse_value(key, env[ENV_PREFIX + key.name.upper()])
        elif key.name in from_file:
            resolved[key.name] = from_file[key.name]
        else:
            resolved[key.name] = key.default
    return resolved


def _jsonable(cfg: Mapping[str, Any]) -> dict[str, Any]:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(cfg.items())}


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """One subcommand invocation: resolved config, input hashes and the outputs written so far."""

    def __init__(self, stage: str, cfg: dict[str, Any]):
        self.stage = stage
        self.cfg = cfg
        self.inputs: dict[str, dict[str, str]] = {}
        self.outputs: list[Path] = []

    def input(self, role: str, path: str | Path) -> Path:
        path = Path(path)
        if not path.is_file():
            raise StageError(f"input {role} not found: {path}")
        self.inputs[role] = {"path": str(path), "sha256": sha256_file(path)}
        return path

    def output(self, path: str | Path) -> Path:
        path = Path(path)
        self.outputs.append(path)
        self.outputs.append(sidecar(path))
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def provenance(self, **extra) -> dict[str, Any]:
        meta = {
            "stage": self.stage,
            "version": __version__,
            "config": _jsonable(self.cfg),
            "inputs": dict(sorted(self.inputs.items())),
            "seed": self.cfg["seed"],
        }
        meta.update(extra)
        return meta

    def write_sidecar(self, path: Path, **extra) -> None:
        with open(sidecar(path), "w", encoding="utf-8") as fh:
            json.dump(self.provenance(**extra), fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")

    def cleanup(self) -> None:
        for p in self.outputs:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def sidecar(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _write_json(path: Path, data: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


# --- config -> module objects ---------------------------------------------------

def _workers(cfg) -> int:
    return 1 if cfg["deterministic"] else cfg["workers"]


def normalizer_config(cfg):
    from .corpus import NormalizerConfig

    return NormalizerConfig(lowercase=cfg["lowercase"], number_token=cfg["number_token"], keep_emoji=cfg["keep_emoji"])


def trainer_config(cfg, seed: int | None = None):
    from .sgns import TrainerConfig

    return TrainerConfig(
        dim=cfg["dim"],
        window=cfg["window"],
        min_count=cfg["train_min_count"],
        negatives=cfg["negatives"],
        epochs=cfg["epochs"],
        initial_lr=cfg["initial_lr"],
        subsample_threshold=cfg["subsample_threshold"],
        seed=cfg["seed"] if seed is None else seed,
        deterministic=cfg["deterministic"] or cfg["workers"] == 1,
        workers=cfg["workers"],
    )


def detector_config(cfg, run: Run | None = None):
    from .corpus import load_wordlist
    from .detect import DetectorConfig

    extra: tuple[str, ...] = ()
    if cfg["extra_stopwords"]:
        path = run.input("extra_stopwords", cfg["extra_stopwords"]) if run else cfg["extra_stopwords"]
        extra = tuple(load_wordlist(path))
    return DetectorConfig(
        k=cfg["k"],
        min_count=cfg["min_count"],
        drop_quantile=cfg["drop_quantile"],
        stopword_top_n=cfg["stopword_top_n"],
        extra_stopwords=extra,
    )


def _load_spaces(args, cfg, run: Run):
    from .corpus import FrequencyTable
    from .sgns import load_embeddings
    from .space import build_space

    spaces = []
    for side in ("a", "b"):
        E = load_embeddings(run.input(f"embeddings_{side}", getattr(args, f"emb_{side}")))
        freq = FrequencyTable.load(run.input(f"freq_{side}", getattr(args, f"freq_{side}")))
        spaces.append(build_space(E, freq, cfg["neighbor_min_freq"]))
    return spaces[0], spaces[1]


# --- subcommands -----------------------------------------------------------------

def cmd_tokenize(args, cfg, run: Run) -> None:
    from collections import Counter

    from .corpus import FrequencyTable, count_file_frequencies, tokenize_file, write_token_file

    paths = [run.input(f"corpus_{i}", p) for i, p in enumerate(args.inputs)]
    ncfg = normalizer_config(cfg)
    if args.tokens:
        counts: Counter = Counter()

        def docs():
            for p in paths:
                for doc in tokenize_file(p, ncfg, cfg["dedup"]):
                    counts.update(doc)
                    yield doc

        n = write_token_file(run.output(args.tokens), docs())
        run.write_sidecar(Path(args.tokens), n_tokens=n)
        freq = FrequencyTable(counts)
    else:
        freq = count_file_frequencies(paths, ncfg, cfg["dedup"], _workers(cfg))
    if args.freq:
        freq.save(run.output(args.freq))
        run.write_sidecar(Path(args.freq), n_tokens=freq.total_tokens, n_types=len(freq))


def cmd_train(args, cfg, run: Run) -> None:
    from .corpus import TokenFile, count_frequencies, flatten
    from .sgns import save_embeddings, train_embeddings

    tokens = TokenFile(run.input("tokens", args.tokens))
    freq = count_frequencies(flatten(tokens))
    E = train_embeddings(tokens, trainer_config(cfg), freq)
    save_embeddings(E, run.output(args.out))
    run.write_sidecar(Path(args.out), n_words=len(E.vocab.words), dim=E.dim)
    if args.freq:
        freq.save(run.output(args.freq))
        run.write_sidecar(Path(args.freq), n_tokens=freq.total_tokens, n_types=len(freq))


def cmd_detect(args, cfg, run: Run) -> None:
    from .detect import rank_usage_change

    sa, sb = _load_spaces(args, cfg, run)
    ranking = rank_usage_change(sa, sb, detector_config(cfg, run), _workers(cfg))
    _save_ranking(ranking, args.out, run)


def cmd_aligncos(args, cfg, run: Run) -> None:
    from .align import aligncos

    sa, sb = _load_spaces(args, cfg, run)
    ranking, mapping = aligncos(sa, sb, detector_config(cfg, run), cfg["unit_normalize"], cfg["mean_center"])
    _save_ranking(ranking, args.out, run)
    if args.map_out:
        mapping.save(run.output(args.map_out))
        run.write_sidecar(Path(args.map_out), residual=mapping.residual)


def _save_ranking(ranking, out, run: Run) -> None:
    from dataclasses import replace

    out = run.output(out)
    provenance = {**run.provenance(), **dict(ranking.provenance)}
    provenance["detector"] = provenance.pop("config")
    provenance["config"] = _jsonable(run.cfg)
    replace(ranking, provenance=provenance).save(out)


def cmd_stability(args, cfg, run: Run) -> None:
    from .corpus import TokenFile, count_frequencies, flatten
    from .sgns import save_embeddings, train_embeddings
    from .space import build_space
    from .stability import stability_report

    corpora = []
    for side in ("a", "b"):
        tokens = TokenFile(run.input(f"tokens_{side}", getattr(args, f"tokens_{side}")))
        corpora.append((side, tokens, count_frequencies(flatten(tokens))))
    pairs = []
    for seed in cfg["seeds"]:
        spaces = []
        for side, tokens, freq in corpora:
            E = train_embeddings(tokens, trainer_config(cfg, seed), freq)
            if args.emb_dir:
                path = run.output(Path(args.emb_dir) / f"{side.upper()}_seed{seed}.vec")
                save_embeddings(E, path)
                run.write_sidecar(path, training_seed=seed)
            spaces.append(build_space(E, freq, cfg["neighbor_min_freq"]))
        pairs.append((spaces[0], spaces[1]))
    report = stability_report(
        pairs,
        detector_config(cfg, run),
        cfg["ks"],
        cfg["sweep_min_counts"],
        cfg["sweep_ks"],
        cfg["sweep_at"],
        _workers(cfg),
    )
    out = run.output(args.out)
    _write_json(out, {**report, "seeds": list(cfg["seeds"])})
    run.write_sidecar(out)


def cmd_eval(args, cfg, run: Run) -> None:
    import warnings

    from .detect import RankedList
    from .metrics import dcg, load_gold, metric_report, spearman

    ranking = RankedList.load(run.input("ranking", args.ranking))
    gold = load_gold(run.input("gold", args.gold))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rho = spearman(ranking, gold)
        gain = dcg(ranking, gold)
    for w in caught:
        print(f"usage-change eval: warning: {w.message}", file=sys.stderr)
    prov = {"method": ranking.method_tag, "gold": gold.source_tag, "n_gold": len(gold)}
    out = run.output(args.out)
    _write_json(out, [metric_report("spearman", rho, provenance=prov), metric_report("dcg", gain, provenance=prov)])
    run.write_sidecar(out)


def cmd_report(args, cfg, run: Run) -> None:
    from .corpus import load_wordlist
    from .report import neighbor_report, save_reports_json

    words = list(args.words or [])
    if args.words_file:
        words += load_wordlist(run.input("words", args.words_file))
    if not words:
        raise StageError("no words given (use --words or --words-file)")
    sa, sb = _load_spaces(args, cfg, run)
    reports = [neighbor_report(sa, sb, w, cfg["report_n"], cfg["k"]) for w in words]
    out = run.output(args.out)
    save_reports_json(out, reports)
    run.write_sidecar(out)


def cmd_viz(args, cfg, run: Run) -> None:
    from .report import emit_svg, neighborhood_projections, save_projection_tsv

    sa, sb = _load_spaces(args, cfg, run)
    projections = neighborhood_projections(
        sa, sb, args.word, cfg["viz_n"], cfg["tsne_seed"], n_iter=cfg["tsne_iters"]
    )
    for p in projections:
        svg = run.output(f"{args.out_prefix}.{p.space_tag}.svg")
        tsv = run.output(f"{args.out_prefix}.{p.space_tag}.tsv")
        emit_svg(p, svg)
        save_projection_tsv(p, tsv)
        run.write_sidecar(svg, word=args.word, space=p.space_tag)
        run.write_sidecar(tsv, word=args.word, space=p.space_tag)


def cmd_synth(args, cfg, run: Run) -> None:
    from .synthetic import PlantedConfig, write_planted_pair

    pc = PlantedConfig(
        n_words=cfg["synth_words"],
        tokens_per_corpus=cfg["synth_tokens"],
        n_topics=cfg["synth_topics"],
        n_planted=cfg["synth_planted"],
        seed=cfg["synth_seed"],
    )
    out = Path(args.out_dir)
    for name in ("corpus_a.txt", "corpus_b.txt", "planted.txt"):
        run.output(out / name)
    pair = write_planted_pair(out, pc)
    meta = pair.metadata()
    for name in ("corpus_a.txt", "corpus_b.txt", "planted.txt"):
        run.write_sidecar(out / name, generator=meta)


COMMANDS: dict[str, tuple[Callable, list[str], str]] = {
    "tokenize": (cmd_tokenize, ["tokenize"], "normalize and tokenize raw corpora; count frequencies"),
    "train": (cmd_train, ["train"], "train SGNS embeddings on a tokenized corpus"),
    "detect": (cmd_detect, ["detect"], "rank words by nearest-neighbor intersection"),
    "aligncos": (cmd_aligncos, ["detect", "align"], "rank words by cosine distance after Procrustes alignment"),
    "stability": (cmd_stability, ["train", "detect", "align", "stability"], "compare rankings across training seeds"),
    "eval": (cmd_eval, [], "Spearman correlation and DCG of a ranking against gold scores"),
    "report": (cmd_report, ["detect", "report"], "per-word neighbor difference reports"),
    "viz": (cmd_viz, ["detect", "viz"], "2-D projections of a word's neighborhoods as SVG"),
    "synth": (cmd_synth, ["synth"], "generate a synthetic corpus pair with planted usage changes"),
}


def _add_keys(parser: argparse.ArgumentParser, names) -> None:
    for name in names:
        key = KEY_BY_NAME[name]
        flag = "--" + name.replace("_", "-")
        if key.kind == "bool":
            parser.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None, help=key.help)
        else:
            metavar = "N,N,..." if key.kind == "ints" else key.kind.upper()
            parser.add_argument(flag, dest=name, default=None, metavar=metavar,
                                help=f"{key.help} (default: {key.default})")


def _add_pair_inputs(p: argparse.ArgumentParser) -> None:
    for side in ("a", "b"):
        p.add_argument(f"--emb-{side}", required=True, help=f"embeddings of corpus {side.upper()}")
        p.add_argument(f"--freq-{side}", required=True, help=f"frequency table of corpus {side.upper()}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="usage-change", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (func, groups, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="config file (key = value lines, or a JSON provenance sidecar)")
        if name == "tokenize":
            p.add_argument("inputs", nargs="+", help="raw corpus files, one document per line (.gz allowed)")
            p.add_argument("--tokens", help="write tokenized documents here")
            p.add_argument("--freq", help="write the frequency table here")
        elif name == "train":
            p.add_argument("tokens", help="tokenized corpus, one document per line")
            p.add_argument("--out", required=True, help="embedding file (word2vec text format)")
            p.add_argument("--freq", help="also write the corpus frequency table here")
        elif name in ("detect", "aligncos"):
            _add_pair_inputs(p)
            p.add_argument("--out", required=True, help="ranking TSV (a .json sidecar is written next to it)")
            if name == "aligncos":
                p.add_argument("--map-out", help="write the fitted orthogonal map here")
        elif name == "stability":
            p.add_argument("--tokens-a", required=True)
            p.add_argument("--tokens-b", required=True)
            p.add_argument("--out", required=True, help="JSON with intersection@k curves and sweeps")
            p.add_argument("--emb-dir", help="also keep the per-seed embeddings here")
        elif name == "eval":
            p.add_argument("--ranking", required=True)
            p.add_argument("--gold", required=True, help="word<TAB>score file")
            p.add_argument("--out", required=True)
        elif name == "report":
            _add_pair_inputs(p)
            p.add_argument("--words", nargs="+")
            p.add_argument("--words-file")
            p.add_argument("--out", required=True)
        elif name == "viz":
            _add_pair_inputs(p)
            p.add_argument("--word", required=True)
            p.add_argument("--out-prefix", required=True, help="writes <prefix>.A.svg, <prefix>.B.svg and TSVs")
        elif name == "synth":
            p.add_argument("--out-dir", required=True)
        _add_keys(p, GROUPS["common"] + [k for g in groups for k in GROUPS[g]])
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k.name: getattr(args, k.name, None) for k in KEYS}
    try:
        cfg = resolve_config(flags, args.config)
    except ConfigError as e:
        parser.print_usage(sys.stderr)
        print(f"usage-change {args.command}: error: {e}", file=sys.stderr)
        return 2
    run = Run(args.command, cfg)
    try:
        args.func(args, cfg, run)
    except KeyboardInterrupt:
        run.cleanup()
        print(f"usage-change {args.command}: interrupted; partial outputs removed", file=sys.stderr)
        return 130
    except Exception as e:  # noqa: BLE001 - every failure maps to exit status 1
        run.cleanup()
        msg = str(e) or type(e).__name__
        print(f"usage-change {args.command}: error: {msg}; partial outputs removed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
