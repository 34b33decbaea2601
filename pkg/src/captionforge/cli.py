"""``captionforge`` command-line entry point.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
Every subcommand that writes ``--out FILE`` also writes ``FILE.manifest.json``
recording the resolved configuration, input digests, seed and version.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from captionforge import FORMAT_VERSION, __version__
from captionforge import io
from captionforge.decode import beam_search
from captionforge.ensemble import EnsembleModel, EnsembleSpec
from captionforge.errors import CaptionForgeError, InputError, MismatchedIds, NumericalError
from captionforge.metrics import build_idf, score_corpus
from captionforge.policy import PolicyModel, PolicyParams
from captionforge.reward import HybridWeights, hybrid_reward
from captionforge.text import (
    MAX_LEN,
    MIN_COUNT,
    Caption,
    Language,
    Vocabulary,
    build_vocabulary,
    detokenize,
    encode,
    tokenize,
    truncate,
)

log = logging.getLogger("captionforge")

JOBS_ENV = "CAPTIONFORGE_JOBS"


def _jobs(args) -> int:
    if args.jobs is not None:
        jobs = args.jobs
    else:
        raw = os.environ.get(JOBS_ENV, "1")
        try:
            jobs = int(raw)
        except ValueError:
            raise InputError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise InputError(f"--jobs must be >= 1, got {jobs}")
    return jobs


def _write_manifest(out, command, config: dict, inputs: dict, seed=None):
    manifest = {
        "tool": "captionforge",
        "version": __version__,
        "format_version": FORMAT_VERSION,
        "subcommand": command,
        "config": config,
        "inputs": {name: {"path": path, "sha256": io.file_digest(path)} for name, path in inputs.items()
                   if path is not None},
        "seed": seed,
    }
    io.write_json(f"{out}.manifest.json", manifest)


def _tokenized(texts: dict[str, list[str]], language, max_len=None) -> dict[str, list[list[str]]]:
    out = {}
    for key, items in texts.items():
        toks = [tokenize(t, language) for t in items]
        out[key] = [truncate(t, max_len) for t in toks] if max_len else toks
    return out


def _stem(path) -> str:
    root, ext = os.path.splitext(path)
    return root if ext else path


# ---------------------------------------------------------------- vocab

def cmd_vocab(args):
    lang = Language.parse(args.lang)
    texts = io.read_captions_any(args.corpus)
    corpus = [Caption(key, toks, lang)
              for key, caps in _tokenized(texts, lang, args.max_len).items() for toks in caps]
    vocab = build_vocabulary(corpus, args.min_count)
    vocab.save(args.out)
    _write_manifest(args.out, "vocab", {"lang": lang.value, "min_count": args.min_count,
                                        "max_len": args.max_len}, {"corpus": args.corpus})
    log.info("vocabulary of %d tokens written to %s", len(vocab), args.out)


# ---------------------------------------------------------------- score / reward

def _load_pairs(args, lang):
    cands = io.read_candidates(args.cands)
    refs = io.read_references(args.refs)
    if set(cands) != set(refs):
        diff = sorted(set(cands) ^ set(refs))
        raise MismatchedIds(f"ids differ between {args.cands} and {args.refs}, e.g. {diff[:5]}")
    cand_toks = {k: tokenize(v, lang) for k, v in cands.items()}
    return cand_toks, _tokenized(refs, lang)


def cmd_score(args):
    lang = Language.parse(args.lang)
    cands, refs = _load_pairs(args, lang)
    report = score_corpus(cands, refs, cider=args.cider, language=lang, jobs=_jobs(args))
    io.write_json(args.out, report.to_json())
    _write_manifest(args.out, "score", {"lang": lang.value, "cider": args.cider},
                    {"cands": args.cands, "refs": args.refs})
    if args.plot:
        from captionforge.plotting import plot_report, write_report_tsv

        write_report_tsv(_stem(args.out) + ".tsv", report)
        plot_report(report, _stem(args.out) + ".png")
    for key, value in report.corpus.items():
        log.info("%-8s %.4f", key, value)


def cmd_reward(args):
    lang = Language.parse(args.lang)
    cands, refs = _load_pairs(args, lang)
    weights = HybridWeights.load(args.weights) if args.weights else HybridWeights()
    idf_refs = _tokenized(io.read_references(args.idf_refs), lang) if args.idf_refs else refs
    idf = build_idf(idf_refs[k] for k in sorted(idf_refs))
    rows = [{"id": k, "reward": hybrid_reward(cands[k], refs[k], weights, idf, lang)} for k in sorted(cands)]
    if args.out:
        io.write_jsonl(args.out, rows)
        _write_manifest(args.out, "reward", {"lang": lang.value, "weights": dict(weights.items())},
                        {"cands": args.cands, "refs": args.refs, "weights": args.weights,
                         "idf_refs": args.idf_refs})
    else:
        for row in rows:
            sys.stdout.write(io.json.dumps(row, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------- train

def cmd_train(args):
    from captionforge.plotting import plot_curve, write_curve_tsv
    from captionforge.training import TrainConfig, learning_rate, train_scst, train_xent

    config = TrainConfig.preset(
        args.preset, seed=args.seed, batch_size=args.batch_size, schedule=args.schedule, lr=args.lr,
        rl_lr=args.rl_lr, hidden=args.hidden, temperature=args.temperature, max_len=args.max_len,
        label_smoothing=args.label_smoothing,
        **({"xe_epochs": args.epochs} if args.phase == "xe" else {"rl_epochs": args.epochs}))
    features = io.read_features(args.features)
    raw = io.read_captions_any(args.corpus)
    if args.init:
        params, vocab, lang, _ = io.load_checkpoint(args.init)
        if args.lang and Language.parse(args.lang) is not lang:
            raise InputError(f"--lang {args.lang} does not match checkpoint language {lang.value}")
    else:
        if args.phase == "scst":
            raise InputError("--phase scst needs --init with a cross-entropy checkpoint")
        lang = Language.parse(args.lang or "en")
        params = vocab = None
    refs = _tokenized(raw, lang, config.max_len)
    if vocab is None:
        if args.vocab:
            vocab = Vocabulary.load(args.vocab)
        else:
            vocab = build_vocabulary([Caption(k, t, lang) for k, caps in refs.items() for t in caps],
                                     args.min_count)
    feature_size = len(next(iter(features.values())))
    if params is None:
        params = PolicyParams.init(len(vocab), config.hidden, feature_size, config.seed, config.init_scale)
    elif params.feature_size != feature_size:
        raise InputError(f"features have {feature_size} dims, checkpoint expects {params.feature_size}")

    weights = None
    if args.phase == "xe":
        enc = {k: [encode(t, vocab) for t in caps] for k, caps in refs.items()}
        params, curve = train_xent(params, enc, features, config)
        rows = [("xe", e, v, learning_rate(config, e)) for e, v in enumerate(curve, start=1)]
        ylabel, first = "label-smoothed XE loss", 1
    else:
        weights = HybridWeights.load(args.weights) if args.weights else HybridWeights()
        idf = build_idf(refs[k] for k in sorted(refs))
        params, curve = train_scst(params, refs, features, vocab, weights, idf, config, lang)
        rows = [("scst", e, v, learning_rate(config, max(e, 1), "scst")) for e, v in enumerate(curve)]
        ylabel, first = "mean greedy hybrid reward", 0
    if not params.all_finite():
        raise NumericalError("training produced non-finite parameters")

    meta = {"phase": args.phase, "config": config.to_json(), "curve": curve,
            "weights": dict(weights.items()) if weights else None}
    io.save_checkpoint(args.out, params, vocab, lang, meta)
    _write_manifest(args.out, "train", {"phase": args.phase, "lang": lang.value, **config.to_json()},
                    {"corpus": args.corpus, "features": args.features, "vocab": args.vocab,
                     "init": args.init, "weights": args.weights}, seed=config.seed)
    write_curve_tsv(_stem(args.out) + ".curve.tsv", rows)
    if not args.no_plot:
        plot_curve(curve, _stem(args.out) + ".curve.png", ylabel, f"{args.phase} training", first)
    log.info("%s curve: %s", args.phase, " ".join(f"{v:.4f}" for v in curve))


# ---------------------------------------------------------------- decode

def _decode_all(model, vocab, features, args, jobs):
    keys = sorted(features)

    def one(key):
        hyps = beam_search(model, features[key], args.beam, args.max_len, not args.no_length_norm)
        best = hyps[0]
        toks = [vocab.id_to_token[i] for i in best.ids]
        return {"id": key, "caption": detokenize(toks), "logprob": best.logprob}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, keys))
    return [one(k) for k in keys]


def cmd_decode(args):
    params, vocab, lang, _ = io.load_checkpoint(args.ckpt)
    model = PolicyModel(params, vocab=vocab)
    rows = _decode_all(model, vocab, _features_for(model, args.features), args, _jobs(args))
    io.write_jsonl(args.out, rows)
    _write_manifest(args.out, "decode", {"beam": args.beam, "max_len": args.max_len,
                                         "length_norm": not args.no_length_norm},
                    {"ckpt": args.ckpt, "features": args.features})


def _features_for(model, path):
    features = io.read_features(path)
    size = len(next(iter(features.values())))
    expected = model.members[0].params.feature_size if isinstance(model, EnsembleModel) \
        else model.params.feature_size
    if size != expected:
        raise InputError(f"{path}: features have {size} dims, model expects {expected}")
    return features


def cmd_ensemble_decode(args):
    spec = EnsembleSpec.load(args.spec)
    members = []
    for path in spec.members:
        params, vocab, _, _ = io.load_checkpoint(path)
        members.append(PolicyModel(params, vocab=vocab))
    model = EnsembleModel(members, spec.weights, args.fusion)
    rows = _decode_all(model, model.vocab, _features_for(model, args.features), args, _jobs(args))
    io.write_jsonl(args.out, rows)
    inputs = {"spec": args.spec, "features": args.features}
    inputs.update({f"member{i}": p for i, p in enumerate(spec.members)})
    _write_manifest(args.out, "ensemble-decode", {"beam": args.beam, "max_len": args.max_len,
                                                  "fusion": args.fusion, "weights": model.weights,
                                                  "length_norm": not args.no_length_norm}, inputs)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="captionforge", description="Caption metrics, hybrid-reward training and beam-search decoding.",
        epilog="exit codes: 0 success, 2 usage or input error, 3 numerical failure")
    parser.add_argument("--version", action="version",
                        version=f"captionforge {__version__} (format {FORMAT_VERSION})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    # -v is accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    def add_jobs(p):
        p.add_argument("--jobs", type=int, default=None,
                       help=f"worker threads (default: ${JOBS_ENV} or 1); results do not depend on it")

    p = sub.add_parser("vocab", parents=[common], help="build a vocabulary from a caption corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lang", default="en")
    p.add_argument("--min-count", type=int, default=MIN_COUNT)
    p.add_argument("--max-len", type=int, default=MAX_LEN)
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("score", parents=[common], help="score candidates against references")
    p.add_argument("--cands", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cider", choices=("d", "plain"), default="d")
    p.add_argument("--lang", default="en")
    p.add_argument("--plot", action="store_true", help="also write <out>.tsv and <out>.png")
    add_jobs(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("reward", parents=[common], help="per-id hybrid rewards as JSON lines")
    p.add_argument("--cands", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--weights")
    p.add_argument("--idf-refs", help="reference corpus for document frequencies (default: --refs)")
    p.add_argument("--lang", default="en")
    p.add_argument("--out")
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("train", parents=[common], help="cross-entropy or self-critical training")
    p.add_argument("--phase", choices=("xe", "scst"), required=True)
    p.add_argument("--corpus", required=True, help="reference captions (JSON lines)")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab")
    p.add_argument("--init", help="checkpoint to start from (required for scst)")
    p.add_argument("--weights", help="hybrid reward weights JSON (scst)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=("full", "desk"), default="full")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--schedule", choices=("transformer", "constant", "xlinear"))
    p.add_argument("--lr", type=float)
    p.add_argument("--rl-lr", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--label-smoothing", type=float)
    p.add_argument("--max-len", type=int)
    p.add_argument("--min-count", type=int, default=MIN_COUNT)
    p.add_argument("--lang")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("decode", cmd_decode, "beam-search decode with one checkpoint"),
                                 ("ensemble-decode", cmd_ensemble_decode, "beam-search with a fused ensemble")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "decode":
            p.add_argument("--ckpt", required=True)
        else:
            p.add_argument("--spec", required=True)
            p.add_argument("--fusion", choices=("prob", "log"), default="prob")
        p.add_argument("--features", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--beam", type=int, default=3)
        p.add_argument("--max-len", type=int, default=MAX_LEN)
        p.add_argument("--no-length-norm", action="store_true")
        add_jobs(p)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"captionforge: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (CaptionForgeError, ValueError, OSError) as exc:
        print(f"captionforge: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
