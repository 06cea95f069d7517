"""Batch command-line interface.

Subcommands: `synth` (generate a synthetic corpus with ground truth),
`embed-table` (precompute segment embeddings), `segment` (run sampling
chains, optionally with outer exemplar-refinement passes), `train-cae`,
`encode` (extract features from a trained network) and `eval` (score a
segmentation against alignments). Every subcommand prints its resolved
configuration and seed; outputs are bit-reproducible given both. The
EMBEDSEG_THREADS environment variable sets the chain fan-out width only.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from functools import partial

import numpy as np

from . import config as cfg
from .cae import (
    TrainConfig, build_frame_pairs, encode_corpus, load_mlp, load_word_pairs,
    pretrain_stacked, save_mlp, train_cae,
)
from .corpus import (
    frames_from_ms, load_alignments, load_feature_corpus, save_alignments,
    save_corpus,
)
from .embed import downsample_embed, precompute_table, refine_reference_set, EmbeddingTable
from .eigenmaps import eigenmaps_embed, fit_eigenmaps
from .evaluate import evaluate_segmentation
from .segment import (
    AnnealSchedule, ChainConfig, Constraints, allowed_segments,
    load_segmentation, run_chain, write_segmentation,
)
from .synth import SynthSpec, generate
from .cae import save_word_pairs

logger = logging.getLogger(__name__)


def _int_pair(text):
    lo, hi = (int(v) for v in text.split(","))
    return (lo, hi)


def _float_list(text):
    return [float(v) for v in text.split(",")]


def _int_list(text):
    return [int(v) for v in text.split(",")]


def _resolve(args, file_cfg, section, defaults, casts):
    """Merge CLI > config file > profile/built-in defaults into one dict."""
    resolved = {}
    for name, default in defaults.items():
        value = getattr(args, name, None)
        if value is None:
            raw = cfg.lookup(file_cfg, section, name)
            if raw is not None:
                cast = casts.get(name, str)
                value = cast(raw)
        if value is None:
            value = default
        resolved[name] = value
    return resolved


def _print_resolved(section, resolved, seed):
    print("# resolved configuration [%s]" % section)
    for name in sorted(resolved):
        print("%s.%s = %s" % (section, name, resolved[name]))
    print("%s.seed = %d" % (section, seed))


def _load_file_cfg(args):
    return cfg.parse_config_file(args.config) if args.config else {}


def _corpus_frame_period(corpus):
    periods = {u.frame_period_ms for u in corpus}
    if len(periods) != 1:
        raise ValueError("inconsistent frame periods across corpus: %s" % sorted(periods))
    return periods.pop()


def load_syllable_positions(path, corpus):
    """Candidate-boundary file: lines `utt_id pos1 pos2 ...` (frames, ascending)."""
    positions = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            utt_id = parts[0]
            if utt_id not in corpus:
                raise ValueError("%s line %d: unknown utterance '%s'" % (path, lineno, utt_id))
            positions[utt_id] = sorted(int(p) for p in parts[1:])
    missing = [u.id for u in corpus if u.id not in positions]
    if missing:
        raise ValueError("no syllable positions for utterances: %s" % missing[:5])
    return positions


def _build_constraints(resolved, corpus):
    period = _corpus_frame_period(corpus)
    min_dur = max(1, frames_from_ms(resolved["min_dur_ms"], period)) if resolved["min_dur_ms"] > 0 else 1
    max_dur = frames_from_ms(min(resolved["max_dur_ms"], 1e9), period)
    if resolved["constraint_mode"] == "grid":
        return Constraints(
            boundary_interval_frames=max(1, frames_from_ms(resolved["interval_ms"], period)),
            min_dur_frames=min_dur,
            max_dur_frames=max_dur,
        )
    if not resolved.get("syllables"):
        raise ValueError("syllable constraint mode needs --syllables FILE")
    return Constraints(
        min_dur_frames=min_dur,
        max_dur_frames=max_dur,
        allowed_positions=load_syllable_positions(resolved["syllables"], corpus),
        max_units_per_word=resolved["max_units"],
    )


def _random_reference_set(corpus, constraints, n_ref, rng):
    """Uniformly random allowed segments as the bootstrap exemplar set."""
    keys = []
    for utt in corpus:
        keys.extend((utt.id, s, e) for s, e in allowed_segments(utt, constraints))
    keys.sort()
    idx = rng.choice(len(keys), size=min(n_ref, len(keys)), replace=len(keys) < n_ref)
    return [corpus[u].frames[s:e] for u, s, e in (keys[i] for i in np.atleast_1d(idx))]


# ---------------------------------------------------------------------------


_SYNTH_DEFAULTS = dict(
    vocab_size=5, dim=4, frames_per_word=(20, 40), words_per_utt=(3, 6),
    n_utterances=100, n_speakers=1, separation=6.0, speaker_offset=0.0,
    noise_std=1.0, n_pairs=0, pair_noise=0.0,
)
_SYNTH_CASTS = dict(
    vocab_size=int, dim=int, frames_per_word=_int_pair, words_per_utt=_int_pair,
    n_utterances=int, n_speakers=int, separation=float, speaker_offset=float,
    noise_std=float, n_pairs=int, pair_noise=float,
)


def cmd_synth(args):
    file_cfg = _load_file_cfg(args)
    r = _resolve(args, file_cfg, "synth", _SYNTH_DEFAULTS, _SYNTH_CASTS)
    _print_resolved("synth", r, args.seed)
    spec = SynthSpec(
        vocab_size=r["vocab_size"], dim=r["dim"],
        frames_per_word=r["frames_per_word"], words_per_utterance=r["words_per_utt"],
        n_utterances=r["n_utterances"], n_speakers=r["n_speakers"],
        prototype_separation=r["separation"], speaker_offset_scale=r["speaker_offset"],
        noise_std=r["noise_std"], n_pairs=r["n_pairs"], pair_noise_rate=r["pair_noise"],
    )
    corpus, alignments, pairs = generate(spec, cfg.subsystem_rng(args.seed, "synth"))
    os.makedirs(args.out, exist_ok=True)
    save_corpus(corpus, args.out)
    save_alignments(alignments, os.path.join(args.out, "words.align"))
    # synthetic words are atomic: the phone tier coincides with the word tier
    save_alignments(alignments, os.path.join(args.out, "phones.align"))
    if pairs:
        save_word_pairs(pairs, os.path.join(args.out, "pairs.txt"))
    print("wrote %d utterances to %s" % (len(corpus), args.out))
    return 0


_CONSTRAINT_DEFAULT_KEYS = (
    "constraint_mode", "interval_ms", "min_dur_ms", "max_dur_ms", "max_units",
)
_CONSTRAINT_CASTS = dict(
    constraint_mode=str, interval_ms=float, min_dur_ms=float, max_dur_ms=float,
    max_units=int, syllables=str,
)
_EMBED_CASTS = dict(
    backend=str, n_keep=int, noise_factor=float, n_ref=int, d_emb=int,
    knn_k=int, sigma_kernel=float, reg_xi=float,
)


def _embed_fn_for(resolved, corpus, constraints, seed):
    """Returns (embed_fn, eigenmap_model_or_None) for the chosen backend."""
    if resolved["backend"] == "downsample":
        return partial(downsample_embed, n_keep=resolved["n_keep"]), None
    ref = _random_reference_set(
        corpus, constraints, resolved["n_ref"], cfg.subsystem_rng(seed, "init")
    )
    model = fit_eigenmaps(
        ref, knn_k=resolved["knn_k"], sigma_k=resolved["sigma_kernel"],
        reg_xi=resolved["reg_xi"], d_emb=resolved["d_emb"],
    )
    return partial(eigenmaps_embed, model), model


def cmd_embed_table(args):
    file_cfg = _load_file_cfg(args)
    profile = cfg.SEGMENT_PROFILES[args.profile]
    defaults = {k: profile[k] for k in _CONSTRAINT_DEFAULT_KEYS}
    defaults.update(
        syllables=None,
        backend=profile["backend"], n_keep=profile["n_keep"],
        noise_factor=profile["noise_factor"], n_ref=profile["n_ref"],
        d_emb=profile["d_emb"], knn_k=profile["knn_k"],
        sigma_kernel=profile["sigma_kernel"], reg_xi=profile["reg_xi"],
    )
    r = _resolve(args, file_cfg, "embed_table", defaults,
                 {**_CONSTRAINT_CASTS, **_EMBED_CASTS})
    _print_resolved("embed_table", r, args.seed)
    corpus = load_feature_corpus(args.corpus)
    constraints = _build_constraints(r, corpus)
    embed_fn, _ = _embed_fn_for(r, corpus, constraints, args.seed)
    table = precompute_table(
        corpus, constraints, embed_fn, noise_factor=r["noise_factor"],
        seed=cfg.subsystem_seed_int(args.seed, "embedding-noise"),
    )
    table.save(args.out)
    print("wrote %d embeddings (dim %d) to %s" % (len(table), table.d_emb, args.out))
    return 0


def _segment_defaults(profile):
    d = {k: profile[k] for k in _CONSTRAINT_DEFAULT_KEYS}
    d.update(
        syllables=None,
        backend=profile["backend"], n_keep=profile["n_keep"],
        noise_factor=profile["noise_factor"], n_ref=profile["n_ref"],
        d_emb=profile["d_emb"], knn_k=profile["knn_k"],
        sigma_kernel=profile["sigma_kernel"], reg_xi=profile["reg_xi"],
        K=profile["K"], k_fraction=profile["k_fraction"],
        sigma_sq=profile["sigma_sq"], kappa0=profile["kappa0"],
        alpha_a=profile["alpha_a"],
        iters_fixed=profile["iters_fixed"], iters=profile["iters"],
        exponents=profile["exponents"], n_chains=profile["n_chains"],
        refine_passes=profile["refine_passes"],
        n_discovered=profile["n_discovered"], n_random=profile["n_random"],
        p_boundary_init=profile["p_boundary_init"],
        lm_mode=profile["lm_mode"], lambda_interp=profile["lambda_interp"],
        b_bi=profile["b_bi"], eta=profile["eta"],
        table=None,
    )
    return d


_SEGMENT_CASTS = dict(
    K=int, k_fraction=float, sigma_sq=float, kappa0=float, alpha_a=float,
    iters_fixed=int, iters=int, exponents=_float_list, n_chains=int,
    refine_passes=int, n_discovered=int, n_random=int, p_boundary_init=float,
    lm_mode=str, lambda_interp=float, b_bi=float, eta=float, table=str,
    **_CONSTRAINT_CASTS, **_EMBED_CASTS,
)


def _count_syllable_tokens(constraints):
    return sum(len(p) for p in constraints.allowed_positions.values())


def _run_chains(corpus, table, chain_cfg, seed, n_chains, pass_idx):
    """Run chains (parallel if EMBEDSEG_THREADS > 1); returns index->record/None."""
    n_threads = int(os.environ.get("EMBEDSEG_THREADS", "1"))

    def one(i):
        rng = cfg.subsystem_rng(seed, "sampler", pass_idx, i)
        return run_chain(corpus, table, chain_cfg, rng)

    records = [None] * n_chains
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futures = {i: pool.submit(one, i) for i in range(n_chains)}
        for i, fut in futures.items():
            try:
                records[i] = fut.result()
            except Exception:
                logger.exception("chain %d failed", i)
    else:
        for i in range(n_chains):
            try:
                records[i] = one(i)
            except Exception:
                logger.exception("chain %d failed", i)
    return records


def cmd_segment(args):
    file_cfg = _load_file_cfg(args)
    profile = cfg.SEGMENT_PROFILES[args.profile]
    r = _resolve(args, file_cfg, "segment", _segment_defaults(profile), _SEGMENT_CASTS)
    _print_resolved("segment", r, args.seed)
    corpus = load_feature_corpus(args.corpus)
    constraints = _build_constraints(r, corpus)

    K = r["K"]
    if K is None:
        if r["k_fraction"] is None or constraints.mode != "syllable":
            raise ValueError("give --K, or --k-fraction with syllable constraints")
        K = max(1, round(r["k_fraction"] * _count_syllable_tokens(constraints)))
        logger.info("component count from syllable fraction: K = %d", K)

    schedule = AnnealSchedule(r["exponents"], r["iters_fixed"], r["iters"])
    chain_cfg = ChainConfig(
        constraints, K, schedule,
        sigma_sq=r["sigma_sq"], kappa0=r["kappa0"], alpha_a=r["alpha_a"],
        p_boundary_init=r["p_boundary_init"], lm_mode=r["lm_mode"],
        lambda_interp=r["lambda_interp"], b_bi=r["b_bi"], eta=r["eta"],
    )
    noise_seed = cfg.subsystem_seed_int(args.seed, "embedding-noise")

    n_passes = r["refine_passes"] if r["backend"] == "eigenmaps" else 1
    embed_fn, model = None, None
    records = None
    for pass_idx in range(n_passes):
        if r["table"] is not None and pass_idx == 0:
            table = EmbeddingTable.load(r["table"])
        else:
            if embed_fn is None:
                embed_fn, model = _embed_fn_for(r, corpus, constraints, args.seed)
            table = precompute_table(
                corpus, constraints, embed_fn,
                noise_factor=r["noise_factor"], seed=noise_seed,
            )
        records = _run_chains(corpus, table, chain_cfg, args.seed, r["n_chains"], pass_idx)
        first = next((rec for rec in records if rec is not None), None)
        if first is None:
            logger.error("all chains failed in pass %d", pass_idx)
            return 1
        if r["backend"] == "eigenmaps" and pass_idx < n_passes - 1:
            ref = refine_reference_set(
                first.state, table, corpus, r["n_discovered"], r["n_random"],
                cfg.subsystem_rng(args.seed, "refine", pass_idx),
            )
            model = fit_eigenmaps(
                ref, knn_k=r["knn_k"], sigma_k=r["sigma_kernel"],
                reg_xi=r["reg_xi"], d_emb=r["d_emb"],
            )
            embed_fn = partial(eigenmaps_embed, model)
            logger.info("refined reference set: %d exemplars", len(ref))

    os.makedirs(args.out_dir, exist_ok=True)
    failed = 0
    for i, record in enumerate(records):
        if record is None:
            failed += 1
            continue
        write_segmentation(record.state, os.path.join(args.out_dir, "chain%d.seg" % i))
        record.write_summary(os.path.join(args.out_dir, "chain%d.summary" % i))
    print(
        "wrote %d/%d chains to %s" % (len(records) - failed, len(records), args.out_dir)
    )
    return 1 if failed else 0


_CAE_CASTS = dict(
    batch_size=int, epochs_pretrain=int, epochs_cae=int, lr_pretrain=float,
    lr_cae=float, hidden_dims=_int_list, encode_layer=int,
)


def cmd_train_cae(args):
    file_cfg = _load_file_cfg(args)
    profile = dict(cfg.CAE_PROFILES[args.profile])
    profile.pop("both_directions", None)
    r = _resolve(args, file_cfg, "train_cae", profile, _CAE_CASTS)
    r["both_directions"] = bool(
        args.both_directions
        or cfg.lookup(file_cfg, "train_cae", "both_directions") in ("1", "true", "yes")
        or cfg.CAE_PROFILES[args.profile]["both_directions"]
    )
    _print_resolved("train_cae", r, args.seed)
    corpus = load_feature_corpus(args.corpus)
    word_pairs = load_word_pairs(args.pairs)
    train_cfg = TrainConfig(
        batch_size=r["batch_size"], epochs_pretrain=r["epochs_pretrain"],
        epochs_cae=r["epochs_cae"], lr_pretrain=r["lr_pretrain"],
        lr_cae=r["lr_cae"], seed=args.seed,
    )
    rng = cfg.subsystem_rng(args.seed, "minibatch-shuffle")
    data = np.concatenate([u.frames for u in corpus], axis=0)
    net = pretrain_stacked(data, r["hidden_dims"], train_cfg, rng)
    pairs = build_frame_pairs(word_pairs, corpus, both_directions=r["both_directions"])
    logger.info("%d frame pairs from %d word pairs", len(pairs), len(word_pairs))
    net = train_cae(net, pairs, train_cfg, rng)
    save_mlp(net, args.out)
    print("wrote network (%s) to %s" % ("-".join(map(str, net.layer_dims)), args.out))
    return 0


def cmd_encode(args):
    corpus = load_feature_corpus(args.corpus)
    net = load_mlp(args.net)
    layer = args.layer if args.layer is not None else net.n_hidden
    _print_resolved("encode", dict(net=args.net, layer=layer), args.seed)
    encoded = encode_corpus(net, corpus, layer)
    list_path = save_corpus(encoded, args.out_dir)
    print("wrote %d encoded utterances (dim %d) to %s" % (len(encoded), encoded.dim, list_path))
    return 0


def cmd_eval(args):
    corpus = load_feature_corpus(args.corpus)
    pred = load_segmentation(args.segmentation)
    words = load_alignments(args.words, corpus, level="word")
    phones = load_alignments(args.phones, corpus, level="phone") if args.phones else None
    period = _corpus_frame_period(corpus)
    tol = max(1, frames_from_ms(args.tol_ms, period))
    overlap = max(1, frames_from_ms(args.overlap_ms, period))
    genders = None
    if args.genders:
        genders = dict(
            line.split() for line in open(args.genders) if line.strip()
        )
    _print_resolved(
        "eval",
        dict(segmentation=args.segmentation, tol_frames=tol, overlap_frames=overlap),
        args.seed,
    )
    report = evaluate_segmentation(
        pred, corpus, words, phones,
        boundary_tolerance=tol, overlap_frames=overlap, gender_of_speaker=genders,
    )
    print(report.format_table())
    if args.out:
        report.save(args.out)
    return 0


# ---------------------------------------------------------------------------


def _add_option(parser, name, cast, help_text=""):
    kwargs = dict(default=None, help=help_text)
    if cast in (int, float, str):
        kwargs["type"] = cast
    else:
        kwargs["type"] = cast
    parser.add_argument("--" + name.replace("_", "-"), dest=name, **kwargs)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="embedseg",
        description="Unsupervised word segmentation and clustering of speech features.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, default=0, help="master seed")

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    common(p)
    p.add_argument("--out", required=True)
    for name, cast in _SYNTH_CASTS.items():
        _add_option(p, name, cast)

    p = sub.add_parser("embed-table", help="precompute allowed-segment embeddings")
    common(p)
    p.add_argument("--corpus", required=True, help="corpus list file")
    p.add_argument("--out", required=True, help="output table file")
    p.add_argument("--profile", default="small-vocab", choices=sorted(cfg.SEGMENT_PROFILES))
    for name, cast in {**_CONSTRAINT_CASTS, **_EMBED_CASTS}.items():
        _add_option(p, name, cast)

    p = sub.add_parser("segment", help="run segmentation and clustering chains")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--profile", default="small-vocab", choices=sorted(cfg.SEGMENT_PROFILES))
    for name, cast in _SEGMENT_CASTS.items():
        _add_option(p, name, cast)

    p = sub.add_parser("train-cae", help="train the correspondence autoencoder")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--pairs", required=True, help="word-pair file")
    p.add_argument("--out", required=True, help="output network file")
    p.add_argument("--profile", default="cae-large", choices=sorted(cfg.CAE_PROFILES))
    p.add_argument("--both-directions", action="store_true", default=None)
    for name, cast in _CAE_CASTS.items():
        _add_option(p, name, cast)

    p = sub.add_parser("encode", help="encode a corpus with a trained network")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--net", required=True)
    p.add_argument("--layer", type=int, default=None, help="1-based hidden layer")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("eval", help="score a segmentation against alignments")
    common(p)
    p.add_argument("--segmentation", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--words", required=True, help="word alignment file")
    p.add_argument("--phones", default=None, help="phone alignment file")
    p.add_argument("--genders", default=None, help="speaker-gender map file")
    p.add_argument("--tol-ms", type=float, default=40.0, help="boundary tolerance")
    p.add_argument("--overlap-ms", type=float, default=30.0, help="phone-coverage rule")
    p.add_argument("--out", default=None, help="report file")

    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "embed-table": cmd_embed_table,
    "segment": cmd_segment,
    "train-cae": cmd_train_cae,
    "encode": cmd_encode,
    "eval": cmd_eval,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:
        logger.error("%s", exc)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
