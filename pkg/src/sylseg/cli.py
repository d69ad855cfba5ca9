"""Command-line entry point.

Exit codes: 0 success, 1 invalid arguments or configuration, 2 bad or
missing data.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import core, segment, units
from .bench import BenchConfig, run_bench, write_bench_csv
from .distill.train import DistillConfig, load_params, read_config_file, save_state, train_toy, write_log
from .evaluation import (
    DEFAULT_TOLERANCE_S,
    MetricsReport,
    MissingAlignment,
    corpus_boundary_metrics,
    purity_metrics,
    reference_boundaries,
)
from .ssabx import (
    BANDS,
    MiningCriteria,
    MissingEmbedding,
    load_sentence_embeddings,
    mine_triplets,
    mining_summary,
    read_triplets,
    score_json,
    score_ssabx,
    write_triplets,
)

log = logging.getLogger("sylseg")

EXIT_OK, EXIT_INVALID, EXIT_DATA = 0, 1, 2


class ValidationError(Exception):
    pass


class DataError(Exception):
    pass


_DATA_ERRORS = (
    core.UembError,
    core.StoreError,
    FileNotFoundError,
    MissingAlignment,
    MissingEmbedding,
    segment.ShapeMismatch,
    DataError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _embedding_path(directory, uid: str, fallback: str = "") -> Path:
    if directory:
        return Path(directory) / f"{uid}.uemb"
    if fallback:
        return Path(fallback)
    raise ValidationError(f"no embedding directory given and no embedding_path for {uid}")


# ---------------------------------------------------------------------------
# segment


def cmd_segment(args) -> int:
    rows = core.read_manifest(args.manifest)
    base = Path(args.manifest).parent

    def load(row):
        fallback = str(base / row.embedding_path) if row.embedding_path else ""
        try:
            e = core.read_embedding(_embedding_path(args.norm_dir, row.utterance_id, fallback), row.utterance_id)
            f = core.read_embedding(_embedding_path(args.feature_dir, row.utterance_id, fallback), row.utterance_id)
        except (core.UembError, OSError) as exc:
            return row.utterance_id, None, None, str(exc)
        return row.utterance_id, e, f, None

    loaded = _map(load, rows, args.workers)
    if args.norm_threshold == "auto":
        norms = [core.frame_norms(e) for _, e, _, err in loaded if err is None]
        threshold = segment.suggest_norm_threshold(norms) if norms else 0.0
        log.info("suggested norm threshold %.6g", threshold)
    else:
        threshold = float(args.norm_threshold)
    try:
        cfg = segment.SegmentationConfig(threshold, args.max_cuts, args.gain_threshold, args.min_frames)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None

    def run(item):
        uid, e, f, err = item
        if err is not None:
            return uid, None, None, err
        try:
            return uid, segment.segment_utterance(e, f, cfg, mincut=not args.no_mincut), f, None
        except segment.ShapeMismatch as exc:
            return uid, None, None, str(exc)

    results = _map(run, loaded, args.workers)
    errors = [(uid, err) for uid, _, _, err in results if err is not None]
    ok = [(seg, f.frame_rate) for _, seg, f, err in results if err is None]
    segment.write_segmentations(args.out, ok)
    if args.figures:
        from .plotting import plot_utterance

        spans = core.read_alignments(args.alignments) if args.alignments else {}
        for (seg, rate), (_, e, f, _) in list(zip(ok, [r for r in loaded if r[3] is None]))[: args.max_figures]:
            ref = [math.ceil(s.start_s * rate - 1e-9) for s in spans.get(seg.utterance_id, [])]
            plot_utterance(
                Path(args.figures) / f"{seg.utterance_id}.png",
                core.similarity_matrix(f),
                core.frame_norms(e),
                threshold,
                [s.start_frame for s in seg.segments],
                ref,
                title=seg.utterance_id,
            )
    print(f"segmented {len(ok)} utterances, {sum(len(s) for s, _ in ok)} segments -> {args.out}")
    for uid, err in errors:
        print(f"error: {uid}: {err}", file=sys.stderr)
    return EXIT_DATA if errors else EXIT_OK


# ---------------------------------------------------------------------------
# clustering


def _load_features(args):
    segs = segment.read_segmentations(args.segmentation)
    for seg, _ in segs:
        if not args.feature_dir:
            raise ValidationError("--feature-dir is required")

    def load(item):
        seg, _ = item
        return seg, core.read_embedding(_embedding_path(args.feature_dir, seg.utterance_id), seg.utterance_id)

    return _map(load, segs, args.workers)


def cmd_cluster_fit(args) -> int:
    pairs = _load_features(args)
    feats = [units.segment_features(f, seg) for seg, f in pairs if len(seg)]
    if not feats:
        raise DataError("no segments to cluster")
    points = np.vstack(feats)
    if not 1 <= args.k_coarse <= args.k:
        raise ValidationError(f"need 1 <= K' <= K, got K={args.k}, K'={args.k_coarse}")
    try:
        model = units.fit_cluster_model(points, args.k, args.k_coarse, seed=args.seed, max_iters=args.max_iters)
    except units.TooFewPoints as exc:
        raise ValidationError(str(exc)) from None
    model.save(args.out)
    print(f"fit {model.n_fine} -> {model.n_coarse} units on {points.shape[0]} segments -> {args.out}")
    return EXIT_OK


def cmd_cluster_apply(args) -> int:
    model = units.ClusterModel.load(args.model)
    pairs = _load_features(args)
    assigned = _map(lambda p: units.assign_utterance(p[1], p[0], model), pairs, args.workers)
    units.write_assignments(args.out, assigned)
    print(f"assigned units for {len(assigned)} utterances -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    segs = segment.read_segmentations(args.segmentation)
    spans = core.read_alignments(args.alignments)
    missing = [seg.utterance_id for seg, _ in segs if seg.utterance_id not in spans]
    if missing:
        raise MissingAlignment(missing)
    pairs = []
    for seg, rate in segs:
        rate = rate or args.frame_rate
        pairs.append((reference_boundaries(spans[seg.utterance_id]), segment.boundaries_from_segments(seg, rate)))
    report = MetricsReport(corpus_boundary_metrics(pairs, args.tolerance))
    if args.units:
        report.purity = purity_metrics(units.read_assignments(args.units), spans, args.frame_rate)
    print(report.table())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
    if args.figures:
        from .plotting import plot_contingency, plot_metrics

        b = report.boundary
        cols = {"Pr": b.precision, "Re": b.recall, "F1": b.f1, "R": b.r_value}
        if report.purity is not None:
            cols.update(SP=report.purity.syllable_purity, CP=report.purity.cluster_purity)
            plot_contingency(Path(args.figures) / "contingency.png", report.purity.contingency, report.purity.matching)
        plot_metrics(Path(args.figures) / "metrics.png", cols)
    return EXIT_OK


# ---------------------------------------------------------------------------
# SSABX


def cmd_ssabx_mine(args) -> int:
    store = core.read_sentences(args.sentences)
    crit = MiningCriteria(
        pos_sim_min=args.pos_sim_min,
        per_band_count=args.per_band_count,
        max_word_diff=args.max_word_diff,
        levenshtein_max=args.levenshtein_max,
        min_words=args.min_words,
        max_duration_s=args.max_duration,
    )
    result = mine_triplets(store, crit, seed=args.seed)
    write_triplets(args.out, result.triplets)
    print(mining_summary(result))
    return EXIT_OK


def cmd_ssabx_score(args) -> int:
    triplets = read_triplets(args.triplets)
    ids = sorted({i for t in triplets for i in (t.x_id, t.pos_id, t.neg_id)})
    emb = load_sentence_embeddings(args.embeddings, ids)
    score = score_ssabx(triplets, emb)
    print(f"accuracy {100 * score.accuracy:.2f}% over {score.n} triplets")
    for band in sorted(score.per_band, key=lambda b: list(BANDS).index(b) if b in BANDS else len(BANDS)):
        acc = score.per_band[band]
        print(f"  {band:<5} {100 * acc:6.2f}%  (n={score.per_band_n[band]})")
    if args.out:
        Path(args.out).write_text(score_json(score) + "\n")
    if args.figures:
        from .plotting import plot_ssabx

        plot_ssabx(Path(args.figures) / "ssabx.png", score.accuracy, score.per_band)
    return EXIT_OK


# ---------------------------------------------------------------------------
# distillation


def cmd_distill_train(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    if args.steps is not None:
        values["steps"] = args.steps
    if args.seed_given:
        values["seed"] = args.seed
    try:
        cfg = DistillConfig.from_mapping(values)
    except (ValueError, TypeError) as exc:
        raise ValidationError(str(exc)) from None
    corpus = None
    if args.data_dir:
        corpus = [core.read_embedding(p).frames for p in sorted(Path(args.data_dir).glob("*.uemb"))]
        if not corpus:
            raise DataError(f"no .uemb files in {args.data_dir}")
    init = load_params(args.init) if args.init else None
    result = train_toy(cfg, corpus, init)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_log(out / "train_log.jsonl", result.log)
    save_state(out / "state.npz", result.state)
    if args.figures:
        from .plotting import plot_training

        plot_training(Path(args.figures) / "training.png", result.log, cfg.classes)
    if result.log:
        first, last = result.log[0], result.log[-1]
        print(f"steps {len(result.log)}  loss {first['loss']:.4f} -> {last['loss']:.4f}  "
              f"teacher entropy {last['teacher_entropy']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args) -> int:
    try:
        cfg = BenchConfig(
            local_frames=args.local_frames,
            global_frames=args.global_frames,
            syllable_frames=args.syllable_frames,
            syllables_per_segment=args.syllables_per_segment,
            repeats=args.repeats,
            global_repeats=args.global_repeats,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    rows = run_bench(cfg)
    write_bench_csv(args.out, rows)
    for r in rows:
        ratio = "" if r.ratio is None else f"  x{r.ratio:.2f}"
        print(f"{r.path:<12} N={r.num_frames:<6} blocks={r.num_blocks:<5} {r.seconds:9.4f}s{ratio}")
    if args.figures:
        from .plotting import plot_scaling

        plot_scaling(Path(args.figures) / "scaling.png", rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# synthetic data


def cmd_make_synthetic(args) -> int:
    from .synthetic import sentence_store, syllable_corpus

    out = Path(args.out_dir)
    (out / "norm").mkdir(parents=True, exist_ok=True)
    (out / "feat").mkdir(parents=True, exist_ok=True)
    utts, _ = syllable_corpus(args.utterances, args.templates, args.dim, seed=args.seed)
    rows, spans = [], {}
    for u in utts:
        uid = u.feature_layer.utterance_id
        core.write_embedding(out / "norm" / f"{uid}.uemb", u.norm_layer)
        core.write_embedding(out / "feat" / f"{uid}.uemb", u.feature_layer)
        rows.append(core.ManifestRow(uid, f"feat/{uid}.uemb", "", "", u.feature_layer.num_frames / u.feature_layer.frame_rate))
        spans[uid] = u.spans
    core.write_manifest(out / "manifest.jsonl", rows)
    core.write_alignments(out / "alignments.jsonl", spans)
    if args.sentences:
        core.write_sentences(out / "sentences.jsonl", sentence_store(args.sentences, seed=args.seed))
    print(f"wrote {len(rows)} utterances to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--config", help="key = value file supplying option defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="sylseg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("segment", parents=[common], help="norm-threshold + mincut segmentation")
    s.add_argument("--manifest", required=True)
    s.add_argument("--norm-dir", help="UEMB files of the layer used for norms")
    s.add_argument("--feature-dir", help="UEMB files of the layer used for similarity")
    s.add_argument("--out", required=True)
    s.add_argument("--norm-threshold", default="auto", help="float, or 'auto' for half the median norm")
    s.add_argument("--max-cuts", type=int, default=3)
    s.add_argument("--gain-threshold", type=float, default=0.05)
    s.add_argument("--min-frames", type=int, default=2)
    s.add_argument("--no-mincut", action="store_true", help="coarse segments only")
    s.add_argument("--figures", help="directory for per-utterance similarity plots")
    s.add_argument("--max-figures", type=int, default=4)
    s.add_argument("--alignments", help="reference spans drawn on the figures")
    s.set_defaults(func=cmd_segment)

    for name, func, helptext in (
        ("cluster-fit", cmd_cluster_fit, "fit k-means + agglomerative unit inventory"),
        ("cluster-apply", cmd_cluster_apply, "assign units to segments"),
    ):
        c = sub.add_parser(name, parents=[common], help=helptext)
        c.add_argument("--segmentation", required=True)
        c.add_argument("--feature-dir")
        c.add_argument("--out", required=True)
        if name == "cluster-fit":
            c.add_argument("--k", type=int, default=units.FINE_CLUSTERS)
            c.add_argument("--k-coarse", type=int, default=units.COARSE_CLUSTERS)
            c.add_argument("--max-iters", type=int, default=100)
        else:
            c.add_argument("--model", required=True)
        c.set_defaults(func=func)

    e = sub.add_parser("eval", parents=[common], help="boundary and purity metrics")
    e.add_argument("--segmentation", required=True)
    e.add_argument("--alignments", required=True)
    e.add_argument("--units")
    e.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE_S)
    e.add_argument("--frame-rate", type=float, default=50.0, help="used when files carry no frame rate")
    e.add_argument("--out")
    e.add_argument("--figures")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("ssabx-mine", parents=[common], help="mine SSABX triplets")
    crit = MiningCriteria()
    m.add_argument("--sentences", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--pos-sim-min", type=float, default=crit.pos_sim_min)
    m.add_argument("--per-band-count", type=int, default=crit.per_band_count)
    m.add_argument("--max-word-diff", type=int, default=crit.max_word_diff)
    m.add_argument("--levenshtein-max", type=float, default=crit.levenshtein_max)
    m.add_argument("--min-words", type=int, default=crit.min_words)
    m.add_argument("--max-duration", type=float, default=crit.max_duration_s)
    m.set_defaults(func=cmd_ssabx_mine)

    sc = sub.add_parser("ssabx-score", parents=[common], help="score sentence embeddings on SSABX")
    sc.add_argument("--triplets", required=True)
    sc.add_argument("--embeddings", required=True, help="directory of UEMB files or JSON-lines id->vector table")
    sc.add_argument("--out")
    sc.add_argument("--figures")
    sc.set_defaults(func=cmd_ssabx_score)

    d = sub.add_parser("distill-train", parents=[common], help="toy self-distillation run")
    d.add_argument("--out-dir", required=True)
    d.add_argument("--data-dir", help="UEMB files to train on instead of the synthetic corpus")
    d.add_argument("--init", help="state.npz whose student weights initialise training")
    d.add_argument("--steps", type=int)
    d.add_argument("--figures")
    d.set_defaults(func=cmd_distill_train, config_is_model=True)

    b = sub.add_parser("bench", parents=[common], help="time per-segment vs global mincut")
    bc = BenchConfig()
    b.add_argument("--local-frames", type=_int_list, default=list(bc.local_frames))
    b.add_argument("--global-frames", type=_int_list, default=list(bc.global_frames))
    b.add_argument("--syllable-frames", type=int, default=bc.syllable_frames)
    b.add_argument("--syllables-per-segment", type=int, default=bc.syllables_per_segment)
    b.add_argument("--repeats", type=int, default=bc.repeats)
    b.add_argument("--global-repeats", type=int, default=bc.global_repeats)
    b.add_argument("--out", required=True)
    b.add_argument("--figures")
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("make-synthetic", parents=[common], help="write a synthetic demo corpus")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--utterances", type=int, default=50)
    g.add_argument("--templates", type=int, default=10)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--sentences", type=int, default=2000, help="SSABX sentence records; 0 to skip")
    g.set_defaults(func=cmd_make_synthetic)
    return p


def _prescan(argv: list[str], commands) -> tuple[str | None, str | None]:
    command = config = None
    for i, a in enumerate(argv):
        if command is None and a in commands:
            command = a
        elif a == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif a.startswith("--config="):
            config = a.split("=", 1)[1]
    return command, config


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv`` with the --config file supplying defaults for options."""
    choices = parser._subparsers._group_actions[0].choices  # noqa: SLF001
    command, config = _prescan(argv, choices)
    given = {"seed"} if any(a == "--seed" or a.startswith("--seed=") for a in argv) else set()
    if command and config:
        sub = choices[command]
        if sub.get_default("config_is_model"):
            pass
        else:
            try:
                values = read_config_file(config)
            except (OSError, ValueError) as exc:
                sub.error(f"cannot read config {config}: {exc}")
            actions = {a.dest: a for a in sub._actions}  # noqa: SLF001
            defaults = {}
            for key, raw in values.items():
                dest = key.replace("-", "_")
                action = actions.get(dest)
                if action is None or dest in ("config", "help"):
                    sub.error(f"unknown config key {key!r}")
                if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
                    defaults[dest] = raw.strip().lower() in ("1", "true", "yes", "on")
                else:
                    defaults[dest] = raw
                    action.required = False
            sub.set_defaults(**defaults)
            given |= set(defaults) & {"seed"}
    args = parser.parse_args(argv)
    args.seed_given = "seed" in given
    return args


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = _apply_config(parser, argv)
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
