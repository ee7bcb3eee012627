"""Pipeline command line: one executable, one subcommand per stage.

Data goes to files, logs to stderr. Exit codes: 0 success, 1 validation
or usage error, 2 I/O error. All randomness flows from explicit seeds.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import annotate as annotate_mod
from . import evaluate as evaluate_mod
from . import generate as generate_mod
from . import loops as loops_mod
from . import stats as stats_mod
from . import tension as tension_mod
from .config import GeneratorConfig, load_config
from .score import regularize_meter, tokens_to_score
from .tokens import TokenCategory, parse_tokens, render_tokens

log = logging.getLogger("looptab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_scores(directory: str | Path):
    paths = sorted(Path(directory).glob("*.tokens"))
    if not paths:
        raise ValueError(f"no *.tokens files in {directory}")
    for path in paths:
        yield path, tokens_to_score(parse_tokens(path.read_text(encoding="utf-8")))


def _read_streams(directory: str | Path) -> list[list[str]]:
    paths = sorted(Path(directory).glob("*.tokens"))
    if not paths:
        raise ValueError(f"no *.tokens files in {directory}")
    return [path.read_text(encoding="utf-8").split() for path in paths]


def label_free(tokens: list[str]) -> list[str]:
    """Drop the valence/arousal label tokens so classifiers cannot read the
    label off the stream they are scoring."""
    return [t for t in tokens if not t.startswith(("valence:", "arousal:"))]


def cmd_annotate(args) -> int:
    if args.songs:
        if args.provider_csv:
            provider = annotate_mod.CsvFeaturesProvider(args.provider_csv)
        elif args.provider_url:
            provider = annotate_mod.HttpFeaturesProvider(args.provider_url)
        else:
            raise ValueError("--songs requires --provider-csv or --provider-url")
        with open(args.songs, newline="", encoding="utf-8") as fh:
            songs = [(row["artist"], row["title"]) for row in csv.DictReader(fh)]
        records, misses = annotate_mod.fetch_annotations(provider, songs)
        log.info("annotated %d songs, %d misses", len(records), len(misses))
        if args.out_annotations:
            annotate_mod.save_annotations(records, args.out_annotations)
        if not records:
            raise ValueError("no songs could be annotated")
    else:
        if not args.annotations:
            raise ValueError("give --annotations or --songs with a provider")
        records = annotate_mod.load_annotations(args.annotations)
    thresholds = annotate_mod.compute_thresholds(records)
    if args.out_thresholds:
        atomic_write(args.out_thresholds, annotate_mod.feature_thresholds_to_json(thresholds))
    log.info("medians: valence %.4f arousal %.4f", thresholds.valence_median,
             thresholds.arousal_median)
    return 0


def cmd_tension(args) -> int:
    config = load_config(args.config)
    profiles = []
    names = []
    for path, score in _read_scores(args.scores):
        profiles.append(tension_mod.compute_tension_profile(score, config.spiral_params))
        names.append(path.stem)
    thresholds = tension_mod.fit_tension_thresholds(profiles)
    rows = [tension_mod.CSV_HEADER]
    for name, profile in zip(names, profiles):
        leveled = tension_mod.discretize_profile(profile, thresholds)
        rows.extend(tension_mod.profile_csv_rows(name, leveled))
    atomic_write(args.out_csv, "\n".join(rows) + "\n")
    if args.out_thresholds:
        atomic_write(args.out_thresholds, tension_mod.thresholds_to_json(thresholds))
    return 0


def cmd_loops(args) -> int:
    config = load_config(args.config)
    lines = []
    for path, score in _read_scores(args.scores):
        spans = loops_mod.extract_loops(regularize_meter(score), config.loop_params)
        for span in spans:
            lines.append(json.dumps({
                "song": path.stem,
                "start_bar": span.start_bar,
                "end_bar": span.end_bar,
                "rep_len": span.repetition_length_events,
            }))
    atomic_write(args.out, "".join(l + "\n" for l in lines))
    log.info("found %d loops", len(lines))
    return 0


def cmd_corpus(args) -> int:
    config = load_config(args.config)
    annotations = annotate_mod.load_annotations(args.annotations)
    _, result = annotate_mod.build_corpus(
        args.scores, annotations,
        loop_params=config.loop_params,
        spiral_params=config.spiral_params,
        corpus_path=args.out,
        tension_thresholds_path=args.out_tension_thresholds,
        feature_thresholds_path=args.out_feature_thresholds,
    )
    log.info("corpus: %d lines from %d songs (skipped: %d unannotated, %d loop-free, %d failed)",
             result.lines, result.songs_used, result.skipped_no_annotation,
             result.skipped_no_loops, result.failed_files)
    return 0


def cmd_train_gen(args) -> int:
    config = load_config(args.config)
    gen_cfg = config.generator
    order = args.order if args.order is not None else gen_cfg.order
    alpha = args.alpha if args.alpha is not None else gen_cfg.alpha
    lines = Path(args.corpus).read_text(encoding="utf-8").splitlines()
    model = generate_mod.train_generator(lines, order=order, alpha=alpha)
    generate_mod.save_model(model, args.out)
    log.info("trained order-%d model, vocabulary %d", order, len(model.vocabulary))
    return 0


def cmd_generate(args) -> int:
    config = load_config(args.config)
    model = generate_mod.load_model(args.model)
    prompt = generate_mod.ablated_prompt(args.emotion, args.ablate)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gen_cfg: GeneratorConfig = config.generator
    for i in range(args.count):
        constraints = generate_mod.SamplingConstraints(
            emotion=args.emotion,
            tempo_upper=config.happy_tempo_min,
            tempo_lower=config.sad_tempo_max,
            max_tokens=args.max_tokens if args.max_tokens else gen_cfg.max_tokens,
            max_bars=gen_cfg.max_bars,
            temperature=args.temperature if args.temperature is not None else gen_cfg.temperature,
            rng_seed=args.seed + i,
            mask_tempo=args.ablate != "psychology",
        )
        stream = generate_mod.sample_sequence(model, prompt, constraints)
        if args.ablate == "tension":
            stream = [t for t in stream if t.category is not TokenCategory.BAR_CONTROL]
        atomic_write(out_dir / f"gen_{i:04d}.tokens", render_tokens(stream) + "\n")
    return 0


def cmd_train_clf(args) -> int:
    config = load_config(args.config)
    lines = [l.split() for l in Path(args.corpus).read_text(encoding="utf-8").splitlines()
             if l.strip()]
    if not lines:
        raise ValueError("empty corpus")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for target in ("valence", "arousal"):
        labels = []
        for i, toks in enumerate(lines):
            level = next((t.split(":")[1] for t in toks if t.startswith(target + ":")), None)
            if level is None:
                raise ValueError(f"corpus line {i + 1} carries no {target} label")
            labels.append(level == "high")
        streams = [label_free(toks) for toks in lines]
        clf = evaluate_mod.train_classifier(streams, labels, config.classifier)
        clf.save(out_dir / f"{target}.json")
        log.info("%s classifier held-out accuracy: %s", target, clf.holdout_accuracy)
    return 0


def cmd_eval_emotion(args) -> int:
    valence = evaluate_mod.LinearTokenClassifier.load(args.valence_model)
    arousal = evaluate_mod.LinearTokenClassifier.load(args.arousal_model)
    settings: dict[str, evaluate_mod.EmotionMetrics] = {}
    pairs = []
    if args.happy and args.sad:
        pairs.append(("all", args.happy, args.sad))
    for name, happy_dir, sad_dir in args.setting or []:
        pairs.append((name, happy_dir, sad_dir))
    if not pairs:
        raise ValueError("give --happy/--sad or at least one --setting")
    for name, happy_dir, sad_dir in pairs:
        happy = [label_free(s) for s in _read_streams(happy_dir)]
        sad = [label_free(s) for s in _read_streams(sad_dir)]
        settings[name] = evaluate_mod.emotion_metrics(happy, sad, valence, arousal)
    if args.out_json:
        atomic_write(args.out_json, json.dumps(evaluate_mod.metrics_report(settings), indent=2))
    table = evaluate_mod.metrics_table(settings)
    if args.out_table:
        atomic_write(args.out_table, table + "\n")
    print(table)
    return 0


def cmd_eval_loops(args) -> int:
    config = load_config(args.config)
    scores = [regularize_meter(score) for _, score in _read_scores(args.generations)]
    total, avg = evaluate_mod.loop_metric(scores, config.loop_params)
    doc = {"format": "looptab-loop-report", "version": 1,
           "generations": len(scores), "loops_found": total, "average_per_generation": avg}
    if args.out:
        atomic_write(args.out, json.dumps(doc, indent=2))
    print(f"loops found: {total}  average per generation: {avg:.4f}")
    return 0


def _numeric_columns(path) -> list[list[float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    header = rows[0]
    try:
        float(header[0])
        data = rows
    except ValueError:
        data = rows[1:]
    if not data:
        raise ValueError("no data rows")
    return [[float(row[j]) for row in data] for j in range(len(data[0]))]


def cmd_eval_stats(args) -> int:
    columns = _numeric_columns(args.input)
    if args.method == "wilcoxon":
        if len(columns) < 2:
            raise ValueError("wilcoxon needs two columns")
        res = stats_mod.wilcoxon_signed_rank(columns[0], columns[1])
        doc = {"method": "wilcoxon", "W": res.statistic, "z": res.z_value,
               "p_value": res.p_value, "n": res.n, "exact": res.exact}
    elif args.method == "friedman":
        matrix = list(zip(*columns))
        res = stats_mod.friedman(matrix)
        doc = {"method": "friedman", "chi2": res.statistic, "df": len(columns) - 1,
               "p_value": res.p_value, "n": res.n}
    else:
        comparisons = stats_mod.pairwise_bonferroni(columns, alpha=args.alpha)
        doc = {"method": "pairwise_bonferroni", "alpha": args.alpha,
               "comparisons": [
                   {"a": c.group_a, "b": c.group_b, "W": c.result.statistic,
                    "z": c.result.z_value, "p_value": c.result.p_value,
                    "alpha_adjusted": c.alpha_adjusted, "significant": c.significant}
                   for c in comparisons]}
    text = json.dumps(doc, indent=2)
    if args.out:
        atomic_write(args.out, text)
    print(text)
    return 0


def cmd_survey(args) -> int:
    rows = evaluate_mod.load_survey_csv(args.responses)
    summary = evaluate_mod.survey_summary(rows)
    text = json.dumps(summary.as_dict(), indent=2)
    if args.out:
        atomic_write(args.out, text)
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="looptab",
                     description="Emotion-annotated loop corpora, conditional generation "
                                 "and evaluation for symbolic tablature.")
    parser.add_argument("--config", help="pipeline config JSON (flags win over config)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="load or fetch song annotations and fit medians")
    p.add_argument("--annotations", help="annotations CSV (artist,title,valence,energy,mode)")
    p.add_argument("--songs", help="CSV of artist,title to fetch via a provider")
    p.add_argument("--provider-csv", help="CSV-backed audio features provider")
    p.add_argument("--provider-url", help="HTTP provider endpoint template "
                                          "({artist}/{title} placeholders)")
    p.add_argument("--out-annotations", help="cache fetched records to CSV")
    p.add_argument("--out-thresholds", help="write feature_thresholds.json here")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("tension", help="per-bar tonal tension with quartile levels")
    p.add_argument("--scores", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-thresholds")
    p.set_defaults(func=cmd_tension)

    p = sub.add_parser("loops", help="extract bar-aligned loop manifests")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True, help="JSON lines manifest")
    p.set_defaults(func=cmd_loops)

    p = sub.add_parser("corpus", help="build the control-token training corpus")
    p.add_argument("--scores", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-tension-thresholds")
    p.add_argument("--out-feature-thresholds")
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("train-gen", help="train the n-gram generator")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--order", type=int)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_train_gen)

    p = sub.add_parser("generate", help="sample emotion-conditioned token files")
    p.add_argument("--model", required=True)
    p.add_argument("--emotion", required=True, choices=["happy", "sad"])
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--ablate", choices=["emotion_labels", "psychology", "tension"])
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-clf", help="train valence and arousal classifiers")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train_clf)

    p = sub.add_parser("eval-emotion", help="emotion separation metrics")
    p.add_argument("--happy", help="directory of happy generations")
    p.add_argument("--sad", help="directory of sad generations")
    p.add_argument("--setting", nargs=3, action="append",
                   metavar=("NAME", "HAPPY_DIR", "SAD_DIR"),
                   help="additional named setting (repeatable)")
    p.add_argument("--valence-model", required=True)
    p.add_argument("--arousal-model", required=True)
    p.add_argument("--out-json")
    p.add_argument("--out-table")
    p.set_defaults(func=cmd_eval_emotion)

    p = sub.add_parser("eval-loops", help="loop counts over generations")
    p.add_argument("--generations", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_loops)

    p = sub.add_parser("eval-stats", help="nonparametric tests on CSV columns")
    p.add_argument("--method", required=True, choices=["wilcoxon", "friedman", "pairwise"])
    p.add_argument("--input", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_stats)

    p = sub.add_parser("survey", help="summarize listening-test responses")
    p.add_argument("--responses", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_survey)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
