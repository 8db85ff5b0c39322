"""
Command-line entry point: ``uttgenre <command> [options]``.

Commands: ingest, features, mine, classify, sweep-q, align, simulate.
Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then command-line flags. Every artifact records the
settings, their hash, the seed and digests of the input files, so reruns
on identical inputs produce identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields, replace


from . import align, classify, corpus as corpus_mod, features, genres, synth
from .cluster import KMeansConfig

log = logging.getLogger("uttgenre")

UTTERANCE_FILE = "utterances.jsonl"
SESSION_FILE = "sessions.csv"
TRUTH_FILE = "ground_truth.json"
GENRE_FILE = "genres.json"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    q: int = 3
    n_max: int = 20
    rf_min: float = 0.5
    rg_min: float = 0.05
    pv_max: float = 0.05
    seed: int = 0
    cv_mode: str = "faithful"
    folds_by: str = "session"
    folds: int = 5
    c: float = 1.0
    restarts: int = 10
    high_cutoff: float = 42.0
    low_cutoff: float = 36.0
    a_min: int = align.DEFAULT_A_MIN

    def validate(self):
        if self.q < 2:
            raise ConfigError("q must be >= 2")
        if self.n_max < 2:
            raise ConfigError("n_max must be >= 2")
        if self.low_cutoff >= self.high_cutoff:
            raise ConfigError(f"low_cutoff {self.low_cutoff} must be below high_cutoff {self.high_cutoff}")
        if self.cv_mode not in classify.CV_MODES:
            raise ConfigError(f"cv_mode must be one of {classify.CV_MODES}")
        if self.folds_by not in classify.FOLDS_BY:
            raise ConfigError(f"folds_by must be one of {classify.FOLDS_BY}")
        if self.restarts < 1 or self.a_min < 1 or self.folds < 2:
            raise ConfigError("restarts and a_min must be >= 1, folds >= 2")
        return self

    def digest(self):
        text = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def mining(self, jobs=1):
        return genres.MiningConfig(q=self.q, n_max=self.n_max, rf_min=self.rf_min,
                                   rg_min=self.rg_min, pv_max=self.pv_max, seed=self.seed,
                                   kmeans=KMeansConfig(restarts=self.restarts), n_jobs=jobs)

    def classifier(self, jobs=1):
        return classify.ClassifierConfig(folds=self.folds, mode=self.cv_mode,
                                         folds_by=self.folds_by, seed=self.seed,
                                         svm=classify.SvmConfig(C=self.c),
                                         mining=self.mining(jobs))

    def ingestion(self):
        return corpus_mod.IngestionConfig(high_cutoff=self.high_cutoff,
                                          low_cutoff=self.low_cutoff)


_FIELDS = {f.name: f.type for f in fields(PipelineConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def read_config_file(path):
    """``key = value`` per line; ``#`` starts a comment; keys may use dashes."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
            try:
                out[key] = _CASTS[_FIELDS[key]](value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return out


def resolve_config(args):
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return PipelineConfig(**values).validate()


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _header(kind, cfg, inputs):
    return {"artifact": kind, "config_hash": cfg.digest(), "seed": cfg.seed,
            "config": asdict(cfg),
            "inputs": {k: file_digest(p) for k, p in sorted(inputs.items())}}


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")
    print(f"wrote {path}")


def _jobs(args):
    return args.jobs if args.jobs is not None else (os.cpu_count() or 1)


def _corpus_paths(args):
    base = args.corpus or args.out_dir
    utt = args.utterances or os.path.join(base, UTTERANCE_FILE)
    ses = args.sessions or os.path.join(base, SESSION_FILE)
    return utt, ses


def _load(args, cfg):
    utt, ses = _corpus_paths(args)
    c = corpus_mod.load_corpus(utt, ses, cfg.ingestion())
    return c, features.compute_features(c), {"utterances": utt, "sessions": ses}


# ---------------------------------------------------------------- commands

def cmd_ingest(args, cfg):
    utt, ses = _corpus_paths(args)
    c = corpus_mod.load_corpus(utt, ses, cfg.ingestion())
    rep = corpus_mod.validate_corpus(c)
    out = {**_header("validation-report", cfg, {"utterances": utt, "sessions": ses}),
           "label_counts": c.label_counts(), "provenance": c.provenance, **rep.as_dict()}
    _write_json(os.path.join(args.out_dir, "validation.json"), out)
    lc = c.label_counts()
    print(f"{len(c)} sessions ({lc['high']} high, {lc['low']} low, {lc['excluded']} excluded), "
          f"{c.n_utterances} utterances")
    return 0


def cmd_features(args, cfg):
    _, table, inputs = _load(args, cfg)
    path = os.path.join(args.out_dir, "features.csv")
    head = _header("features", cfg, inputs)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={head['config_hash']} seed={cfg.seed}\n")
        fh.write(f"# normalization={json.dumps(features.NORMALIZATION_CONVENTION, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["utterance_id", "session_id", *features.FEATURE_NAMES])
        for uid, si, row in zip(table.utterance_ids, table.session_index, table.values):
            w.writerow([uid, table.session_ids[si], *(repr(float(v)) for v in row)])
    print(f"wrote {path}")
    print(f"{table.n_utterances} utterances in {table.n_sessions} sessions, "
          f"{len(table.excluded_utterances)} excluded (too few voiced frames)")
    return 0


def _mine(args, cfg, table):
    return genres.mine(table, cfg.mining(_jobs(args)))


def _genre_artifact(cfg, inputs, gset):
    return {**_header("genre-report", cfg, inputs),
            "correlation": "pearson, two-sided t-test against empathy_rating",
            "percentile_convention": "linear",
            **gset.as_dict()}


def cmd_mine(args, cfg):
    _, table, inputs = _load(args, cfg)
    gset = _mine(args, cfg, table)
    _write_json(os.path.join(args.out_dir, GENRE_FILE), _genre_artifact(cfg, inputs, gset))
    if args.candidates:
        _write_json(os.path.join(args.out_dir, "candidates.json"),
                    {**_header("candidate-genres", cfg, inputs),
                     "candidates": [g.as_dict() for g in gset.candidates]})
    if not len(gset):
        print("warning: no salient genres found", file=sys.stderr)
    for g in gset.report()[:25]:
        print(f"{g['combo']:<28} {'/'.join(g['pattern']):<10} rho={g['rho']:+.3f} "
              f"p={g['p_value']:.2g} contrib={g['mean_contribution']:.3f}")
    print(f"{len(gset)} salient genres")
    return 0


def cmd_classify(args, cfg):
    _, table, inputs = _load(args, cfg)
    ccfg = cfg.classifier(_jobs(args))
    gset = None
    if args.genres:
        if cfg.cv_mode == "nested":
            print("warning: --genres ignored in nested mode", file=sys.stderr)
        else:
            with open(args.genres, encoding="utf-8") as fh:
                gset = genres.SalientGenreSet.from_dict(json.load(fh))
            inputs = {**inputs, "genres": args.genres}
    if cfg.cv_mode == "faithful" and gset is None:
        gset = _mine(args, cfg, table)
    reports = classify.cross_validate(table, ccfg, genres=gset)
    head = _header("cv-report", cfg, inputs)
    out = {**head, "n_sessions": table.n_sessions,
           "methods": [reports[m].as_dict() for m in classify.METHODS]}
    _write_json(os.path.join(args.out_dir, "cv_report.json"), out)
    if cfg.cv_mode == "faithful":
        comment = [f"config_hash={head['config_hash']} seed={cfg.seed}"]
        if len(gset):
            path = os.path.join(args.out_dir, "session_features_genre.csv")
            classify.session_features(table, gset.genres).to_csv(path, comment)
            print(f"wrote {path}")
        pats, quant = classify.mine_prominent_patterns(table, cfg.q, cfg.pv_max)
        path = os.path.join(args.out_dir, "session_features_baseline.csv")
        classify.pattern_features(table, pats, quant).to_csv(path, comment)
        print(f"wrote {path}")
    for m in classify.METHODS:
        r = reports[m]
        print(f"{m:<17} mode={r.mode:<9} dim={r.dimension:<6} "
              f"accuracy={r.mean_accuracy:.3f} folds={[round(a, 3) for a in r.fold_accuracies]}")
    return 0


def cmd_sweep_q(args, cfg):
    _, table, inputs = _load(args, cfg)
    qs = [int(v) for v in args.qs.split(",")]
    head = _header("q-sweep", cfg, inputs)
    path = os.path.join(args.out_dir, "sweep_q.csv")
    rows = []
    for q in qs:
        qcfg = replace(cfg, q=q).validate()
        reports = classify.cross_validate(table, qcfg.classifier(_jobs(args)))
        for m in classify.METHODS:
            r = reports[m]
            rows.append([q, m, r.mode, r.dimension, repr(r.mean_accuracy),
                         *(repr(a) for a in r.fold_accuracies)])
            print(f"Q={q} {m:<17} dim={r.dimension:<6} accuracy={r.mean_accuracy:.3f}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={head['config_hash']} seed={cfg.seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Q", "method", "mode", "dimension", "mean_accuracy",
                    *(f"fold{i + 1}" for i in range(cfg.folds))])
        w.writerows(rows)
    print(f"wrote {path}")
    return 0


def cmd_align(args, cfg):
    ref = align.read_reference(args.reference)
    hyp = align.read_hypothesis(args.hypothesis)
    result = align.align_session(ref, hyp, a_min=cfg.a_min)
    out = {**_header("turn-spans", cfg, {"reference": args.reference,
                                         "hypothesis": args.hypothesis}), **result}
    _write_json(os.path.join(args.out_dir, "turns.json"), out)
    for d in result["diagnostics"]:
        print(f"warning: {d}", file=sys.stderr)
    print(f"distance={result['distance']} anchors={len(result['anchors'])} "
          f"turns located={len(result['turns'])} omitted={len(result['omitted_turns'])}")
    return 0


def cmd_simulate(args, cfg):
    spec = synth.preset(args.preset)
    over = {}
    if args.n_sessions is not None:
        over["sessions"] = args.n_sessions
        over["n_high"] = int(round(args.n_sessions * spec.n_high / spec.sessions))
        over["therapists"] = min(spec.therapists, args.n_sessions)
    if args.utterances_mean is not None:
        over["utterances_mean"] = args.utterances_mean
        over["utterances_sd"] = spec.utterances_sd * args.utterances_mean / spec.utterances_mean
        over["utterances_min"] = max(5, int(spec.utterances_min * args.utterances_mean
                                           / spec.utterances_mean))
    spec = replace(spec, **over)
    c, truth = synth.generate(spec, seed=cfg.seed, config=cfg.ingestion())
    utt = os.path.join(args.out_dir, UTTERANCE_FILE)
    ses = os.path.join(args.out_dir, SESSION_FILE)
    corpus_mod.write_corpus(c, utt, ses)
    print(f"wrote {utt}\nwrote {ses}")
    _write_json(os.path.join(args.out_dir, TRUTH_FILE),
                {"artifact": "ground-truth", "config_hash": cfg.digest(), "seed": cfg.seed,
                 "preset": args.preset, **truth.as_dict()})
    if args.transcript_turns:
        ref, hyp, tt = synth.generate_transcripts(
            args.transcript_turns, error_rate=args.error_rate, seed=cfg.seed,
            error_mix={"substitution": 1.0, "insertion": 0.0, "deletion": 0.0}
            if args.substitutions_only else None)
        align.write_reference(ref, os.path.join(args.out_dir, "reference.json"))
        align.write_hypothesis(hyp, os.path.join(args.out_dir, "hypothesis.jsonl"))
        _write_json(os.path.join(args.out_dir, "transcript_truth.json"),
                    {"turn_spans": [list(s) for s in tt.turn_spans],
                     "speakers": list(tt.speakers), "n_edits": tt.n_edits,
                     "edits": tt.edits})
    lc = c.label_counts()
    print(f"{len(c)} sessions ({lc['high']} high / {lc['low']} low), {c.n_utterances} utterances")
    for g, a in zip(spec.genres, truth.achieved):
        rho = "n/a" if a is None else f"{a.rho:+.3f}"
        print(f"planted {g.combo.name}={'/'.join(g.pattern)} rho_true={g.rho_true:+.2f} achieved={rho}")
    return 0


COMMANDS = {
    "ingest": (cmd_ingest, "validate a corpus and summarize it"),
    "features": (cmd_features, "write per-utterance normalized features (CSV)"),
    "mine": (cmd_mine, "mine salient utterance genres (JSON report)"),
    "classify": (cmd_classify, "cross-validate the genre and baseline classifiers"),
    "sweep-q": (cmd_sweep_q, "repeat mining and classification over several Q"),
    "align": (cmd_align, "locate speaker turns from a transcript and a timed hypothesis"),
    "simulate": (cmd_simulate, "generate a synthetic corpus with planted genres"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("settings (override the --config file)")
    g.add_argument("--config", help="key = value settings file")
    g.add_argument("--q", type=int, help="quantization levels Q (default 3)")
    g.add_argument("--n-max", type=int, help="largest K in the cluster sweep (default 20)")
    g.add_argument("--rf-min", type=float, help="minimum occurrence ratio (default 0.5)")
    g.add_argument("--rg-min", type=float, help="minimum mean contribution (default 0.05)")
    g.add_argument("--pv-max", type=float, help="maximum correlation p-value (default 0.05)")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--cv-mode", choices=classify.CV_MODES, help="default faithful")
    g.add_argument("--folds-by", choices=classify.FOLDS_BY, help="default session")
    g.add_argument("--restarts", type=int, help="k-means restarts (default 10)")
    g.add_argument("--high-cutoff", type=float, help="rating >= this is high (default 42)")
    g.add_argument("--low-cutoff", type=float, help="rating <= this is low (default 36)")
    g.add_argument("--a-min", type=int, help="minimum anchor length (default 5)")
    g.add_argument("--out-dir", default=".", help="output directory (default .)")
    g.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    g.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    d = data.add_argument_group("corpus")
    d.add_argument("--corpus", help=f"directory holding {UTTERANCE_FILE} and {SESSION_FILE} "
                                    "(default: --out-dir)")
    d.add_argument("--utterances", help="utterance JSON Lines file")
    d.add_argument("--sessions", help="session CSV file")

    p = argparse.ArgumentParser(prog="uttgenre", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name, (_, help_) in COMMANDS.items():
        parents = [common] + ([data] if name not in ("align", "simulate") else [])
        sp = sub.add_parser(name, parents=parents, help=help_)
        if name == "mine":
            sp.add_argument("--candidates", action="store_true",
                            help="also write every per-cluster genre")
        elif name == "classify":
            sp.add_argument("--genres", help="genre report from `mine` (faithful mode)")
        elif name == "sweep-q":
            sp.add_argument("--qs", default="2,3,4,5", help="comma-separated Q values")
        elif name == "align":
            sp.add_argument("--reference", required=True, help="reference transcript JSON")
            sp.add_argument("--hypothesis", required=True, help="hypothesis JSON Lines")
        elif name == "simulate":
            sp.add_argument("--preset", choices=synth.PRESETS, default="moderate")
            sp.add_argument("--n-sessions", type=int, help="override the session count")
            sp.add_argument("--utterances-mean", type=float,
                            help="override the mean utterances per session")
            sp.add_argument("--transcript-turns", type=int, default=0,
                            help="also write a synthetic transcript pair with this many turns")
            sp.add_argument("--error-rate", type=float, default=0.1)
            sp.add_argument("--substitutions-only", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        os.makedirs(args.out_dir, exist_ok=True)
        return COMMANDS[args.command][0](args, cfg)
    except (ValueError, OSError, KeyError) as exc:
        print(f"uttgenre {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
