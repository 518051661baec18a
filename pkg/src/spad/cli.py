"""Command-line front end for the attack/defense pipeline.

One executable with one subcommand per pipeline stage. Every artifact a
subcommand writes gets a sibling ``.manifest.json`` recording the
effective config (with per-section provenance), the seeds, library
versions, and output hashes, so any artifact can be reproduced byte for
byte from its manifest. No stage consults environment variables or the
wall clock.

Exit codes: 0 success, 1 usage, 2 config or data problem, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from spad import harness, report, wordattack
from spad.config import RunConfig, load_config
from spad.errors import ConfigError, DataError, SpadError
from spad.genattack import build_generator, composite_reward, generate, load_generator, pretrain_dae, train_attacker
from spad.manifest import write_manifest
from spad.quality import load_embedder, load_lm, train_embedder, train_lm
from spad.structpred import Checkpoint, load_model, train_model
from spad.treebank import build_vocab, generate_synthetic, parse_conllu, write_conllu
from spad.treebank.types import Corpus, Sentence


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _read_corpus(path: str) -> Corpus:
    p = Path(path)
    if not p.exists():
        raise DataError(f"corpus file not found: {p}")
    return parse_conllu(p.read_text(encoding="utf-8"))


def _load_checkpoint(path: str) -> Checkpoint:
    p = Path(path)
    if not p.exists():
        raise DataError(f"checkpoint file not found: {p}")
    return Checkpoint.load(p)


def _read_records(path: str) -> list[harness.AdvRecord]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"records file not found: {p}")
    return harness.read_records(p)


def _pmap(fn, items, jobs: int) -> list:
    """Order-preserving map; results are independent of worker count
    because every item computes from its own seeded streams."""
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _manifest_for(args, artifact, cfg: RunConfig, origin, seeds, extra=()):
    write_manifest(
        artifact,
        command=args.command,
        argv=args.raw_argv,
        config=cfg.to_dict(),
        config_origin=origin,
        seeds=seeds,
        extra_outputs=extra,
    )


def _cmd_gen_data(args) -> int:
    cfg, origin = load_config(args.config)
    n = args.n if args.n is not None else cfg.n_train
    seed = args.seed if args.seed is not None else cfg.seed
    corpus = generate_synthetic(cfg.grammar, n, seed=seed)
    Path(args.out).write_text(write_conllu(corpus), encoding="utf-8")
    _manifest_for(args, args.out, cfg, origin, {"data": seed})
    print(f"wrote {len(corpus.sentences)} sentences to {args.out}")
    return 0


def _model_config(cfg: RunConfig, role: str):
    return {"a": cfg.victim, "b": cfg.ref_b, "c": cfg.ref_c}[role]


def _cmd_train_model(args) -> int:
    cfg, origin = load_config(args.config)
    corpus = _read_corpus(args.corpus)
    mcfg = _model_config(cfg, args.role)
    ck = train_model(corpus, mcfg)
    ck.save(args.out)
    _manifest_for(args, args.out, cfg, origin, {"model": mcfg.seed})
    print(f"trained {mcfg.kind} {mcfg.flavor} (role {args.role}) -> {args.out}")
    return 0


def _cmd_train_lm(args) -> int:
    cfg, origin = load_config(args.config)
    corpus = _read_corpus(args.corpus)
    ck = train_lm(corpus, cfg.lm)
    ck.save(args.out)
    _manifest_for(args, args.out, cfg, origin, {"lm": cfg.lm.seed})
    print(f"trained {cfg.lm.flavor} language model -> {args.out}")
    if args.embedder_out:
        eck = train_embedder(corpus, cfg.embedder)
        eck.save(args.embedder_out)
        _manifest_for(args, args.embedder_out, cfg, origin, {"embedder": cfg.embedder.seed})
        print(f"trained embedder -> {args.embedder_out}")
    return 0


def _cmd_pretrain_gen(args) -> int:
    cfg, origin = load_config(args.config)
    corpus = _read_corpus(args.corpus)
    vocab = build_vocab(corpus.sentences, min_count=cfg.generator.min_count)
    gen = build_generator(vocab, cfg.generator)
    ck = pretrain_dae(gen, corpus, mask_prob=args.mask_prob, epochs=args.epochs, lr=args.lr)
    ck.save(args.out)
    _manifest_for(args, args.out, cfg, origin, {"generator": cfg.generator.seed})
    curve = ck.metadata["curve"]
    print(f"pretrained generator ({args.epochs} epochs, nll {curve[0]:.3f} -> {curve[-1]:.3f}) -> {args.out}")
    return 0


def _load_trio(args, cfg: RunConfig, alias_all_to_victim: bool):
    a = load_model(_load_checkpoint(args.victim))
    if alias_all_to_victim:
        return a, a, a
    if not args.ref_b or not args.ref_c:
        raise ConfigError("reference checkpoints --ref-b and --ref-c are required here")
    return a, load_model(_load_checkpoint(args.ref_b)), load_model(_load_checkpoint(args.ref_c))


def _cmd_train_attacker(args) -> int:
    cfg, origin = load_config(args.config)
    corpus = _read_corpus(args.corpus)
    gen = load_generator(_load_checkpoint(args.generator))
    trio = _load_trio(args, cfg, cfg.allsame)
    lm = load_lm(_load_checkpoint(args.lm))
    embedder = load_embedder(_load_checkpoint(args.embedder))

    def reward_fn(x, tokens):
        return composite_reward(x, tokens, trio, lm, embedder, cfg.rl)

    ck, metrics = train_attacker(gen, corpus, reward_fn, cfg.rl)
    ck.save(args.out)
    extra = []
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            for row in metrics:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        curve_png = Path(args.metrics).with_suffix(".png")
        report.render_training_curve(
            metrics, ["mean_reward", "mean_s_p"], curve_png, x_field="epoch"
        )
        extra = [args.metrics, curve_png]
    _manifest_for(args, args.out, cfg, origin, {"rl": cfg.rl.seed}, extra=extra)
    last = metrics[-1]
    print(
        f"trained attacker ({cfg.rl.epochs} epochs, mean reward "
        f"{metrics[0]['mean_reward']:.3f} -> {last['mean_reward']:.3f}) -> {args.out}"
    )
    return 0


def _attack_records(args, cfg: RunConfig, mode: str) -> list[harness.AdvRecord]:
    corpus = _read_corpus(args.corpus)
    victim = load_model(_load_checkpoint(args.victim))
    if mode == "origin":
        def one(s):
            return harness.AdvRecord(
                method="origin", original=s, generated=s, pred_a=victim.predict(s)
            )
    elif mode == "fgsm":
        def one(s):
            return wordattack.attack_sentence(victim, s, cfg.perturbation)
    else:
        gen = load_generator(_load_checkpoint(args.attacker))
        gen_mode = args.gen_mode

        def one(s):
            rewrite = generate(
                gen, s, mode=gen_mode, seed=cfg.seed, temperature=cfg.rl.temperature
            )
            rewrite = Sentence(tokens=rewrite.tokens, id=f"{s.id}#seq2seq")
            return harness.AdvRecord(
                method="seq2seq",
                original=s,
                generated=rewrite,
                pred_a=victim.predict(rewrite),
                pred_a_original=victim.predict(s),
            )

    records = _pmap(one, corpus.sentences, args.jobs)
    if cfg.evalsame:
        records = harness.fill_references(records, victim, victim)
    elif args.ref_b and args.ref_c:
        b = load_model(_load_checkpoint(args.ref_b))
        c = load_model(_load_checkpoint(args.ref_c))
        records = harness.fill_references(records, b, c)
    return records


def _cmd_attack(args) -> int:
    cfg, origin = load_config(args.config)
    records = _attack_records(args, cfg, args.mode)
    harness.write_records(records, args.out)
    _manifest_for(args, args.out, cfg, origin, {"run": cfg.seed})
    changed = sum(1 for r in records if r.generated.tokens != r.original.tokens)
    print(f"attacked {len(records)} sentences ({changed} rewritten) -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg, origin = load_config(args.config)
    lm = load_lm(_load_checkpoint(args.lm)) if args.lm else None
    embedder = load_embedder(_load_checkpoint(args.embedder)) if args.embedder else None
    refs = None
    if args.ref_b and args.ref_c:
        refs = (
            load_model(_load_checkpoint(args.ref_b)),
            load_model(_load_checkpoint(args.ref_c)),
        )
    reports = []
    for rec_path in args.records:
        records = _read_records(rec_path)
        if refs is not None:
            records = harness.fill_references(records, *refs)
        reports.append(harness.evaluate_report(records, lm, embedder))
    with open(args.out, "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(json.dumps(rep.to_dict(), sort_keys=True) + "\n")
    stem = Path(args.out)
    rates_png = stem.with_name(stem.stem + "_rates.png")
    report.render_rate_figure(reports, rates_png)
    extra = [rates_png]
    if any(r.mean_ppl is not None or r.mean_sim is not None for r in reports):
        quality_png = stem.with_name(stem.stem + "_quality.png")
        report.render_quality_figure(reports, quality_png)
        extra.append(quality_png)
    _manifest_for(args, args.out, cfg, origin, {"run": cfg.seed}, extra=extra)
    for rep in reports:
        print(
            f"{rep.method}: token rate b/c/bc = {rep.token_rate_b:.1f}/"
            f"{rep.token_rate_c:.1f}/{rep.token_rate_bc:.1f}%, "
            f"sentence rate bc = {rep.sentence_rate_bc:.1f}% "
            f"({rep.discarded_bc} discarded)"
        )
    return 0


def _cmd_adv_train(args) -> int:
    cfg, origin = load_config(args.config)
    records = _read_records(args.records)
    train = _read_corpus(args.train)
    adv = harness.consensus_filter(records, cap=args.cap)
    if not adv:
        raise DataError("consensus filter kept no adversarial sentences")
    extra = []
    if args.pseudo_out:
        pseudo = Corpus(sentences=adv, tagset=train.tagset)
        Path(args.pseudo_out).write_text(write_conllu(pseudo), encoding="utf-8")
        extra.append(args.pseudo_out)
    mcfg = _model_config(cfg, "a")
    base = None
    if args.mode == "finetune":
        if args.base is None:
            raise ConfigError("--base checkpoint is required for finetune mode")
        base = _load_checkpoint(args.base)
    ck = harness.adversarial_retrain(
        mcfg,
        train,
        adv,
        base_checkpoint=base,
        finetune_epochs=args.finetune_epochs,
        finetune_lr=args.finetune_lr,
    )
    ck.save(args.out)
    _manifest_for(args, args.out, cfg, origin, {"model": mcfg.seed}, extra=extra)
    print(f"retrained ({args.mode}) on {len(train.sentences)} clean + {len(adv)} pseudo-labeled -> {args.out}")
    return 0


def _error_rates(records, mode: harness.RefMode) -> dict[str, float]:
    """Per-record token wrongness fraction keyed by original sentence id;
    records discarded by the mode are omitted."""
    rates = {}
    for r in records:
        truth = harness.record_truth(r, mode)
        if truth is None:
            continue
        flags = harness.token_mismatch_flags(r.pred_a, truth)
        rates[r.original.id] = sum(flags) / len(flags)
    return rates


def _cmd_significance(args) -> int:
    cfg, origin = load_config(args.config)
    mode = harness.RefMode(args.mode)
    before = _error_rates(_read_records(args.before), mode)
    after = _error_rates(_read_records(args.after), mode)
    common = sorted(set(before) & set(after))
    if not common:
        raise DataError("no common sentences between the two record files")
    seed = args.seed if args.seed is not None else cfg.seed
    result = harness.significance(
        [before[k] for k in common],
        [after[k] for k in common],
        method=args.method,
        resamples=args.resamples,
        seed=seed,
    )
    doc = {
        "method": result.method,
        "p_value": result.p_value,
        "statistic": result.statistic,
        "degenerate": result.degenerate,
        "n_pairs": len(common),
        "mode": args.mode,
    }
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _manifest_for(args, args.out, cfg, origin, {"bootstrap": seed})
    print(f"{result.method}: p = {result.p_value:.4f} over {len(common)} pairs")
    return 0


def _add_common(p):
    p.add_argument("--config", help="JSON run config; omit for all defaults")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for per-sentence stages")


def build_parser() -> _Parser:
    parser = _Parser(prog="spad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    p = sub.add_parser("gen-data", help="generate a synthetic annotated corpus")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, help="sentence count (default: config n_train)")
    p.add_argument("--seed", type=int, help="data seed (default: config seed)")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train-model", help="train a parser or tagger")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--role", choices=("a", "b", "c"), default="a",
                   help="a = victim, b/c = reference models")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_model)

    p = sub.add_parser("train-lm", help="train the fluency language model")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embedder-out", help="also train the similarity embedder")
    p.set_defaults(func=_cmd_train_lm)

    p = sub.add_parser("pretrain-gen", help="denoising pretraining for the generator")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-prob", type=float, default=0.3)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.set_defaults(func=_cmd_pretrain_gen)

    p = sub.add_parser("train-attacker", help="REINFORCE training of the generator")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--generator", required=True, help="pretrained generator checkpoint")
    p.add_argument("--victim", required=True)
    p.add_argument("--ref-b")
    p.add_argument("--ref-c")
    p.add_argument("--lm", required=True)
    p.add_argument("--embedder", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", help="write per-epoch metrics JSONL (+ curve PNG)")
    p.set_defaults(func=_cmd_train_attacker)

    p = sub.add_parser("attack", help="produce adversarial records")
    _add_common(p)
    p.add_argument("mode", choices=("fgsm", "seq2seq", "origin"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--victim", required=True)
    p.add_argument("--ref-b")
    p.add_argument("--ref-c")
    p.add_argument("--attacker", help="trained generator checkpoint (seq2seq mode)")
    p.add_argument("--gen-mode", choices=("greedy", "sample"), default="greedy")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("evaluate", help="attack rates and rewrite quality")
    _add_common(p)
    p.add_argument("--records", required=True, nargs="+")
    p.add_argument("--mode", choices=("b", "c", "bc", "all"), default="all",
                   help="accepted for compatibility; reports always carry all modes")
    p.add_argument("--lm")
    p.add_argument("--embedder")
    p.add_argument("--ref-b")
    p.add_argument("--ref-c")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("adv-train", help="consensus-filtered adversarial retraining")
    _add_common(p)
    p.add_argument("--records", required=True)
    p.add_argument("--train", required=True, help="clean training corpus")
    p.add_argument("--mode", choices=("scratch", "finetune"), default="scratch")
    p.add_argument("--base", help="checkpoint to fine-tune (finetune mode)")
    p.add_argument("--cap", type=int)
    p.add_argument("--pseudo-out", help="write the pseudo-labeled corpus as CoNLL-U")
    p.add_argument("--finetune-epochs", type=int, default=2)
    p.add_argument("--finetune-lr", type=float, default=5e-4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_adv_train)

    p = sub.add_parser("significance", help="paired test between two attack runs")
    _add_common(p)
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--mode", choices=("b", "c", "bc"), default="bc")
    p.add_argument("--method", choices=("sign_bootstrap", "welch_t"), default="sign_bootstrap")
    p.add_argument("--resamples", type=int, default=10000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_significance)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    args.raw_argv = argv
    try:
        return args.func(args)
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SpadError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
