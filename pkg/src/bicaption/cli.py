"""Command-line entry point.

Commands: train, caption, retrieve, eval-bleu, gradcheck, augment-plan,
dump-gates. Every command accepts --config with key=value lines; explicit
flags win over config values. All errors exit nonzero with one diagnostic
line on stderr (2 for data/config problems, 3 for shape mismatches).
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import infer, metrics
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import BicaptionError, ConfigError, DataError, ShapeError
from .model import (ArchitectureKind, BACKWARD, FORWARD, init_model,
                    random_model)
from .train import (TrainConfig, grad_check, make_state, mean_joint_loss,
                    train_epochs)

ARCH_BY_NAME = {a.value: a for a in ArchitectureKind}

PROFILES = {
    "toy": dict(hidden_dim=16, min_count=1, batch_size=2, max_epochs=30,
                patience=5),
    "paper": dict(hidden_dim=1000, min_count=5, batch_size=100, max_epochs=35,
                  patience=5),
}


def _load_config_file(path, allowed: set[str]) -> dict[str, str]:
    cfg: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in allowed:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            cfg[key] = value.strip()
    return cfg


class Options:
    """Merged view of flags, config-file values, and defaults (flags win)."""

    def __init__(self, args, keys: dict):
        self._cfg = {}
        if getattr(args, "config", None):
            self._cfg = _load_config_file(args.config, set(keys))
        self._args = args
        self._keys = keys

    def get(self, key, default=None):
        flag = getattr(self._args, key, None)
        if flag is not None:
            return flag
        if key in self._cfg:
            return self._keys[key](self._cfg[key])
        return default


def _parse_arch(name: str) -> ArchitectureKind:
    if name not in ARCH_BY_NAME:
        raise ConfigError(
            f"unknown architecture {name!r}; choose from {sorted(ARCH_BY_NAME)}"
        )
    return ARCH_BY_NAME[name]


def _read_corpus(captions_path, features_path):
    captions = data_mod.read_captions(captions_path)
    features = data_mod.read_features(features_path)
    return captions, features


def _check_feature_dim(m, features, path):
    for image_id, vec in features.items():
        if vec.shape[0] != m.feature_dim:
            raise ShapeError(
                f"{path}: feature for {image_id!r} has dim {vec.shape[0]}, "
                f"checkpoint expects {m.feature_dim}"
            )


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_KEYS = {
    "arch": str, "profile": str, "seed": int, "hidden_dim": int,
    "embed_dim": int, "min_count": int, "lr": float, "momentum": float,
    "weight_decay": float, "batch_size": int, "max_epochs": int,
    "patience": int, "grad_clip": float,
}


def cmd_train(args) -> int:
    opt = Options(args, TRAIN_KEYS)
    profile_name = opt.get("profile", "toy")
    profile = PROFILES.get(profile_name)
    if profile is None:
        raise ConfigError(f"unknown profile {profile_name!r}")

    captions, features = _read_corpus(args.captions, args.features)
    if args.val_captions:
        val_captions = data_mod.read_captions(args.val_captions)
        val_features = data_mod.read_features(args.val_features or args.features)
    else:
        val_captions, val_features = captions, features

    min_count = opt.get("min_count", profile["min_count"])
    vocab = data_mod.build_vocab(captions, min_count=min_count)
    train_set = data_mod.assemble_examples(vocab, captions, features)
    val_set = data_mod.assemble_examples(vocab, val_captions, val_features)

    feature_dim = train_set[0].feature.shape[0]
    hidden_dim = opt.get("hidden_dim", profile["hidden_dim"])
    embed_dim = opt.get("embed_dim", hidden_dim)
    seed = opt.get("seed", 0)
    arch = _parse_arch(opt.get("arch", "bi-lstm"))

    patience = opt.get("patience", profile["patience"])
    cfg = TrainConfig(
        learning_rate=opt.get("lr", 0.01),
        momentum=opt.get("momentum", 0.9),
        weight_decay=opt.get("weight_decay", 0.0005),
        batch_size=opt.get("batch_size", profile["batch_size"]),
        max_epochs=opt.get("max_epochs", profile["max_epochs"]),
        early_stop_patience=None if patience < 0 else patience,
        grad_clip=opt.get("grad_clip"),
        seed=seed,
    )

    model = init_model(arch, vocab.size, feature_dim, embed_dim, hidden_dim,
                       seed=seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.tsv"
    with open(log_path, "w", encoding="utf-8") as log:
        log.write(f"0\tnan\t{mean_joint_loss(model, val_set):.17g}\n")

        def hook(epoch, train_loss, val_loss):
            log.write(f"{epoch}\t{train_loss:.17g}\t{val_loss:.17g}\n")

        state = train_epochs(make_state(model), train_set, val_set, cfg,
                             epoch_hook=hook)

    save_checkpoint(state.model, out_dir / "model.ckpt")
    data_mod.write_vocab(out_dir / "vocab.txt", vocab)
    print(f"saved checkpoint to {out_dir / 'model.ckpt'} "
          f"(best val loss {state.best_val_loss:.6f})")
    return 0


# ---------------------------------------------------------------------------
# caption
# ---------------------------------------------------------------------------

CAPTION_KEYS = {"beam": int, "max_len": int}


def cmd_caption(args) -> int:
    opt = Options(args, CAPTION_KEYS)
    beam_k = opt.get("beam", 1)
    max_len = opt.get("max_len", 50)
    m = load_checkpoint(args.checkpoint)
    vocab = data_mod.read_vocab(args.vocab)
    features = data_mod.read_features(args.features)
    _check_feature_dim(m, features, args.features)

    gates_dir = Path(args.dump_gates) if args.dump_gates else None
    if gates_dir is not None:
        gates_dir.mkdir(parents=True, exist_ok=True)

    for image_id, feature in features.items():
        hf = infer.decode_direction(m, FORWARD, feature, beam_k=beam_k,
                                    max_len=max_len)
        hb = infer.decode_direction(m, BACKWARD, feature, beam_k=beam_k,
                                    max_len=max_len)
        sel = infer.select_final_caption(hf, hb)
        text = " ".join(vocab.decode(sel.caption))
        print(f"{image_id}\t{sel.chosen}\t{hf.logprob_sum:.6f}"
              f"\t{hb.logprob_sum:.6f}\t{text}")
        if gates_dir is not None:
            for direction in (FORWARD, BACKWARD):
                tr = infer.dump_gate_trace(m, feature, direction,
                                           max_len=max_len, vocab=vocab)
                infer.write_gate_trace(
                    tr,
                    gates_dir / f"{image_id}.{direction}.gates.csv",
                    gates_dir / f"{image_id}.{direction}.words.csv",
                )
    return 0


# ---------------------------------------------------------------------------
# retrieve
# ---------------------------------------------------------------------------

RETRIEVE_KEYS = {"k_list": str}


def cmd_retrieve(args) -> int:
    opt = Options(args, RETRIEVE_KEYS)
    k_list = [int(k) for k in opt.get("k_list", "1,5,10").split(",")]
    m = load_checkpoint(args.checkpoint)
    vocab = data_mod.read_vocab(args.vocab)
    captions = data_mod.read_captions(args.captions)
    features = data_mod.read_features(args.features)
    _check_feature_dim(m, features, args.features)

    image_ids = []
    for image_id, _ in captions:
        if image_id not in image_ids:
            image_ids.append(image_id)
    for image_id in image_ids:
        if image_id not in features:
            raise DataError(f"no feature vector for image {image_id!r}")

    sentences = []
    ground_truth: dict[int, set[int]] = {i: set() for i in range(len(image_ids))}
    row_of = {image_id: i for i, image_id in enumerate(image_ids)}
    for j, (image_id, text) in enumerate(captions):
        tokens = vocab.encode(text)
        if not tokens:
            raise DataError(f"caption {j} for {image_id!r} has no tokens")
        sentences.append((f"s{j}", tokens))
        ground_truth[row_of[image_id]].add(j)

    sm = metrics.build_score_matrix(
        m, [(i, features[i]) for i in image_ids], sentences)
    if args.matrix_out:
        metrics.write_score_matrix(sm, args.matrix_out)

    for direction in (metrics.IMAGE_TO_SENTENCE, metrics.SENTENCE_TO_IMAGE):
        for k in k_list:
            value = metrics.recall_at_k(sm, ground_truth, k, direction)
            print(f"{direction}_R@{k},{value:.6f}")
        print(f"{direction}_Med_r,{metrics.median_rank(sm, ground_truth, direction):.6f}")
    return 0


# ---------------------------------------------------------------------------
# eval-bleu
# ---------------------------------------------------------------------------

EVAL_BLEU_KEYS = {"max_n": int}


def cmd_eval_bleu(args) -> int:
    opt = Options(args, EVAL_BLEU_KEYS)
    max_n = opt.get("max_n", 4)
    candidates = data_mod.read_captions(args.candidates)
    references = data_mod.read_captions(args.references)
    refs_by_image: dict[str, list[list[str]]] = {}
    for image_id, text in references:
        refs_by_image.setdefault(image_id, []).append(data_mod.tokenize(text))

    pairs = []
    for image_id, text in candidates:
        refs = refs_by_image.get(image_id)
        if not refs:
            raise DataError(f"no references for image {image_id!r}")
        pairs.append((data_mod.tokenize(text), refs))

    for n in range(1, max_n + 1):
        report = metrics.corpus_bleu_n(pairs, n)
        print(f"BLEU-{n},{report.score:.6f}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

GRADCHECK_KEYS = {
    "arch": str, "vocab_size": int, "feature_dim": int, "embed_dim": int,
    "hidden_dim": int, "caption_len": int, "seed": int, "tolerance": float,
    "epsilon": float,
}


def cmd_gradcheck(args) -> int:
    opt = Options(args, GRADCHECK_KEYS)
    arch = _parse_arch(opt.get("arch", "bi-lstm"))
    vocab_size = opt.get("vocab_size", 7)
    feature_dim = opt.get("feature_dim", 3)
    embed_dim = opt.get("embed_dim", 4)
    hidden_dim = opt.get("hidden_dim", 5)
    caption_len = opt.get("caption_len", 3)
    seed = opt.get("seed", 0)
    tolerance = opt.get("tolerance", 1e-5)
    epsilon = opt.get("epsilon", 1e-6)

    # unit-scale weights keep every block resolvable by central differences
    m = random_model(arch, vocab_size, feature_dim, embed_dim, hidden_dim,
                     seed=seed)
    rng = np.random.default_rng([seed, 1])
    tokens = [int(t) for t in rng.integers(2, vocab_size, size=caption_len)]
    feature = rng.uniform(-0.5, 0.5, size=feature_dim)
    ex = data_mod.CaptionedExample(image_id="gradcheck", feature=feature,
                                   tokens=tokens)
    report = grad_check(m, ex, epsilon=epsilon, tolerance=tolerance)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# augment-plan
# ---------------------------------------------------------------------------

AUGMENT_KEYS = {"base": int, "crop": int, "crop_small": int}


def cmd_augment_plan(args) -> int:
    opt = Options(args, AUGMENT_KEYS)
    base = opt.get("base", 256)
    crop = opt.get("crop", 227)
    crop_small = opt.get("crop_small", 196)

    if args.dims_file:
        entries = []
        with open(args.dims_file, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DataError(
                        f"{args.dims_file}:{lineno}: expected image_id<TAB>w<TAB>h"
                    )
                entries.append((parts[0], int(parts[1]), int(parts[2])))
    else:
        if args.width is None or args.height is None:
            raise ConfigError("augment-plan needs --dims-file or --width/--height")
        entries = [(args.image_id, args.width, args.height)]

    for image_id, w, h in entries:
        plan = data_mod.augment_plan(w, h, base=base, crop=crop,
                                     crop_small=crop_small)
        for line in data_mod.augment_plan_lines(image_id, plan):
            print(line)
    return 0


# ---------------------------------------------------------------------------
# dump-gates
# ---------------------------------------------------------------------------

DUMP_GATES_KEYS = {"direction": str, "max_len": int}


def cmd_dump_gates(args) -> int:
    opt = Options(args, DUMP_GATES_KEYS)
    direction = opt.get("direction", FORWARD)
    if direction not in (FORWARD, BACKWARD):
        raise ConfigError(f"direction must be forward or backward, got {direction!r}")
    max_len = opt.get("max_len", 50)
    m = load_checkpoint(args.checkpoint)
    vocab = data_mod.read_vocab(args.vocab) if args.vocab else None
    features = data_mod.read_features(args.features)
    _check_feature_dim(m, features, args.features)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for image_id, feature in features.items():
        trace = infer.dump_gate_trace(m, feature, direction, max_len=max_len,
                                      vocab=vocab)
        infer.write_gate_trace(
            trace,
            out_dir / f"{image_id}.{direction}.gates.csv",
            out_dir / f"{image_id}.{direction}.words.csv",
        )
        print(f"{image_id}\t{len(trace.t_steps)} steps")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bicaption",
        description="Bidirectional multimodal LSTM captioning toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value file; flags win on conflict")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    add_common(p)
    p.add_argument("--captions", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--val-captions")
    p.add_argument("--val-features")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--arch", choices=sorted(ARCH_BY_NAME))
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--min-count", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--grad-clip", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("caption", help="generate captions for feature vectors")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--beam", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--dump-gates", metavar="DIR")
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("retrieve", help="image/sentence retrieval metrics")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--k-list")
    p.add_argument("--matrix-out")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval-bleu", help="corpus BLEU of candidates vs references")
    add_common(p)
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--max-n", type=int)
    p.set_defaults(func=cmd_eval_bleu)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    add_common(p)
    p.add_argument("--arch", choices=sorted(ARCH_BY_NAME))
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--feature-dim", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--caption-len", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("augment-plan", help="emit crop/scale/mirror variants")
    add_common(p)
    p.add_argument("--dims-file")
    p.add_argument("--image-id", default="image")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--base", type=int)
    p.add_argument("--crop", type=int)
    p.add_argument("--crop-small", type=int)
    p.set_defaults(func=cmd_augment_plan)

    p = sub.add_parser("dump-gates", help="export gate/cell state traces")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--vocab")
    p.add_argument("--direction")
    p.add_argument("--max-len", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_dump_gates)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        name = e.filename if e.filename else e
        print(f"error: file not found: {name}", file=sys.stderr)
        return 2
    except ShapeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except BicaptionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
