"""``cmpswhe`` command-line interface.

Exit status is 0 on success, 1 when a check embedded in a command fails
(an error-lab trend, a demo mismatch), and 2 for bad input.
"""
from __future__ import annotations

import argparse
import random
import sys
import time
from pathlib import Path

import numpy as np

from .batch import PackingKey, pack, parse_packing_key, plan_lanes, serialize_packing_key, unpack
from .cipher import decrypt, encrypt_private, parse_ciphertext, serialize_ciphertext
from .errors import CmpError
from .expr import eval_expr, parse_expr
from .keys import Envelope, KeyParams, PrivateKey, PublicKey, derive_keys, parse_keys, serialize_keys
from .modmath import next_primes


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers

def _rng(args) -> random.Random | None:
    return None if args.seed is None else random.Random(args.seed)


def _read_key(path, strict=True):
    if path is None:
        raise UsageError("this command needs a key file")
    return parse_keys(Path(path).read_text(), strict=strict)


def _private_key(args) -> PrivateKey:
    key = _read_key(args.key, strict=not args.no_param_check)
    if not isinstance(key, PrivateKey):
        raise UsageError(f"{args.key} is not a private key")
    return key


def _public_key(args) -> PublicKey:
    path = args.public_key or args.key
    if path is None:
        raise UsageError("this command needs --public-key (or --key)")
    key = _read_key(path, strict=not args.no_param_check)
    return key.pk if isinstance(key, PrivateKey) else key


def _demo_key(args) -> PrivateKey:
    """The --key file if given, else a key derived from --seed."""
    if args.key:
        return _private_key(args)
    seed = args.seed or 0
    return derive_keys(seed.to_bytes(16, "big"), 0)[1]


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _hex_key(text: str) -> bytes:
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hex string: {text!r}") from None
    if len(raw) != 16:
        raise argparse.ArgumentTypeError("user key must be 16 bytes (32 hex digits)")
    return raw


# ------------------------------------------------------------- subcommands

def cmd_keygen(args) -> int:
    timestamp = int(time.time()) if args.timestamp is None else args.timestamp
    params = KeyParams(
        n=args.pool, N=args.moduli, M=args.slots, start_bits=args.start_bits,
        envelope=Envelope(args.max_p, args.max_order, args.max_terms),
    )
    pk, sk = derive_keys(args.user_key, timestamp, params)
    Path(args.public_out).write_text(serialize_keys(pk))
    Path(args.private_out).write_text(serialize_keys(sk))
    print(f"wrote {args.public_out} and {args.private_out} (timestamp {timestamp})")
    return 0


def cmd_encrypt(args) -> int:
    sk = _private_key(args)
    ct = encrypt_private(args.value, sk, _rng(args), eta=args.eta)
    _write(args.output, serialize_ciphertext(ct))
    return 0


def cmd_decrypt(args) -> int:
    sk = _private_key(args)
    ct = parse_ciphertext(Path(args.ciphertext).read_text(), sk.pk)
    print(decrypt(ct, sk, args.round))
    return 0


def cmd_eval(args) -> int:
    pk = _public_key(args)
    env = {}
    for binding in args.bindings:
        name, sep, path = binding.partition("=")
        if not sep or not name:
            raise UsageError(f"binding must look like name=file, got {binding!r}")
        env[name] = parse_ciphertext(Path(path).read_text(), pk)
    node = parse_expr(args.expr)
    ct = eval_expr(node, env, pk)
    _write(args.output, serialize_ciphertext(ct))
    return 0


def cmd_pack(args) -> int:
    if args.new is not None:
        if args.public_key or args.key:
            plan = plan_lanes(args.new, args.lane_bound, (args.max_ops, args.max_order), _public_key(args))
            print(plan.message, file=sys.stderr)
            if not plan:
                return 1
            pkey = plan.key
        else:
            pkey = PackingKey(tuple(next_primes(2 * args.lane_bound, args.new)), args.lane_bound)
        _write(args.output, serialize_packing_key(pkey))
        return 0
    if args.packing_key is None:
        raise UsageError("pack needs --new K or --packing-key FILE")
    pkey = parse_packing_key(Path(args.packing_key).read_text())
    if args.unpack is not None:
        print(" ".join(str(v) for v in unpack(args.unpack, pkey)))
    else:
        print(pack(args.values, pkey))
    return 0


def cmd_bench(args) -> int:
    from .bench import run_bench

    sk = _demo_key(args)
    report = run_bench(sk, tuple(args.batch), args.size, args.runs, args.warmup,
                       seed=args.seed or 0, unbatched=args.unbatched)
    _write(args.output, report.to_csv())
    return 0


def cmd_errorlab(args) -> int:
    from .lab import SWEEPS, report_csv, run_lab

    sweeps = SWEEPS if args.sweep == "all" else (args.sweep,)
    results = run_lab(sweeps, args.reps, args.trials, args.seed or 0, args.workers)
    _write(args.output, report_csv(results))
    return 0 if all(r.passed for r in results) else 1


def _load_frames(paths, default):
    from .vision.frames import read_pgm

    return [read_pgm(p) for p in paths] if paths else default


def cmd_demo(args) -> int:
    from .vision import synthetic
    from .vision.frames import mask_frame, write_pgm
    from .vision.oracle import OracleSession

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = _rng(args)
    ok = True

    if args.pipeline == "mnist":
        from .inference import inference_keys, load_digits_sample, load_model, predict_blind, predict_fixed
        from .vision.frames import read_pgm

        model = load_model(args.model)
        _, sk = inference_keys()
        if args.inputs:
            images, labels = [read_pgm(p).data for p in args.inputs], [None] * len(args.inputs)
        else:
            images, labels = load_digits_sample()
            images, labels = images[: args.count], labels[: args.count]
        for i, (img, label) in enumerate(zip(images, labels)):
            digit, _ = predict_blind(img, model, sk, rng=rng)
            plain = predict_fixed(img, model)
            ok &= digit == plain
            print(f"image {i}: blind {digit} plaintext {plain}" + ("" if label is None else f" label {label}"))
        return 0 if ok else 1

    sk = _demo_key(args)
    session = OracleSession(sk, rng)
    if args.pipeline == "fgdiff":
        from .vision.pipelines import frame_diff_mask, frame_diff_mask_plain

        prev, cur = _load_frames(args.inputs, synthetic.fgdiff_pair(0))
        mask = frame_diff_mask(prev, cur, args.threshold, sk, session, rng)
        ok = bool(np.array_equal(mask, frame_diff_mask_plain(prev, cur, args.threshold)))
        write_pgm(out / "fgdiff_mask.pgm", mask_frame(mask))
        print(f"fgdiff: {int(mask.sum())} foreground pixels; equals plaintext mask: {ok}")
    elif args.pipeline == "bgdiff":
        from .vision.pipelines import bg_masks_blind, bg_masks_plain

        frames = _load_frames(args.inputs, synthetic.bg_sequence(0))
        alpha = (args.alpha_num, args.alpha_den)
        masks = bg_masks_blind(frames, args.threshold, alpha, sk, session, rng)
        plain = bg_masks_plain(frames, args.threshold, alpha)
        ok = all(np.array_equal(b, p) for b, p in zip(masks, plain))
        for i, m in enumerate(masks, start=1):
            write_pgm(out / f"bgdiff_mask_{i}.pgm", mask_frame(m))
        print(f"bgdiff: {len(masks)} masks; equal to plaintext masks: {ok}")
    elif args.pipeline == "flow":
        from .vision.frames import encrypt_frame
        from .vision.pipelines import frame_diff_mask_plain, optical_flow_blind, optical_flow_plain, select_points

        prev, cur = _load_frames(args.inputs, synthetic.fgdiff_pair(0))
        points = select_points(frame_diff_mask_plain(prev, cur, args.threshold), args.stride)
        flows, rejected = optical_flow_blind(encrypt_frame(prev, sk, rng), encrypt_frame(cur, sk, rng), points, session)
        ok = (flows, rejected) == optical_flow_plain(prev, cur, points)
        for (x, y), (dx, dy) in sorted(flows.items()):
            print(f"point ({x}, {y}) moved ({dx}, {dy})")
        print(f"flow: {len(flows)} points, {len(rejected)} rejected near the border; equal to plaintext: {ok}")
    elif args.pipeline == "detect":
        from .vision.detect import cascade_blind, cascade_multiscale, cascade_plain, parse_cascade
        from .vision.frames import encrypt_frame

        cascade = parse_cascade(Path(args.cascade).read_text()) if args.cascade else synthetic.toy_cascade()
        frames = _load_frames(args.inputs, [synthetic.detect_image(0)[0]])
        for frame in frames:
            blind = cascade_multiscale(
                frame, cascade, lambda f: cascade_blind(encrypt_frame(f, sk, rng), cascade, session, args.step), args.scales
            )
            plain = cascade_multiscale(frame, cascade, lambda f: cascade_plain(f, cascade, args.step), args.scales)
            ok &= blind == plain
            for box in blind:
                print("box x={} y={} w={} h={}".format(*box))
        print(f"detect: equal to plaintext boxes: {ok}")
    return 0 if ok else 1


def gradient_frame(width: int = 32, height: int = 32):
    from .vision.frames import Frame

    return Frame.from_array((np.arange(width * height) % 256).reshape(height, width))


def flatness_statistic(residues: np.ndarray, modulus: int, bins: int = 16):
    """Chi-square statistic of residues in ``bins`` equal-width bins; ``(stat, dof)``."""
    counts = np.bincount((np.asarray(residues, dtype=object) * bins // modulus).astype(np.int64).ravel(), minlength=bins)
    # bins cover slightly different numbers of residues when bins does not divide b
    edges = [-(-k * modulus // bins) for k in range(bins + 1)]
    probs = np.diff(edges) / modulus
    expected = probs * counts.sum()
    return float(((counts - expected) ** 2 / expected).sum()), bins - 1


def cmd_residue_image(args) -> int:
    from .vision.frames import Frame, encrypt_frame, read_pgm, write_pgm

    sk = _demo_key(args)
    frame = read_pgm(args.input) if args.input else gradient_frame()
    ef = encrypt_frame(frame, sk, _rng(args))
    row = args.row
    if not 0 <= row < sk.pk.N:
        raise UsageError(f"row must be in [0, {sk.pk.N})")
    b = sk.mset.moduli[row]
    slot = sk.template[row] if args.slot is None else args.slot
    residues = ef.cells.matrix()[..., row, slot]
    img = (residues.astype(object) * 256 // b).astype(np.int64)
    write_pgm(args.output, Frame.from_array(img))
    stat, dof = flatness_statistic(ef.cells.matrix()[..., row, :], b)
    print(f"wrote {args.output}: modulus row {row} (b={b}), slot {slot}; chi-square {stat:.2f} on {dof} dof")
    return 0


# ------------------------------------------------------------------ parser

def _common(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--key", default=default, help="private key file")
    parser.add_argument("--public-key", default=default, help="public key file")
    parser.add_argument("--round", choices=("floor", "nearest"), default=argparse.SUPPRESS if suppress else "nearest")
    parser.add_argument("--seed", type=int, default=default, help="seed for reproducible randomness")
    parser.add_argument("--workers", type=int, default=argparse.SUPPRESS if suppress else 1)
    parser.add_argument("--no-param-check", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="accept private keys that break the parameter rules (toy examples)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmpswhe", description=__doc__.splitlines()[0])
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        _common(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("keygen", cmd_keygen, "derive a key pair from a user key and timestamp")
    p.add_argument("--user-key", type=_hex_key, required=True, help="16-byte key as hex")
    p.add_argument("--timestamp", type=int, help="defaults to the current time")
    p.add_argument("--pool", type=int, default=64, help="prime pool size n")
    p.add_argument("--moduli", type=int, default=20, help="modulus count N")
    p.add_argument("--slots", type=int, default=64, help="slots per row M")
    p.add_argument("--start-bits", type=int, default=61)
    p.add_argument("--max-p", type=int, default=65535)
    p.add_argument("--max-order", type=int, default=4)
    p.add_argument("--max-terms", type=int, default=16)
    p.add_argument("--public-out", default="key.pub")
    p.add_argument("--private-out", default="key.sec")

    p = add("encrypt", cmd_encrypt, "encrypt an integer with the private key")
    p.add_argument("value", type=int)
    p.add_argument("--eta", type=int, help="explicit randomization (reproduces known ciphertexts)")
    p.add_argument("-o", "--output")

    p = add("decrypt", cmd_decrypt, "decrypt a ciphertext file")
    p.add_argument("ciphertext")

    p = add("eval", cmd_eval, "evaluate an expression blind over ciphertext files")
    p.add_argument("expr")
    p.add_argument("bindings", nargs="*", help="name=ciphertext-file")
    p.add_argument("-o", "--output")

    p = add("pack", cmd_pack, "create a packing key, pack lane values, or unpack")
    p.add_argument("values", nargs="*", type=int)
    p.add_argument("--new", type=int, metavar="K", help="create a packing key with K lanes")
    p.add_argument("--lane-bound", type=int, default=255)
    p.add_argument("--max-ops", type=int, default=2)
    p.add_argument("--max-order", type=int, default=1)
    p.add_argument("--packing-key")
    p.add_argument("--unpack", type=int, metavar="X")
    p.add_argument("-o", "--output")

    p = add("bench", cmd_bench, "time the packed frame-difference kernel per batch size")
    p.add_argument("--batch", type=int, nargs="+", default=[1, 16])
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--unbatched", action="store_true", help="also time the one-ciphertext-per-pixel path")
    p.add_argument("-o", "--output")

    p = add("errorlab", cmd_errorlab, "amplification, depth and imbalance error sweeps")
    p.add_argument("--sweep", choices=("all", "amplification", "depth", "imbalance"), default="all")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--trials", type=int, default=64)
    p.add_argument("-o", "--output")

    p = add("demo", cmd_demo, "run a blind pipeline and compare it with plaintext")
    p.add_argument("pipeline", choices=("fgdiff", "bgdiff", "flow", "detect", "mnist"))
    p.add_argument("inputs", nargs="*", help="PGM inputs; bundled synthetic data if omitted")
    p.add_argument("--out", default="demo_out")
    p.add_argument("--threshold", type=int, default=20)
    p.add_argument("--alpha-num", type=int, default=1)
    p.add_argument("--alpha-den", type=int, default=4)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--cascade", help="cascade text file (toy cascade if omitted)")
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--scales", type=int, nargs="+", default=[1], help="integer downscale factors")
    p.add_argument("--model", help="model text file (bundled toy MLP if omitted)")
    p.add_argument("--count", type=int, default=5)

    p = add("residue-image", cmd_residue_image, "write one modulus row of an encrypted image as PGM")
    p.add_argument("--input", help="PGM input; a 256-level gradient if omitted")
    p.add_argument("--row", type=int, default=0)
    p.add_argument("--slot", type=int, help="slot to show (the true slot if omitted)")
    p.add_argument("-o", "--output", default="residues.pgm")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, CmpError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
