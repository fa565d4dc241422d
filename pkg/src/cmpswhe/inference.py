"""Toy blind MLP inference with a polynomial ReLU stand-in.

Everything runs in fixed point with ``c = 10**n``. Scales are tracked as
powers of ``c``:

* the input layer holds ``round(pixel * c / 255)`` (scale ``c``);
* a dense layer multiplies scale-``c`` weights into scale-``c`` inputs,
  giving scale ``c**2``; the oracle divides by ``c`` to return to ``c``;
* the activation ``sum_j k_j x**(m-j) c**j`` with ``k_j = floor(c * r_j)``
  maps scale ``c`` to scale ``c**(m+1)``; the oracle divides by ``c**m``.

The last dense layer is decrypted by the client at scale ``c**2`` and the
argmax (smallest index on ties) is the prediction. Rescaling is the only
step that needs the private key; it is done by an :class:`OracleSession`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import ROUND_FLOOR, Decimal
from importlib import resources
from pathlib import Path

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial

from .cipher import Ciphertext, decrypt, encrypt_private, encrypt_public, round_quotient
from .errors import CapacityError, DimensionError, FormatError
from .keys import Envelope, KeyParams, PrivateKey, PublicKey, derive_keys
from .ops import blind_add, blind_mul, blind_pow, blind_sum, semiblind
from .vision.frames import Frame
from .vision.oracle import OracleSession

MODEL_MAGIC = "mlp v1"
FIT_NODES = 2001


def to_fixed(f: float, n: int) -> int:
    """``floor(10**n * f)`` computed on the decimal representation of ``f``.

    Working in decimal keeps ``to_fixed(0.29, 2) == 29`` (binary floating
    point would give 28.999...).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    return int(Decimal(repr(float(f))).scaleb(n).to_integral_value(rounding=ROUND_FLOOR))


# ------------------------------------------------------------- activation

@dataclass(frozen=True)
class PolyActivation:
    """``R(x) = sum_j coeffs[j] * x**(degree - j)``, highest power first."""

    coeffs: tuple[float, ...]
    lo: float
    hi: float
    max_deviation: float

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        return np.polyval(np.asarray(self.coeffs), x)

    def fixed(self, n: int) -> tuple[int, ...]:
        return tuple(to_fixed(r, n) for r in self.coeffs)


def _max_relu_deviation(poly: Polynomial, lo: float, hi: float) -> float:
    # |R - relu| is smooth on [lo, 0] and [0, hi]: the maximum sits at an
    # endpoint, at 0, or where R' = 0 (left) or R' = 1 (right)
    d = poly.deriv()
    candidates = [lo, hi, 0.0]
    for target, a, b in ((0.0, lo, 0.0), (1.0, 0.0, hi)):
        for root in (d - target).roots():
            if abs(root.imag) < 1e-12 and a <= root.real <= b:
                candidates.append(float(root.real))
    xs = np.array(candidates)
    return float(np.max(np.abs(poly(xs) - np.maximum(xs, 0.0))))


def fit_relu_poly(degree: int, lo: float = -1.0, hi: float = 1.0) -> PolyActivation:
    """Least-squares Chebyshev fit of ``max(0, x)`` on ``[lo, hi]``.

    The fit is taken over dense Chebyshev nodes, which is close to the
    minimax polynomial, and ``max_deviation`` is the exact maximum of
    ``|R(x) - relu(x)|`` on the interval.
    """
    if degree < 2:
        raise ValueError("degree must be >= 2")
    if not lo < 0 < hi:
        raise ValueError(f"interval [{lo}, {hi}] must straddle 0")
    k = np.arange(FIT_NODES)
    nodes = np.cos(np.pi * (k + 0.5) / FIT_NODES)
    xs = lo + (nodes + 1) * (hi - lo) / 2
    cheb = Chebyshev.fit(xs, np.maximum(xs, 0.0), degree, domain=[lo, hi])
    poly = cheb.convert(kind=Polynomial, domain=[-1, 1], window=[-1, 1])
    coef = np.zeros(degree + 1)
    coef[: len(poly.coef)] = poly.coef
    return PolyActivation(
        coeffs=tuple(float(c) for c in coef[::-1]),
        lo=float(lo),
        hi=float(hi),
        max_deviation=_max_relu_deviation(poly, lo, hi),
    )


def activation_fixed(x: int, kcoef, c: int) -> int:
    """Plain fixed-point ``sum_j k_j x**(m-j) c**j``; scale ``c**(m+1)``."""
    m = len(kcoef) - 1
    return sum(k * x ** (m - j) * c**j for j, k in enumerate(kcoef))


# ------------------------------------------------------------------ model

@dataclass(frozen=True, eq=False)
class FixedPointModel:
    """Bias-free MLP; ``weights[i]`` has shape ``(out, in)``."""

    float_weights: tuple[np.ndarray, ...]
    n: int
    activation: PolyActivation

    def __post_init__(self):
        for w_prev, w in zip(self.float_weights, self.float_weights[1:]):
            if w.shape[1] != w_prev.shape[0]:
                raise DimensionError("layer dimensions do not chain")
        to = np.vectorize(lambda f: to_fixed(f, self.n), otypes=[object])
        object.__setattr__(self, "weights", tuple(to(w) for w in self.float_weights))

    @property
    def c(self) -> int:
        return 10**self.n

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.float_weights[0].shape[1],) + tuple(w.shape[0] for w in self.float_weights)

    @property
    def act_coeffs(self) -> tuple[int, ...]:
        return self.activation.fixed(self.n)

    def magnifications(self) -> list[int]:
        """Oracle divisors in order: per hidden layer, dense then activation."""
        m = self.activation.degree
        return [self.c, self.c**m] * (len(self.float_weights) - 1)


def parse_model(text: str) -> FixedPointModel:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != MODEL_MAGIC:
        raise FormatError(f"model file must start with {MODEL_MAGIC!r}")
    try:
        head = dict(ln.split(None, 1) for ln in lines[1:5])
        layers = int(head["layers"])
        dims = [int(v) for v in head["dims"].split()]
        n = int(head["n"])
        act = dict(kv.split("=") for kv in head["activation"].split())
        degree, lo, hi = int(act["degree"]), float(act["lo"]), float(act["hi"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed model header: {exc}") from exc
    if len(dims) != layers + 1:
        raise FormatError("dims must list layers + 1 sizes")
    rows = lines[5:]
    weights = []
    for i in range(layers):
        out_dim, in_dim = dims[i + 1], dims[i]
        if len(rows) < 1 + out_dim or not re.fullmatch(rf"matrix {out_dim} {in_dim}", rows[0]):
            raise FormatError(f"layer {i}: expected 'matrix {out_dim} {in_dim}'")
        try:
            mat = np.array([[float(v) for v in r.split()] for r in rows[1:1 + out_dim]])
        except ValueError as exc:
            raise FormatError(f"layer {i}: non-numeric weight") from exc
        if mat.shape != (out_dim, in_dim):
            raise FormatError(f"layer {i}: weight rows have the wrong length")
        weights.append(mat)
        rows = rows[1 + out_dim:]
    if rows:
        raise FormatError("trailing data after the last layer")
    return FixedPointModel(tuple(weights), n, fit_relu_poly(degree, lo, hi))


def serialize_model(model: FixedPointModel) -> str:
    act = model.activation
    out = [
        MODEL_MAGIC,
        f"layers {len(model.float_weights)}",
        "dims " + " ".join(str(d) for d in model.dims),
        f"n {model.n}",
        f"activation degree={act.degree} lo={act.lo!r} hi={act.hi!r}",
    ]
    for w in model.float_weights:
        out.append(f"matrix {w.shape[0]} {w.shape[1]}")
        out.extend(" ".join(repr(float(v)) for v in row) for row in w)
    return "\n".join(out) + "\n"


def load_model(path=None) -> FixedPointModel:
    if path is None:
        return parse_model(resources.files("cmpswhe.data").joinpath("toy_mlp.txt").read_text())
    return parse_model(Path(path).read_text())


def load_digits_sample():
    """The bundled 200-image 28x28 test sample: ``(images uint8, labels)``."""
    with resources.as_file(resources.files("cmpswhe.data").joinpath("digits_test.npz")) as p:
        data = np.load(p)
        return data["images"], data["labels"]


# ------------------------------------------------------ plaintext pipelines

def encode_input(pixels, c: int) -> np.ndarray:
    """Fold the division by 255 into fixed point: ``round(pixel * c / 255)``."""
    flat = np.asarray(pixels, dtype=np.int64).reshape(-1)
    return np.array([round_quotient(int(p) * c, 255) for p in flat], dtype=object)


def predict_float(pixels, model: FixedPointModel) -> int:
    x = np.asarray(pixels, dtype=float).reshape(-1) / 255.0
    for i, w in enumerate(model.float_weights):
        x = w @ x
        if i < len(model.float_weights) - 1:
            x = model.activation(x)
    return int(np.argmax(x))


def fixed_forward(pixels, model: FixedPointModel):
    """Plain fixed-point pipeline; returns every rescaled layer and the output.

    The output is at scale ``c**2``. Intermediate entries are at scale ``c``.
    """
    c, kcoef = model.c, model.act_coeffs
    m = len(kcoef) - 1
    x = encode_input(pixels, c)
    trace = [x]
    for i, w in enumerate(model.weights):
        z = w.dot(x)
        if i == len(model.weights) - 1:
            return trace, z
        z = np.array([round_quotient(int(v), c) for v in z], dtype=object)
        trace.append(z)
        act = np.array([activation_fixed(int(v), kcoef, c) for v in z], dtype=object)
        x = np.array([round_quotient(int(v), c**m) for v in act], dtype=object)
        trace.append(x)
    raise AssertionError("unreachable")


def argmax_first(values) -> int:
    values = [int(v) for v in values]
    return values.index(max(values))


def predict_fixed(pixels, model: FixedPointModel) -> int:
    return argmax_first(fixed_forward(pixels, model)[1])


# ------------------------------------------------------------ blind layers

def encrypt_weights(model: FixedPointModel, pk: PublicKey) -> list[Ciphertext]:
    return [encrypt_public(w, pk) for w in model.weights]


def blind_dense(layer: Ciphertext, weights: Ciphertext) -> Ciphertext:
    """Blind matrix-vector product: ``layer`` is ``(in,)``, ``weights`` ``(out, in)``."""
    if len(weights.shape) != 2 or weights.shape[1:] != layer.shape:
        raise DimensionError(f"weights {weights.shape} do not conform to input {layer.shape}")
    return blind_sum(blind_mul(weights, layer), axis=1)


def blind_activation(x: Ciphertext, kcoef, c: int, pk: PublicKey | None = None) -> Ciphertext:
    """``sum_j k_j x**(m-j) c**j`` by blind powers and semi-blind multiplies."""
    pk = pk or x.pk
    m = len(kcoef) - 1
    total = None
    for j, k in enumerate(kcoef):
        if j < m:
            term = semiblind("mul", blind_pow(x, m - j), k * c**j, pk)
        else:
            term = encrypt_public(k * c**m, pk)
        total = term if total is None else blind_add(total, term)
    return total


def rescale_oracle(session: OracleSession, x: Ciphertext, magnification: int) -> Ciphertext:
    return session.rescale(x, magnification)


def _check_capacity(bound: int, order: int, pk: PublicKey, where: str) -> None:
    need = 2 * pk.a**order * (bound + 1)
    if need >= pk.mset.product:
        raise CapacityError(
            f"{where}: value bound {bound} at order {order} needs a modulus "
            f"product above {need}",
            required=need,
            available=pk.mset.product,
        )


def check_model_capacity(model: FixedPointModel, pk: PublicKey) -> None:
    """Worst-case magnitude check of every blind step before running."""
    c, kcoef = model.c, model.act_coeffs
    m = len(kcoef) - 1
    bound = c  # encoded input
    for i, w in enumerate(model.weights):
        row = max(sum(abs(int(v)) for v in r) for r in w)
        dense = row * bound
        _check_capacity(dense, 2, pk, f"layer {i} dense")
        if i == len(model.weights) - 1:
            return
        bound = dense // c + 1
        act = sum(abs(k) * bound ** (m - j) * c**j for j, k in enumerate(kcoef))
        _check_capacity(act, m + 1, pk, f"layer {i} activation")
        bound = act // c**m + 1


def predict_blind(pixels, model: FixedPointModel, sk: PrivateKey, session: OracleSession | None = None, rng=None, enc_weights=None):
    """Encrypt, run the network blind with oracle rescaling, decrypt, argmax.

    Returns ``(digit, decrypted output vector)``.
    """
    pk = sk.pk
    session = session or OracleSession(sk, rng)
    check_model_capacity(model, pk)
    enc_weights = enc_weights or encrypt_weights(model, pk)
    c, kcoef = model.c, model.act_coeffs
    m = len(kcoef) - 1
    x = encrypt_private(encode_input(pixels, c), sk, rng)
    for i, w in enumerate(enc_weights):
        z = blind_dense(x, w)
        if i == len(enc_weights) - 1:
            out = np.asarray(decrypt(z, sk), dtype=object)
            return argmax_first(out), out
        z = rescale_oracle(session, z, c)
        x = rescale_oracle(session, blind_activation(z, kcoef, c, pk), c**m)
    raise AssertionError("unreachable")


def inference_keys(user_key: bytes = bytes(16), timestamp: int = 0, start_bits: int = 31):
    """Keys with 31-bit moduli (fast int64 residues) and an envelope wide
    enough for fixed-point weights and activations."""
    params = KeyParams(start_bits=start_bits, envelope=Envelope(max_p=2**40, max_order=3, max_terms=1024))
    return derive_keys(user_key, timestamp, params)


def frame_pixels(frame: Frame) -> np.ndarray:
    if (frame.width, frame.height) != (28, 28):
        raise DimensionError("inference expects a 28x28 frame")
    return frame.data
