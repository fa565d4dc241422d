"""CRT-residue somewhat homomorphic encryption with blind vision pipelines."""
from .cipher import (
    Ciphertext,
    decrypt,
    decrypt_raw,
    encrypt_private,
    encrypt_public,
    parse_ciphertext,
    serialize_ciphertext,
)
from .expr import error_bound, eval_expr, eval_plain, parse_expr, plan_expr
from .keys import Envelope, KeyParams, PrivateKey, PublicKey, derive_keys, parse_keys, serialize_keys
from .modmath import ModulusSet, capacity_check, crt_reconstruct, gen_prime_pool, mod_inverse
from .ops import blind_add, blind_mul, blind_neg, blind_pow, blind_sub, homogenize, semiblind

__version__ = "0.1.0"
