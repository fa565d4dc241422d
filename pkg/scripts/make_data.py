"""Regenerate the small bundled data files (fixtures, cascade, sample frames)."""
from pathlib import Path

from cmpswhe import fixtures
from cmpswhe.cipher import serialize_ciphertext
from cmpswhe.keys import serialize_keys
from cmpswhe.vision import synthetic
from cmpswhe.vision.detect import serialize_cascade
from cmpswhe.vision.frames import write_pgm

DATA = Path(__file__).resolve().parents[1] / "src" / "cmpswhe" / "data"


def main():
    pk, sk = fixtures.worked_keys()
    x, y = fixtures.figure_ciphertexts(pk)
    (DATA / "worked.pub").write_text(serialize_keys(pk))
    (DATA / "worked.sec").write_text(serialize_keys(sk))
    (DATA / "worked_x.ct").write_text(serialize_ciphertext(x))
    (DATA / "worked_y.ct").write_text(serialize_ciphertext(y))
    (DATA / "toy_cascade.txt").write_text(serialize_cascade(synthetic.toy_cascade()))
    prev, cur = synthetic.fgdiff_pair(0)
    write_pgm(DATA / "pair_prev.pgm", prev)
    write_pgm(DATA / "pair_cur.pgm", cur)
    write_pgm(DATA / "detect.pgm", synthetic.detect_image(0)[0])


if __name__ == "__main__":
    main()
