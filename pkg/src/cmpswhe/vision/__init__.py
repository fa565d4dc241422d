"""Blind image pipelines: a compute role holding the public key and an
oracle session holding the private key."""
from .detect import (
    Cascade,
    Rect,
    Stage,
    Stump,
    cascade_blind,
    cascade_plain,
    haar_blind,
    haar_plain,
    integral_blind,
    integral_plain,
    parse_cascade,
    serialize_cascade,
)
from .frames import (
    EncFrame,
    Frame,
    decrypt_frame,
    decrypt_packed,
    encrypt_frame,
    encrypt_frame_packed,
    read_pgm,
    write_pgm,
)
from .oracle import OracleSession, threshold_oracle
from .pipelines import (
    bg_diff_blind,
    bg_masks_blind,
    bg_masks_plain,
    frame_diff_blind,
    frame_diff_mask,
    frame_diff_mask_plain,
    optical_flow_blind,
    optical_flow_plain,
    select_points,
    update_background,
)
