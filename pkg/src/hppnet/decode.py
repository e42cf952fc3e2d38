"""Posteriorgram to note events, onset-gated as in Onsets and Frames."""
from __future__ import annotations

import numpy as np

from .midi import MIN_PITCH, NoteEvent, write_midi  # noqa: F401 - re-exported

ONSET_THRESHOLD = 0.4
FRAME_THRESHOLD = 0.4


def decode(post, onset_thresh: float = ONSET_THRESHOLD, frame_thresh: float = FRAME_THRESHOLD,
           frame_period: float | None = None) -> list[NoteEvent]:
    """Turn onset/frame/velocity probabilities ([T, 88] each) into notes.

    A note starts on a rising onset edge, is held while the frame probability
    stays at or above ``frame_thresh``, and ends at the first frame after the
    start where the frame drops or a new onset edge fires. Frame activity
    with no onset edge yields nothing. The offset head is not consulted.
    """
    onset = np.asarray(post.onset)
    frame = np.asarray(post.frame)
    vel = np.asarray(post.velocity)
    fp = post.frame_period if frame_period is None else frame_period
    T, K = onset.shape
    on = onset >= onset_thresh
    rising = on.copy()
    rising[1:] &= ~on[:-1]
    active = frame >= frame_thresh

    notes = []
    for k in range(K):
        starts = np.flatnonzero(rising[:, k])
        for s in starts:
            e = s + 1
            while e < T and active[e, k] and not rising[e, k]:
                e += 1
            v = int(np.clip(np.floor(vel[s, k] * 127 + 0.5), 1, 127))
            notes.append(NoteEvent(MIN_PITCH + k, s * fp, e * fp, v))
    notes.sort(key=lambda n: (n.onset_time, n.pitch))
    return notes
