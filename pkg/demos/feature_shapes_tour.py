"""Show every feature representation the pipeline knows for one clip."""
import tempfile

import numpy as np

from talkover.audio import AudioChannel
from talkover.features import (PROFILES, LayeredEmbedding, load_embeddings,
                               mfcc, spectrogram, write_embeddings)
from talkover.overlap import CandidateClip

RATE = 16000

def main():
    # ten seconds, interrupter holding a 1 kHz tone over a silent room
    t = np.arange(10 * RATE) / RATE
    clip = CandidateClip(
        "tone_demo", "m0", "x", 5.0,
        AudioChannel(np.zeros(10 * RATE), RATE, "mix"),
        AudioChannel(0.3 * np.sin(2 * np.pi * 1000.0 * t), RATE, "x"),
    )

    cepstra = mfcc(clip)
    print("mfcc: %s  (both channels stacked, 40 coefficients each)"
          % (cepstra.shape,))

    spec = spectrogram(clip)
    print("spectrogram: %s" % (spec.shape,))
    peak = int(np.argmax(spec[257:, spec.shape[1] // 2]))
    hz = peak * RATE / 512.0
    print("  interrupter-channel peak at bin %d = %.0f Hz" % (peak, hz))

    for name, profile in sorted(PROFILES.items()):
        print("%s embeddings: %d layers x %d dims" % (name, profile.layers, profile.dim))

    profile = PROFILES["tiny"]
    data = np.random.default_rng(0).normal(
        0, 1, (profile.channels, profile.layers, profile.dim, profile.frames))
    emb = LayeredEmbedding(data.astype(np.float32), profile)
    with tempfile.NamedTemporaryFile(suffix=".sie") as fh:
        write_embeddings(fh.name, emb)
        back = load_embeddings(fh.name, profile)
        print("embedding container round trip: %s, intact %s"
              % (back.data.shape, bool(np.array_equal(back.data, emb.data))))

if __name__ == "__main__":
    main()
