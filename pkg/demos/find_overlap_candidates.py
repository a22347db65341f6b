"""Walk through candidate detection on a synthetic three-person meeting.

The meeting is 110 seconds long. Two of the speech onsets are engineered
to pass every gate, the rest trip one of them, so the printed tally shows
the whole decision surface of the detector.
"""
import argparse
import os

import numpy as np

from talkover.audio import AudioChannel, MeetingAudio, write_wav
from talkover.overlap import (VadParams, detect, export_clip,
                              heuristic_floor_outcome, vad)
from talkover.synth import make_meeting_audio

def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=None,
                    help="directory for exported clip WAVs (skip export if unset)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    tracks = make_meeting_audio(args.seed)
    channels = tuple(AudioChannel(tracks[name], 16000, name)
                     for name in sorted(tracks))
    meeting = MeetingAudio(channels, "demo")
    print("meeting %r: %d channels, %.0f s"
          % (meeting.meeting_id, len(channels), meeting.duration_s))

    params = VadParams()
    segments = []
    for ch in channels:
        segs = vad(ch, params)
        segments.append(segs)
        spans = ", ".join("%.1f-%.1f" % (s.start_s, s.end_s) for s in segs)
        print("  %-6s speaks at %s" % (ch.participant_id, spans))

    result = detect(meeting, segments)
    print("\n%d candidate clips" % len(result.candidates))
    for reason in sorted(result.rejections):
        print("  rejected %-22s %d" % (reason, result.rejections[reason]))

    for desc in result.candidates:
        clip = export_clip(desc, meeting)
        outcome = heuristic_floor_outcome(clip)
        print("\n%s: %s interrupts at %.1f s, weak floor label %r"
              % (desc.clip_id, desc.interrupter_id, desc.onset_s, outcome))
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, desc.clip_id + ".wav")
            write_wav(path, np.stack([clip.left.samples, clip.right.samples], axis=1))
            print("  wrote %s" % path)

if __name__ == "__main__":
    main()
