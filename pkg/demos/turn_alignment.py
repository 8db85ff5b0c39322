"""
Walkthrough: find speaker turns in a long recording from a noisy recognizer.

The reference transcript knows who spoke but not when; the recognizer
output knows when but makes errors. Aligning the two syllable strings,
keeping long exact runs as anchors, and reading the times of each turn's
aligned syllables gives the turn spans. Pauses of 0.5 s or more then cut
turns into utterances.

    python demos/turn_alignment.py
"""

import numpy as np

from uttgenre import align
from uttgenre.synth import generate_transcripts

ref, hyp, truth = generate_transcripts(45, error_rate=0.1, seed=4)
print(f"reference: {len(ref.turns)} turns, {len(ref.symbols)} syllables; "
      f"hypothesis: {len(hyp)} syllables with {truth.edits}")

script = align.align_sequences(ref.symbols, hyp.symbols)
print(f"\nedit distance {script.distance}; first 60 steps:\n  {script.text[:60]}")

anchors = align.select_anchors(script, a_min=5)
lengths = [a.length for a in anchors]
print(f"\n{len(anchors)} anchors of >= 5 matched syllables "
      f"(median length {int(np.median(lengths))}, longest {max(lengths)})")
segments = align.partition(script, anchors, hyp, len(ref.symbols))
print(f"cutting at anchor centres gives {len(segments)} independently alignable segments")

loc = align.locate_turns(ref, hyp, script)
err = [max(abs(s.start_s - truth.turn_spans[s.turn_index][0]),
           abs(s.end_s - truth.turn_spans[s.turn_index][1])) for s in loc.spans]
print(f"\nlocated {len(loc.spans)} turns, omitted {len(loc.omitted)}; "
      f"worst boundary error {max(err):.2f} s, "
      f"{np.mean(np.array(err) <= 0.5):.0%} of turns within 0.5 s")
for s in loc.spans[:4]:
    t0, t1 = truth.turn_spans[s.turn_index]
    utts = align.segment_turns(align.turn_syllable_times(s, hyp))
    print(f"  turn {s.turn_index:<2} {s.speaker:<9} {s.start_s:7.2f}-{s.end_s:7.2f} s "
          f"(true {t0:7.2f}-{t1:7.2f}), {len(utts)} utterances")
