"""Smoke test for the pyverbalize extension.

Build and run from the repository root:

    cargo build -p verbalize-python --features extension-module --release
    cp target/release/libpyverbalize.so python/pyverbalize.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyverbalize as pv


def tone(freq, seconds, sr=16000, amp=0.5):
    return [amp * math.sin(2 * math.pi * freq * i / sr) for i in range(int(seconds * sr))]


def main():
    assert pv.binarize(4) == "low"
    assert pv.binarize(5) == "high"
    assert pv.step_relation(100.0, 101.0) == "hold"
    assert pv.step_relation(100.0, 110.0) == "inc"
    assert pv.classify([100.0, 150.0, 100.0]) == "d"
    assert pv.describe_pattern("d", "pitch") == "pitch rises and then falls"

    pitch = [p for p in pv.compute_pitch(tone(200.0, 0.5), 16000) if p is not None]
    assert pitch and all(abs(p - 200.0) < 1.0 for p in pitch), pitch[:5]

    rising = tone(120.0, 0.4) + tone(180.0, 0.4) + tone(260.0, 0.4)
    audio = pv.describe_audio(rising, 16000)
    assert audio["pitch"]["pattern"] == "b", audio

    frames = [[i < 10 for i in range(18)]] * 3
    ids = pv.appeared_from_frames(frames)
    assert ids == pv.au_ids()[:10]

    d = pv.Descriptions(
        audio=(audio["pitch"]["text"], audio["energy"]["text"]),
        facial=[6, 12],
        lingual="I liked it a lot",
    )
    assert d.modalities == "A+F+L"
    para = d.paragraph()
    assert para.startswith("The speaker's pitch increases"), para
    assert para.endswith('The speaker says: "I liked it a lot".'), para
    assert d.separator().count("[SEP]") == len(d.units()) - 1
    assert d.restrict("L").paragraph() == 'The speaker says: "I liked it a lot".'

    prompt = d.prompt()
    assert prompt.endswith("Which sentiment category does the given description belong to?")

    assert pv.parse_answer("The sentiment is high.") == "high"
    assert pv.parse_answer("It could be high or low.") is None
    assert pv.finalize_prediction("I cannot tell.", "high", 7) == ("low", "fallback_incorrect")

    assert pv.macro_f1(["high", "low"], ["high", "low"]) == 1.0
    folds = dict(pv.make_folds([f"p{i}" for i in range(10)], 5, 0))
    assert sorted(folds.values()) == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
    assert pv.validation_boundary(10) == 8

    print("pyverbalize smoke test passed")


if __name__ == "__main__":
    main()
