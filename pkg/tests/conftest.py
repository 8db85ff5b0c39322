import numpy as np
import pytest

from uttgenre import features, synth
from uttgenre.corpus import FrameTrack, Utterance


def make_utt(uid, sid, dur, chars, pitch, intensity=None, hop=0.01, speaker="therapist"):
    pitch = np.asarray(pitch, dtype=float)
    if intensity is None:
        intensity = np.full(pitch.size, 60.0)
    return Utterance(uid, sid, speaker, float(dur), int(chars),
                     FrameTrack(pitch, hop), FrameTrack(np.asarray(intensity, float), hop))


def adjusted_rand(a, b):
    """Adjusted Rand index from the contingency table (independent helper)."""
    a = np.unique(a, return_inverse=True)[1]
    b = np.unique(b, return_inverse=True)[1]
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    comb = lambda x: x * (x - 1) / 2
    sum_ij = comb(table).sum()
    sa = comb(table.sum(axis=1)).sum()
    sb = comb(table.sum(axis=0)).sum()
    expected = sa * sb / comb(a.size)
    top = 0.5 * (sa + sb)
    return 1.0 if top == expected else (sum_ij - expected) / (top - expected)


@pytest.fixture(scope="session")
def small_spec():
    base = synth.preset("standard")
    return synth.PlantSpec(genres=base.genres, sessions=30, n_high=16, therapists=10,
                           utterances_mean=80, utterances_sd=15, utterances_min=30)


@pytest.fixture(scope="session")
def small_corpus(small_spec):
    return synth.generate(small_spec, seed=11)


@pytest.fixture(scope="session")
def small_table(small_corpus):
    return features.compute_features(small_corpus[0])


# one summary line per acceptance criterion, shown at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
