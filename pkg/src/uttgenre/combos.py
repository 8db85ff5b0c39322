"""Feature combinations swept by the genre miner."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

GROUP_A = ("d", "sr", "p_mu", "i_mu")
PITCH_PAIR = ("p_std", "p_iqr")
INTENSITY_PAIR = ("i_std", "i_iqr")
GROUP_B = (PITCH_PAIR, INTENSITY_PAIR)


@dataclass(frozen=True, order=True)
class FeatureCombo:
    """
    An ordered set of feature parameters clustered together.

    Group "a" combos are subsets of the four mean-level parameters; group
    "b" combos are built from the indivisible (std, iqr) pairs. ``members``
    is the flattened feature list in canonical order.
    """

    group: str
    members: tuple

    def __post_init__(self):
        if not self.members:
            raise ValueError("empty feature combination")
        if self.group == "a":
            if not set(self.members) <= set(GROUP_A):
                raise ValueError(f"group a combo with foreign members {self.members}")
        elif self.group == "b":
            pairs = [self.members[i:i + 2] for i in range(0, len(self.members), 2)]
            if len(self.members) % 2 or any(tuple(p) not in GROUP_B for p in pairs):
                raise ValueError(f"group b combo must consist of whole pairs: {self.members}")
        else:
            raise ValueError(f"unknown combo group {self.group!r}")
        if len(set(self.members)) != len(self.members):
            raise ValueError(f"repeated member in {self.members}")

    def __len__(self):
        return len(self.members)

    @property
    def name(self):
        return "+".join(self.members)

    @classmethod
    def parse(cls, name):
        members = tuple(m.strip() for m in name.split("+") if m.strip())
        group = "a" if set(members) <= set(GROUP_A) else "b"
        return cls(group, members)


def enumerate_combos():
    """All 15 group-a subsets and 3 group-b pair combinations, in canonical order."""
    out = []
    for k in range(1, len(GROUP_A) + 1):
        for sub in combinations(GROUP_A, k):
            out.append(FeatureCombo("a", sub))
    for k in range(1, len(GROUP_B) + 1):
        for sub in combinations(GROUP_B, k):
            out.append(FeatureCombo("b", tuple(m for pair in sub for m in pair)))
    return out


def combo_index(combo):
    return enumerate_combos().index(combo)
