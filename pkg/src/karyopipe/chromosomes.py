"""Chromosome class vocabulary and karyogram grouping.

The 24 real classes are the autosomes "1".."22" plus "X" and "Y"; "Unknown"
is a reserved extra label for unclassified instances. Probability vectors are
indexed in CLASSES order.
"""

from __future__ import annotations

CLASSES: tuple[str, ...] = tuple(str(i) for i in range(1, 23)) + ("X", "Y")
UNKNOWN = "Unknown"

CLASS_INDEX: dict[str, int] = {label: i for i, label in enumerate(CLASSES)}

# Karyogram rows follow the conventional size groups.
KARYOGRAM_GROUPS: tuple[str, ...] = (
    "1-3", "4-5", "6-12", "13-15", "16-18", "19-22", "X", "Y", "Unknown",
)

_GROUP_BY_AUTOSOME = {}
for _name, _lo, _hi in (("1-3", 1, 3), ("4-5", 4, 5), ("6-12", 6, 12),
                        ("13-15", 13, 15), ("16-18", 16, 18), ("19-22", 19, 22)):
    for _c in range(_lo, _hi + 1):
        _GROUP_BY_AUTOSOME[str(_c)] = _name


def karyogram_group(label: str) -> str:
    """Map any class label (or Unknown) to its karyogram group row."""
    if label in ("X", "Y", UNKNOWN):
        return label if label != UNKNOWN else "Unknown"
    group = _GROUP_BY_AUTOSOME.get(label)
    if group is None:
        raise ValueError(f"unknown chromosome class {label!r}")
    return group


def is_valid_class(label: str) -> bool:
    return label in CLASS_INDEX or label == UNKNOWN


def uniform_probs() -> list[float]:
    """Maximum-entropy probability vector over the 24 real classes."""
    return [1.0 / len(CLASSES)] * len(CLASSES)


def asserted_probs(label: str) -> list[float]:
    """Near-uniform vector with its argmax at a user-asserted class label.

    Used when a human fixes a class during review: the distribution is not a
    model output, so it stays almost flat while still electing the chosen
    label under the argmax rule.
    """
    if label == UNKNOWN:
        return uniform_probs()
    n = len(CLASSES)
    probs = [1.0 / (n + 1)] * n
    probs[CLASS_INDEX[label]] = 2.0 / (n + 1)
    return probs
