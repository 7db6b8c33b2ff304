"""Pitch-class and chord-name conventions shared across the toolkit.

Pitch classes are integers 0..11 with 0 = C; enharmonic spellings collapse
to one class. Two spelling tables exist: captions use the flat-side table
(Db, Eb, Gb, Ab, Bb), while the predictor wire format uses sharps so that
round-trips through :mod:`musekit.verbalize` are byte-stable.
"""

from __future__ import annotations

PITCH_CLASS_COUNT = 12

FLAT_NAMES = ("C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B")
SHARP_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")

_NATURALS = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

# Chord vocabulary: quality name -> intervals above the root (semitones).
CHORD_INTERVALS: dict[str, tuple[int, ...]] = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "7": (0, 4, 7, 10),
    "maj7": (0, 4, 7, 11),
    "min7": (0, 3, 7, 10),
    "6": (0, 4, 7, 9),
    "min6": (0, 3, 7, 9),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "sus2": (0, 2, 7),
    "sus4": (0, 5, 7),
}

CHORD_TYPES: tuple[str, ...] = tuple(CHORD_INTERVALS)

# Suffix appearing after the root in a chord name ("" = plain major).
TYPE_SUFFIX: dict[str, str] = {
    "maj": "",
    "min": "m",
    "7": "7",
    "maj7": "maj7",
    "min7": "m7",
    "6": "6",
    "min6": "m6",
    "dim": "dim",
    "aug": "aug",
    "sus2": "sus2",
    "sus4": "sus4",
}

_SUFFIX_TO_TYPE = {suffix: ctype for ctype, suffix in TYPE_SUFFIX.items()}

# Binary major/minor reduction used by the CMOT metric (e.g. D, D6, D7,
# Dmaj7 all count as major).
MAJOR_LIKE = frozenset({"maj", "6", "7", "maj7", "aug", "sus2", "sus4"})
MINOR_LIKE = frozenset({"min", "min6", "min7", "dim"})


def pitch_class_name(pc: int, *, flats: bool = True) -> str:
    """Spell a pitch class; flats for caption text, sharps for wire formats."""
    table = FLAT_NAMES if flats else SHARP_NAMES
    return table[pc % PITCH_CLASS_COUNT]


def parse_pitch_class(name: str) -> int:
    """Parse a note name like ``Bb`` or ``F#`` into a pitch class."""
    if not name or name[0] not in _NATURALS:
        raise ValueError(f"invalid note name: {name!r}")
    pc = _NATURALS[name[0]]
    for accidental in name[1:]:
        if accidental == "#":
            pc += 1
        elif accidental == "b":
            pc -= 1
        else:
            raise ValueError(f"invalid accidental in note name: {name!r}")
    return pc % PITCH_CLASS_COUNT


def chord_name(root: int, ctype: str, *, flats: bool = True) -> str:
    """Render ``(root, ctype)`` as a chord symbol, e.g. ``(9, 'min') -> 'Am'``."""
    if ctype not in TYPE_SUFFIX:
        raise ValueError(f"unknown chord type: {ctype!r}")
    return pitch_class_name(root, flats=flats) + TYPE_SUFFIX[ctype]


def parse_chord_name(token: str) -> tuple[int, str]:
    """Parse a chord symbol into ``(root pitch class, chord type)``.

    Grammar: root letter A-G, optional single ``#``/``b``, then one of the
    known type suffixes (empty suffix means major).
    """
    if not token or token[0] not in _NATURALS:
        raise ValueError(f"invalid chord root in {token!r}")
    idx = 1
    if len(token) > 1 and token[1] in "#b":
        idx = 2
    root = parse_pitch_class(token[:idx])
    suffix = token[idx:]
    if suffix not in _SUFFIX_TO_TYPE:
        raise ValueError(f"unknown chord suffix {suffix!r} in {token!r}")
    return root, _SUFFIX_TO_TYPE[suffix]


def reduce_major_minor(ctype: str) -> str:
    """Collapse a chord type to the binary major/minor split."""
    if ctype in MAJOR_LIKE:
        return "major"
    if ctype in MINOR_LIKE:
        return "minor"
    raise ValueError(f"unknown chord type: {ctype!r}")
